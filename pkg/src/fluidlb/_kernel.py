"""Compiled time-stepping loop for the fluid simulator.

Pure-scalar numba code; the readable reference lives in sim.py (`step`), and
an equivalence test pins the two together. Families, policies, and the
per-step recipe must stay in lockstep with sim.py.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SQRT, HYPERBOLIC, AFFINE = 0, 1, 2
DGD, LW, LL, GMSR = 0, 1, 2, 3
POLICY_CODES = {"dgd": DGD, "lw": LW, "ll": LL, "gmsr": GMSR}

_LOG2 = math.log(2.0)
_SNAP_TOL = 1e-14
_DRIFT_TOL = 1e-12


@njit(cache=True)
def _log_cosh(x):
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - _LOG2


@njit(cache=True)
def _logistic(u):
    if u >= 0.0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


@njit(cache=True)
def _rate(fam, p1, p2, n):
    if fam == SQRT:
        return math.sqrt(p1 + p2 * n) - math.sqrt(p1)
    if fam == HYPERBOLIC:
        return (n + _log_cosh(p1) - _log_cosh(p1 - n)) / (2.0 * p2)
    return p1 * n


@njit(cache=True)
def _deriv(fam, p1, p2, n):
    if fam == SQRT:
        return p2 / (2.0 * math.sqrt(p1 + p2 * n))
    if fam == HYPERBOLIC:
        return _logistic(2.0 * (p1 - n)) / p2
    return p1


@njit(cache=True)
def _project_row_simplex(z, present, buf, out):
    """Sort-and-threshold simplex projection of one row (present entries)."""
    nb = z.shape[0]
    cnt = 0
    for j in range(nb):
        if present[j]:
            buf[cnt] = z[j]
            cnt += 1
    u = np.sort(buf[:cnt])  # ascending; walk from the top
    cum = 0.0
    theta = 0.0
    for k in range(cnt):
        v = u[cnt - 1 - k]
        cum += v
        theta = (cum - 1.0) / (k + 1)
        if k == cnt - 1 or theta >= u[cnt - 2 - k]:
            break
    support = 0
    total = 0.0
    for j in range(nb):
        if present[j]:
            w = z[j] - theta
            if w < _SNAP_TOL:  # includes the crumb snap to exact zero
                w = 0.0
            else:
                support += 1
            out[j] = w
            total += w
        else:
            out[j] = 0.0
    err = total - 1.0
    if err != 0.0 and abs(err) <= _DRIFT_TOL and support > 0:
        fix = err / support
        for j in range(nb):
            if out[j] > 0.0:
                out[j] -= fix
                if out[j] < 0.0:
                    out[j] = 0.0


@njit(cache=True)
def integrate(
    n_steps,
    dt,
    lam,
    tau,
    present,
    fam,
    p1,
    p2,
    N0,
    x0,
    step_eta,
    policy,
    clip_lim,
    Nstar,
    xstar,
    has_ref,
    lag_m,
    frac,
    stride,
    series_sumN,
    series_total,
    series_errN,
    series_errx,
    traj_t,
    traj_N,
    traj_x,
    traj_inflight,
    out_N,
    out_x,
):
    """Euler integration of the workload/routing dynamics with delay buffers.

    Fills the per-step series and downsampled trajectory arrays; returns -1 on
    success or the step index where a non-finite state was detected.
    """
    F, B = x0.shape
    L = 2
    for i in range(F):
        for j in range(B):
            if present[i, j] and lag_m[i, j] + 2 > L:
                L = lag_m[i, j] + 2

    xr = np.empty((L, F, B))
    Nr = np.empty((L, B))
    for r in range(L):
        for i in range(F):
            for j in range(B):
                xr[r, i, j] = x0[i, j]
        for j in range(B):
            Nr[r, j] = N0[j]

    x = x0.copy()
    N = N0.copy()
    inflight = np.zeros((F, B))
    for i in range(F):
        for j in range(B):
            if present[i, j]:
                inflight[i, j] = lam[i] * x0[i, j] * tau[i, j]

    inflow = np.empty(B)
    Nnew = np.empty(B)
    xnew = np.empty((F, B))
    z = np.empty(B)
    buf = np.empty(B)

    # record state at t = 0
    s_n = 0.0
    s_fl = 0.0
    for j in range(B):
        s_n += N[j]
    for i in range(F):
        for j in range(B):
            s_fl += inflight[i, j]
    series_sumN[0] = s_n
    series_total[0] = s_n + s_fl
    if has_ref:
        e_n = 0.0
        e_x = 0.0
        for j in range(B):
            e_n += (N[j] - Nstar[j]) ** 2
        for i in range(F):
            for j in range(B):
                e_x += (x[i, j] - xstar[i, j]) ** 2
        series_errN[0] = math.sqrt(e_n)
        series_errx[0] = math.sqrt(e_x)
    trow = 0
    traj_t[0] = 0.0
    for j in range(B):
        traj_N[0, j] = N[j]
    for i in range(F):
        for j in range(B):
            traj_x[0, i, j] = x[i, j]
    traj_inflight[0] = s_fl
    trow = 1

    for n in range(n_steps):
        # inflow from delayed routing, then the Euler workload update
        for j in range(B):
            inflow[j] = 0.0
        for i in range(F):
            for j in range(B):
                if present[i, j]:
                    m = lag_m[i, j]
                    f = frac[i, j]
                    r0 = (n - m) % L
                    r1 = (n - m - 1) % L
                    xd = (1.0 - f) * xr[r0, i, j] + f * xr[r1, i, j]
                    inflow[j] += lam[i] * xd
        for j in range(B):
            v = N[j] + dt * (inflow[j] - _rate(fam[j], p1[j], p2[j], N[j]))
            Nnew[j] = v if v > 0.0 else 0.0

        # routing update from backend states delayed by the arc latencies
        for i in range(F):
            if policy == DGD:
                for j in range(B):
                    if present[i, j]:
                        m = lag_m[i, j]
                        f = frac[i, j]
                        r0 = (n - m) % L
                        r1 = (n - m - 1) % L
                        nd = (1.0 - f) * Nr[r0, j] + f * Nr[r1, j]
                        d = _deriv(fam[j], p1[j], p2[j], nd)
                        # deep in a saturated plateau l' underflows to zero
                        g = (1.0 / d if d > 0.0 else np.inf) + tau[i, j]
                        if g > clip_lim[i]:
                            g = clip_lim[i]
                        z[j] = x[i, j] - step_eta[i] * g
                    else:
                        z[j] = 0.0
                _project_row_simplex(z, present[i], buf, xnew[i])
            else:
                best = -1
                best_score = np.inf
                for j in range(B):
                    if not present[i, j]:
                        continue
                    m = lag_m[i, j]
                    f = frac[i, j]
                    r0 = (n - m) % L
                    r1 = (n - m - 1) % L
                    nd = (1.0 - f) * Nr[r0, j] + f * Nr[r1, j]
                    if policy == LW:
                        score = nd
                    elif policy == LL:
                        if nd < 1e-12:
                            d0 = _deriv(fam[j], p1[j], p2[j], 0.0)
                            lat = 1.0 / d0 if d0 > 0.0 else np.inf
                        else:
                            r = _rate(fam[j], p1[j], p2[j], nd)
                            lat = nd / r if r > 0.0 else np.inf
                        score = tau[i, j] + lat
                    else:  # GMSR: largest marginal rate
                        score = -_deriv(fam[j], p1[j], p2[j], nd)
                    if score < best_score:
                        best_score = score
                        best = j
                for j in range(B):
                    xnew[i, j] = 1.0 if j == best else 0.0

        # in-flight bookkeeping: exact window integral of the interpolant,
        # updated incrementally (head slice added, tail slice removed)
        for i in range(F):
            for j in range(B):
                if not present[i, j]:
                    continue
                m = lag_m[i, j]
                f = frac[i, j]
                r0 = (n - m) % L
                r1 = (n - m - 1) % L
                rp = (n - m + 1) % L
                xu = (1.0 - f) * xr[r0, i, j] + f * xr[r1, i, j]
                xu1 = (1.0 - f) * xr[rp, i, j] + f * xr[r0, i, j]
                head = dt * 0.5 * (x[i, j] + xnew[i, j])
                tail = dt * 0.5 * (f * (xu + xr[r0, i, j]) + (1.0 - f) * (xr[r0, i, j] + xu1))
                inflight[i, j] += lam[i] * (head - tail)

        # commit the step
        rn = (n + 1) % L
        for j in range(B):
            N[j] = Nnew[j]
            Nr[rn, j] = Nnew[j]
        for i in range(F):
            for j in range(B):
                x[i, j] = xnew[i, j]
                xr[rn, i, j] = xnew[i, j]

        s_n = 0.0
        s_fl = 0.0
        for j in range(B):
            s_n += N[j]
        for i in range(F):
            for j in range(B):
                s_fl += inflight[i, j]
        series_sumN[n + 1] = s_n
        series_total[n + 1] = s_n + s_fl
        if has_ref:
            e_n = 0.0
            e_x = 0.0
            for j in range(B):
                e_n += (N[j] - Nstar[j]) ** 2
            for i in range(F):
                for j in range(B):
                    e_x += (x[i, j] - xstar[i, j]) ** 2
            series_errN[n + 1] = math.sqrt(e_n)
            series_errx[n + 1] = math.sqrt(e_x)
        if not math.isfinite(s_n + s_fl):
            return n + 1

        if (n + 1) % stride == 0 or n + 1 == n_steps:
            traj_t[trow] = (n + 1) * dt
            for j in range(B):
                traj_N[trow, j] = N[j]
            for i in range(F):
                for j in range(B):
                    traj_x[trow, i, j] = x[i, j]
            traj_inflight[trow] = s_fl
            trow += 1

    for j in range(B):
        out_N[j] = N[j]
    for i in range(F):
        for j in range(B):
            out_x[i, j] = x[i, j]
    return -1
