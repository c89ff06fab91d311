"""Euclidean projections onto the probability simplex and its tangent cones.

Vectors can carry a presence mask: absent entries model arcs outside the
network (their gradient is conceptually infinite) and are excluded from all
sums and norms; outputs are 0 there. The tangent cone of the simplex at x is

    T(x) = { v : sum_j v_j = 0,  v_j >= 0 wherever x_j = 0 }

restricted to present coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

SIMPLEX_TOL = 1e-9  # membership check tolerance
_DRIFT_TOL = 1e-12  # see project_simplex drift correction
_SNAP_TOL = 1e-14  # projection outputs below this become exact zeros
_SENTINEL = -1e300  # masks absent entries out of vectorized row projections


@dataclass(frozen=True)
class MaskedVector:
    """Values over backend slots plus a present/absent mask."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask must share a shape")

    @staticmethod
    def dense(values) -> "MaskedVector":
        v = np.asarray(values, dtype=float)
        return MaskedVector(v, np.ones(v.shape, dtype=bool))


def _as_mask(n: int, mask) -> np.ndarray:
    if mask is None:
        return np.ones(n, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ValueError("mask shape mismatch")
    return m


def check_simplex(x, mask=None, tol: float = SIMPLEX_TOL) -> None:
    """Raise if x (over present entries) is not a probability vector."""
    x = np.asarray(x, dtype=float)
    m = _as_mask(x.size, mask)
    if not m.any():
        raise ValueError("no present entries")
    xs = x[m]
    if np.any(xs < -tol):
        raise ValueError(f"negative simplex entry {xs.min():.3e}")
    s = xs.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"simplex entries sum to {s!r}, expected 1")
    if np.any(x[~m] != 0.0):
        raise ValueError("absent entries must be zero")


def project_simplex(z, mask=None) -> np.ndarray:
    """Euclidean projection of z onto the probability simplex (present entries).

    Sort-and-threshold method: O(n log n). Absent entries come out as 0.
    """
    z = np.asarray(z, dtype=float)
    out = project_simplex_rows(z[None, :], None if mask is None else np.asarray(mask, dtype=bool)[None, :])
    return out[0]


def project_simplex_rows(z, mask=None) -> np.ndarray:
    """Row-wise simplex projection of a matrix (one simplex per row)."""
    z = np.asarray(z, dtype=float)
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("a row has no present entries")
    work = np.where(mask, z, _SENTINEL)
    u = np.sort(work, axis=1)[:, ::-1]  # descending; sentinels sink to the end
    csum = np.cumsum(u, axis=1)
    ks = np.arange(1, z.shape[1] + 1)
    theta_cand = (csum - 1.0) / ks
    # largest k with u_k > theta_k; equivalently the first k where the next
    # sorted value fails the test (Ye's scan, matching the kernel's loop)
    below = np.empty(z.shape, dtype=bool)
    below[:, :-1] = theta_cand[:, :-1] >= u[:, 1:]
    below[:, -1] = True
    # force the scan to stop no later than the last present entry
    below[np.arange(z.shape[0]), counts - 1] = True
    rho = np.argmax(below, axis=1)
    theta = theta_cand[np.arange(z.shape[0]), rho]
    out = np.maximum(z - theta[:, None], 0.0)
    out[~mask] = 0.0
    # snap float crumbs to exact zero: sub-1e-14 mass is rounding noise, and
    # exact zeros keep tangent-cone active sets (hence solver residuals) crisp
    out[out < _SNAP_TOL] = 0.0
    _kill_drift_rows(out, mask)
    return out


def _kill_drift_rows(out, mask) -> None:
    # long simulations accumulate rounding: fix sums off by at most _DRIFT_TOL,
    # spreading the correction over the positive support to keep zeros exact
    sums = np.where(mask, out, 0.0).sum(axis=1)
    err = sums - 1.0
    for r in np.nonzero((np.abs(err) <= _DRIFT_TOL) & (err != 0.0))[0]:
        support = mask[r] & (out[r] > 0.0)
        out[r, support] -= err[r] / support.sum()
        np.maximum(out[r], 0.0, out=out[r])


def project_tangent_cone(z, x, mask=None, zero_tol: float = 0.0) -> np.ndarray:
    """Project z onto the tangent cone of the simplex at x (present entries).

    Iterative smallest-coordinate pinning: starting from the centered
    candidate, the zero-coordinates of x whose z-value falls below the running
    mean are pinned to 0, smallest value first (ties broken by lowest index).
    O(n log n).
    """
    z = np.asarray(z, dtype=float)
    m = _as_mask(z.size, mask)
    x = np.asarray(x, dtype=float)
    check_simplex(x, m)

    present = np.nonzero(m)[0]
    zp = z[present]
    zero = x[present] <= zero_tol

    total = zp.sum()
    cnt = len(present)
    pinned = np.zeros(len(present), dtype=bool)
    # stable sort keeps index order on ties
    order = np.argsort(zp, kind="stable")
    for pos in order:
        if not zero[pos]:
            continue
        if zp[pos] >= total / cnt:
            break
        pinned[pos] = True
        total -= zp[pos]
        cnt -= 1
    beta = total / cnt

    v = np.zeros_like(z)
    free = present[~pinned]
    v[free] = z[free] - beta
    return v


def project_tangent_cone_masked(z: MaskedVector, x: MaskedVector) -> MaskedVector:
    if not np.array_equal(z.mask, x.mask):
        raise ValueError("z and x must share a mask")
    return MaskedVector(project_tangent_cone(z.values, x.values, z.mask), z.mask)


def oracle_project_tangent_cone(z, x, mask=None, zero_tol: float = 0.0) -> np.ndarray:
    """Exhaustive active-set reference for project_tangent_cone (dim <= 12).

    Enumerates every subset of the zero coordinates of x as the pinned set,
    solves each equality-constrained least squares in closed form
    (v_j = z_j - mean of z over the free set) and returns the cheapest
    feasible candidate.
    """
    z = np.asarray(z, dtype=float)
    m = _as_mask(z.size, mask)
    if m.sum() > 12:
        raise ValueError("oracle limited to 12 present dimensions")
    x = np.asarray(x, dtype=float)
    check_simplex(x, m)

    present = np.nonzero(m)[0]
    zp = z[present]
    zero_pos = [p for p in range(len(present)) if x[present[p]] <= zero_tol]

    best_cost = np.inf
    best_v = None
    for r in range(len(zero_pos) + 1):
        for pin in combinations(zero_pos, r):
            pinned = np.zeros(len(present), dtype=bool)
            pinned[list(pin)] = True
            free = ~pinned
            beta = zp[free].mean()
            vp = np.where(free, zp - beta, 0.0)
            # unpinned zero-coordinates must satisfy v >= 0 (KKT feasibility)
            ok = all(vp[p] >= -1e-12 for p in zero_pos if not pinned[p])
            if not ok:
                continue
            cost = float(np.sum((vp - zp) ** 2))
            if cost < best_cost - 1e-15:
                best_cost = cost
                best_v = vp
    v = np.zeros_like(z)
    v[present] = best_v
    return v
