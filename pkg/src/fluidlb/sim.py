"""Fluid-model time-stepping simulator with per-arc delay buffers.

The workload dynamics are

    dN_j/dt = sum_i lam_i x_ij(t - tau_ij) - l_j(N_j(t)),

integrated by explicit Euler with linear interpolation into ring buffers for
the delayed lookups. Routing updates each step follow the selected policy:

* ``dgd``: projected gradient descent per frontend on the delayed marginal
  costs g_ij = 1/l_j'(N_j(t - tau_ij)) + tau_ij;
* ``lw`` / ``ll`` / ``gmsr``: bang-bang benchmarks sending the frontend's
  entire flow to the backend with the best delayed score.

The discrete gradient step is Pi(x - eta * dt * g) by default so the iterates
track the continuous dynamics as dt -> 0; the literal per-epoch update
Pi(x - eta * g) is available behind ``literal_update`` for comparison.

`run` drives a compiled kernel (see _kernel.py); `step` is the readable
reference implementation, and the two are pinned together by tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rates as _rates
from ._kernel import POLICY_CODES
from ._kernel import integrate as _integrate
from .errors import SimulationDivergedError
from .network import Network
from .simplex import MaskedVector, project_simplex_rows
from .static_routing import StaticSolution

POLICIES = ("dgd", "lw", "ll", "gmsr")
DEFAULT_CLIP = 4.0
TRAJ_MAX_ROWS = 10_000


@dataclass
class SimConfig:
    horizon: float
    policy: str = "dgd"
    eta: np.ndarray | float | None = None  # per frontend; required for dgd
    dt: float | None = None  # default min(1e-3, min tau / 50)
    clip_multiplier: float = DEFAULT_CLIP
    literal_update: bool = False  # use Pi(x - eta g) instead of Pi(x - eta dt g)
    N0: np.ndarray | None = None  # constant history for t <= 0
    x0: np.ndarray | None = None
    metrics_window: float | None = None  # default 4 * max latency
    engine: str = "auto"  # auto | numba | python

    def resolve_dt(self, net: Network) -> float:
        dt = self.dt if self.dt is not None else min(1e-3, net.min_latency() / 50.0)
        if not 0.0 < dt < net.min_latency() / 10.0:
            raise ValueError(
                f"dt={dt} must be positive and below min latency/10 = {net.min_latency() / 10.0}"
            )
        return dt

    def resolve_eta(self, net: Network) -> np.ndarray:
        if self.policy == "dgd":
            if self.eta is None:
                raise ValueError("dgd policy requires step sizes")
            eta = np.asarray(self.eta, dtype=float)
            if eta.shape == ():
                eta = np.full(net.F, float(eta))
            if eta.shape != (net.F,) or not np.all(eta > 0.0):
                raise ValueError("eta must be positive, one value per frontend")
            return eta
        return np.zeros(net.F)


class DelayBuffer:
    """Ring of samples at spacing dt; lookups interpolate linearly.

    Retains enough history to cover the largest lag plus one sample on each
    side, so a lookup at (m, f) steps back is exact at f = 0.
    """

    def __init__(self, initial: np.ndarray, dt: float, max_lag_steps: int):
        self.dt = dt
        self.length = int(max_lag_steps) + 2
        self.ring = np.repeat(initial[None, ...], self.length, axis=0)
        self.step_index = 0

    def append(self, sample: np.ndarray) -> None:
        self.step_index += 1
        self.ring[self.step_index % self.length] = sample

    def lookback(self, m: int, f: float = 0.0) -> np.ndarray:
        """Sample at (m + f) steps before the newest one, 0 <= f < 1."""
        if m + 1 >= self.length:
            raise ValueError("lookback beyond retained window")
        r0 = (self.step_index - m) % self.length
        r1 = (self.step_index - m - 1) % self.length
        return (1.0 - f) * self.ring[r0] + f * self.ring[r1]

    def value_at(self, t: float) -> np.ndarray:
        back = (self.step_index * self.dt - t) / self.dt
        m = int(np.floor(back))
        if m < 0:
            raise ValueError("lookup ahead of the newest sample")
        return self.lookback(m, back - m)


@dataclass
class SimState:
    t: float
    N: np.ndarray
    x: np.ndarray
    x_buf: DelayBuffer
    N_buf: DelayBuffer
    inflight: np.ndarray  # per arc, lam_i * integral of x over the last tau_ij
    lag_m: np.ndarray  # per arc, integer part of tau/dt
    lag_f: np.ndarray  # fractional part

    def total_requests(self) -> float:
        return float(self.N.sum() + self.inflight.sum())


def init_state(net: Network, cfg: SimConfig, sol: StaticSolution | None = None) -> SimState:
    dt = cfg.resolve_dt(net)
    if cfg.x0 is not None:
        x0 = np.array(cfg.x0, dtype=float)
    elif sol is not None:
        x0 = sol.x.copy()
    else:
        x0 = np.where(net.mask, 1.0, 0.0)
        x0 /= x0.sum(axis=1, keepdims=True)
    if cfg.N0 is not None:
        N0 = np.array(cfg.N0, dtype=float)
    elif sol is not None:
        N0 = sol.N.copy()
    else:
        N0 = np.zeros(net.B)
    if np.any(N0 < 0.0):
        raise ValueError("initial workloads must be nonnegative")

    lag = np.where(net.mask, net.tau / dt, 0.0)
    lag_m = np.floor(lag).astype(np.int64)
    lag_f = lag - lag_m
    max_lag = int(lag_m.max())
    return SimState(
        t=0.0,
        N=N0,
        x=x0,
        x_buf=DelayBuffer(x0, dt, max_lag),
        N_buf=DelayBuffer(N0, dt, max_lag),
        inflight=np.where(net.mask, net.lam[:, None] * x0 * net.tau, 0.0),
        lag_m=lag_m,
        lag_f=lag_f,
    )


def _delayed_arc_values(state: SimState, buf: DelayBuffer, net: Network) -> np.ndarray:
    """Per-arc lookups of a buffer at t - tau_ij (x-buffer) or N at t - tau_ij."""
    out = np.zeros((net.F, net.B))
    fr = state.lag_f
    L = buf.length
    s = buf.step_index
    r0 = (s - state.lag_m) % L
    r1 = (s - state.lag_m - 1) % L
    if buf.ring.ndim == 3:  # x-ring: (L, F, B)
        ii, jj = np.nonzero(net.mask)
        out[ii, jj] = (1.0 - fr[ii, jj]) * buf.ring[r0[ii, jj], ii, jj] + fr[ii, jj] * buf.ring[
            r1[ii, jj], ii, jj
        ]
    else:  # N-ring: (L, B); delayed per arc
        ii, jj = np.nonzero(net.mask)
        out[ii, jj] = (1.0 - fr[ii, jj]) * buf.ring[r0[ii, jj], jj] + fr[ii, jj] * buf.ring[
            r1[ii, jj], jj
        ]
    return out


def gradient(
    i: int,
    state: SimState,
    net: Network,
    sol: StaticSolution | None = None,
    clip_multiplier: float = DEFAULT_CLIP,
) -> MaskedVector:
    """Delayed marginal costs g_ij = 1/l_j'(N_j(t - tau_ij)) + tau_ij (seconds).

    Clipped at clip_multiplier * c_i when a static solution is supplied.
    """
    n_del = _delayed_arc_values(state, state.N_buf, net)[i]
    mask = net.mask[i]
    deriv = _rates.deriv_vec(net.fam, net.p1, net.p2, n_del)
    with np.errstate(divide="ignore"):  # l' underflows deep in a plateau
        g = np.where(mask, 1.0 / deriv + net.tau[i], 0.0)
    if sol is not None:
        g = np.where(mask, np.minimum(g, clip_multiplier * sol.c[i]), 0.0)
    return MaskedVector(g, mask.copy())


def route_dgd(
    state: SimState,
    net: Network,
    cfg: SimConfig,
    sol: StaticSolution | None = None,
) -> np.ndarray:
    """One projected-gradient routing update for every frontend."""
    eta = cfg.resolve_eta(net)
    step_eta = eta if cfg.literal_update else eta * cfg.resolve_dt(net)
    g = np.zeros((net.F, net.B))
    for i in range(net.F):
        g[i] = gradient(i, state, net, sol, cfg.clip_multiplier).values
    z = np.where(net.mask, state.x - step_eta[:, None] * g, 0.0)
    return project_simplex_rows(z, net.mask)


def _bang_bang(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.zeros_like(scores)
    masked = np.where(mask, scores, np.inf)
    x[np.arange(scores.shape[0]), np.argmin(masked, axis=1)] = 1.0
    return x


def route_lw(state: SimState, net: Network) -> np.ndarray:
    """All flow to the backend with the lowest delayed workload."""
    return _bang_bang(_delayed_arc_values(state, state.N_buf, net), net.mask)


def route_ll(state: SimState, net: Network) -> np.ndarray:
    """All flow to the backend with the lowest network-plus-serving latency."""
    n_del = _delayed_arc_values(state, state.N_buf, net)
    scores = np.zeros_like(n_del)
    for i in range(net.F):
        for j in np.nonzero(net.mask[i])[0]:
            n = n_del[i, j]
            if n < 1e-12:
                d0 = net.rates[j].deriv(0.0)
                lat = 1.0 / d0 if d0 > 0.0 else np.inf
            else:
                r = net.rates[j].rate(n)
                lat = n / r if r > 0.0 else np.inf
            scores[i, j] = net.tau[i, j] + lat
    return _bang_bang(scores, net.mask)


def route_gmsr(state: SimState, net: Network) -> np.ndarray:
    """All flow to the backend with the greatest delayed marginal rate."""
    n_del = _delayed_arc_values(state, state.N_buf, net)
    scores = np.zeros_like(n_del)
    for i in range(net.F):
        d = _rates.deriv_vec(net.fam, net.p1, net.p2, n_del[i])
        scores[i] = -d
    return _bang_bang(scores, net.mask)


def step(
    state: SimState,
    net: Network,
    cfg: SimConfig,
    sol: StaticSolution | None = None,
) -> SimState:
    """Advance the state by one Euler step (mutates and returns it)."""
    dt = cfg.resolve_dt(net)
    x_del = _delayed_arc_values(state, state.x_buf, net)
    inflow = net.lam @ x_del
    outflow = _rates.rate_vec(net.fam, net.p1, net.p2, state.N)
    n_new = np.maximum(0.0, state.N + dt * (inflow - outflow))

    if cfg.policy == "dgd":
        x_new = route_dgd(state, net, cfg, sol)
    elif cfg.policy == "lw":
        x_new = route_lw(state, net)
    elif cfg.policy == "ll":
        x_new = route_ll(state, net)
    elif cfg.policy == "gmsr":
        x_new = route_gmsr(state, net)
    else:
        raise ValueError(f"unknown policy {cfg.policy!r}")

    # exact window integral of the piecewise-linear interpolant, updated
    # incrementally: add the head slice [t, t+dt], drop the tail slice
    # [t-tau, t-tau+dt] (split at its interior sample point)
    s, L = state.x_buf.step_index, state.x_buf.length
    ii, jj = np.nonzero(net.mask)
    m, f = state.lag_m[ii, jj], state.lag_f[ii, jj]
    ring = state.x_buf.ring
    x_r0 = ring[(s - m) % L, ii, jj]
    xu = (1.0 - f) * x_r0 + f * ring[(s - m - 1) % L, ii, jj]
    xu1 = (1.0 - f) * ring[(s - m + 1) % L, ii, jj] + f * x_r0
    head = dt * 0.5 * (state.x[ii, jj] + x_new[ii, jj])
    tail = dt * 0.5 * (f * (xu + x_r0) + (1.0 - f) * (x_r0 + xu1))
    state.inflight[ii, jj] += net.lam[ii] * (head - tail)

    state.N = n_new
    state.x = x_new
    state.x_buf.append(x_new)
    state.N_buf.append(n_new)
    state.t += dt
    if not np.isfinite(state.total_requests()):
        raise SimulationDivergedError(state.x_buf.step_index, state.t)
    return state


@dataclass
class Metrics:
    gap: float | None  # horizon-average excess over the static optimum
    gap_window: float | None  # same, over the final metrics window
    error_N: float | None  # window average of ||N - N*||_2
    error_x: float | None
    avg_total: float  # horizon average of total requests in the system
    avg_total_second_half: float
    final_N: np.ndarray
    final_x: np.ndarray
    traj_t: np.ndarray = field(repr=False, default=None)
    traj_N: np.ndarray = field(repr=False, default=None)
    traj_x: np.ndarray = field(repr=False, default=None)
    traj_inflight: np.ndarray = field(repr=False, default=None)
    dt: float = 0.0
    n_steps: int = 0

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "gap_window": self.gap_window,
            "error_N": self.error_N,
            "error_x": self.error_x,
            "avg_total": self.avg_total,
            "avg_total_second_half": self.avg_total_second_half,
            "dt": self.dt,
            "n_steps": self.n_steps,
        }


def _window_average(series: np.ndarray, dt: float, window: float) -> float:
    """Trapezoidal time-average of a per-step series over the final window."""
    n = len(series) - 1
    horizon = n * dt
    w = min(window, horizon)
    t_start = horizon - w
    j0 = int(np.ceil(t_start / dt - 1e-12))
    total = float(np.trapezoid(series[j0:], dx=dt))
    if j0 > 0:
        # fractional head piece between t_start and the first full sample
        t_j0 = j0 * dt
        gap_len = t_j0 - t_start
        if gap_len > 1e-15 * max(1.0, horizon):
            f_start = np.interp(t_start, [t_j0 - dt, t_j0], [series[j0 - 1], series[j0]])
            total += 0.5 * (f_start + series[j0]) * gap_len
    return total / w


def run(net: Network, cfg: SimConfig, sol: StaticSolution | None = None) -> Metrics:
    """Integrate to the horizon and compute the run's metrics.

    A static solution is required for the optimality metrics (gap, error_N,
    error_x) and enables gradient clipping.
    """
    dt = cfg.resolve_dt(net)
    n_steps = max(1, int(round(cfg.horizon / dt)))
    eta = cfg.resolve_eta(net)
    step_eta = eta if cfg.literal_update else eta * dt
    clip_lim = (
        cfg.clip_multiplier * sol.c if sol is not None else np.full(net.F, np.inf)
    )
    state = init_state(net, cfg, sol)

    series_sumN = np.zeros(n_steps + 1)
    series_total = np.zeros(n_steps + 1)
    series_errN = np.zeros(n_steps + 1)
    series_errx = np.zeros(n_steps + 1)
    stride = max(1, int(np.ceil((n_steps + 1) / (TRAJ_MAX_ROWS - 1))))
    rows = len(range(0, n_steps + 1, stride)) + (1 if n_steps % stride else 0)
    traj_t = np.zeros(rows)
    traj_N = np.zeros((rows, net.B))
    traj_x = np.zeros((rows, net.F, net.B))
    traj_inflight = np.zeros(rows)
    out_N = np.zeros(net.B)
    out_x = np.zeros((net.F, net.B))

    use_kernel = cfg.engine in ("auto", "numba")
    if cfg.engine not in ("auto", "numba", "python"):
        raise ValueError(f"unknown engine {cfg.engine!r}")
    if use_kernel:
        status = _integrate(
            n_steps,
            dt,
            net.lam,
            net.tau,
            net.mask,
            net.fam,
            net.p1,
            net.p2,
            state.N.copy(),
            state.x.copy(),
            step_eta,
            POLICY_CODES[cfg.policy],
            clip_lim,
            sol.N if sol is not None else np.zeros(net.B),
            sol.x if sol is not None else np.zeros((net.F, net.B)),
            sol is not None,
            state.lag_m,
            state.lag_f,
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
        )
        if status >= 0:
            raise SimulationDivergedError(status, status * dt)
    else:
        _run_python(
            net, cfg, sol, state, n_steps, stride,
            series_sumN, series_total, series_errN, series_errx,
            traj_t, traj_N, traj_x, traj_inflight, out_N, out_x,
        )

    horizon = n_steps * dt
    window = cfg.metrics_window if cfg.metrics_window is not None else 4.0 * net.max_latency()
    avg_total = float(np.trapezoid(series_total, dx=dt)) / horizon
    avg_half = _window_average(series_total, dt, horizon / 2.0)
    gap = gap_window = err_n = err_x = None
    if sol is not None:
        gap = avg_total / sol.opt_value - 1.0
        gap_window = _window_average(series_total, dt, window) / sol.opt_value - 1.0
        err_n = _window_average(series_errN, dt, window)
        err_x = _window_average(series_errx, dt, window)
    return Metrics(
        gap=gap,
        gap_window=gap_window,
        error_N=err_n,
        error_x=err_x,
        avg_total=avg_total,
        avg_total_second_half=avg_half,
        final_N=out_N,
        final_x=out_x,
        traj_t=traj_t,
        traj_N=traj_N,
        traj_x=traj_x,
        traj_inflight=traj_inflight,
        dt=dt,
        n_steps=n_steps,
    )


def _run_python(
    net, cfg, sol, state, n_steps, stride,
    series_sumN, series_total, series_errN, series_errx,
    traj_t, traj_N, traj_x, traj_inflight, out_N, out_x,
):
    """Reference step-by-step loop; mirrors the kernel's recording exactly."""
    has_ref = sol is not None

    def record(idx):
        series_sumN[idx] = state.N.sum()
        series_total[idx] = state.total_requests()
        if has_ref:
            series_errN[idx] = np.linalg.norm(state.N - sol.N)
            series_errx[idx] = np.linalg.norm(state.x - sol.x)

    trow = 0

    def record_traj(n):
        nonlocal trow
        traj_t[trow] = n * state.x_buf.dt
        traj_N[trow] = state.N
        traj_x[trow] = state.x
        traj_inflight[trow] = state.inflight.sum()
        trow += 1

    record(0)
    record_traj(0)
    for n in range(n_steps):
        step(state, net, cfg, sol)
        record(n + 1)
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            record_traj(n + 1)
    out_N[:] = state.N
    out_x[:] = state.x


def oscillation_amplitude(metrics: Metrics, t_lo: float, t_hi: float) -> float:
    """Largest per-backend peak-to-peak swing of N over [t_lo, t_hi]."""
    sel = (metrics.traj_t >= t_lo) & (metrics.traj_t <= t_hi)
    if not sel.any():
        return 0.0
    seg = metrics.traj_N[sel]
    return float((seg.max(axis=0) - seg.min(axis=0)).max())
