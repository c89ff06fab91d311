"""Random instance generation and the batch experiment harnesses.

Instance recipe (complete bipartite, hyperbolic backends):

* |F| = max(1, Poisson(mu_f)), |B| = max(2, Poisson(mu_b));
* backend j has k_j = max(1, Poisson(5)) servers, each taking s_j seconds
  per request with s_j lognormal with mean 1 s (sigma_ln = 0.5, so
  mu_ln = -sigma_ln^2/2);
* frontends and backends sit at uniform points on the unit sphere;
  tau_ij = d_ij / pi * tau_max from the great-circle distance d_ij (floored
  at tau_max/1000 so time steps stay sane);
* arrival split y uniform on the simplex; lam_i = y_i * rho * total capacity.

Randomness is numpy PCG64 seeded through SeedSequence spawn keys: instance
for replication r uses (seed, spawn_key=(r,)), its initial conditions use
(seed, spawn_key=(r, 1)). Identical seeds reproduce bit-identical instances
and metrics regardless of worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DisconnectedGraphError, FluidLBError
from .network import Network
from .rates import HyperbolicRate
from .sim import Metrics, SimConfig, run
from .stability import critical_step_sizes, stability_condition_lhs
from .static_routing import StaticSolution, solve_static

SERVER_POISSON_MEAN = 5.0
LOGNORMAL_SIGMA = 0.5
TAU_FLOOR_FRACTION = 1e-3
BENCHMARK_POLICIES = ("lw", "ll", "gmsr")


@dataclass
class ExperimentParams:
    mu_f: float = 2.0
    mu_b: float = 2.0
    tau_max: float = 1.0
    rho: float = 0.9
    alphas: tuple[float, ...] = (0.5, 2.0)  # step-size multipliers (local runs)
    dgd_alphas: tuple[float, ...] = (0.01, 0.05, 0.1, 0.5)  # tried by benchmarks
    replications: int = 10
    horizon: float = 100.0
    seed: int = 0
    dt: float | None = None
    mix_weight: float = 0.1  # initial-state perturbation weight (local runs)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("utilization must lie in (0, 1)")
        if self.tau_max <= 0.0:
            raise ValueError("tau_max must be positive")


def _sphere_points(rng: np.random.Generator, n: int) -> np.ndarray:
    p = rng.standard_normal((n, 3))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _great_circle(u: np.ndarray, v: np.ndarray) -> float:
    # atan2 of cross/dot magnitudes: robust near coincident and antipodal points
    cross = np.linalg.norm(np.cross(u, v))
    return float(np.arctan2(cross, float(u @ v)))


def generate_instance(params: ExperimentParams, seed) -> Network:
    """Draw one random complete bipartite network; deterministic given seed."""
    rng = np.random.default_rng(seed)
    nf = max(1, int(rng.poisson(params.mu_f)))
    nb = max(2, int(rng.poisson(params.mu_b)))
    servers = np.maximum(1, rng.poisson(SERVER_POISSON_MEAN, nb)).astype(float)
    s = rng.lognormal(-(LOGNORMAL_SIGMA**2) / 2.0, LOGNORMAL_SIGMA, nb)
    front_pts = _sphere_points(rng, nf)
    back_pts = _sphere_points(rng, nb)
    y = rng.exponential(1.0, nf)
    y /= y.sum()

    rates = [HyperbolicRate(k=k, s=sj) for k, sj in zip(servers, s)]
    lam = y * params.rho * float(np.sum(servers / s))
    arcs = []
    for i in range(nf):
        for j in range(nb):
            d = _great_circle(front_pts[i], back_pts[j])
            arcs.append((i, j, max(d / np.pi, TAU_FLOOR_FRACTION) * params.tau_max))
    return Network(nf, nb, arcs, lam, rates)


def mixed_init(
    sol: StaticSolution,
    net: Network,
    seed,
    weight: float = 0.1,
) -> tuple[np.ndarray, np.ndarray]:
    """Initial state (1-w) optimal + w random.

    Random routing rows are uniform on each frontend's simplex (normalized
    exponentials); random workloads are uniform on [0, 2 k_j] for hyperbolic
    backends and on [0, 2 N*_j] otherwise (the server count k_j only exists
    for the hyperbolic family).
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    x_rand = np.where(net.mask, rng.exponential(1.0, (net.F, net.B)), 0.0)
    x_rand /= x_rand.sum(axis=1, keepdims=True)
    hi = np.array(
        [2.0 * r.k if isinstance(r, HyperbolicRate) else 2.0 * n
         for r, n in zip(net.rates, sol.N)]
    )
    n_rand = rng.uniform(0.0, 1.0, net.B) * hi
    x0 = (1.0 - weight) * sol.x + weight * x_rand
    n0 = (1.0 - weight) * sol.N + weight * n_rand
    return n0, x0


def convergence_threshold(sol: StaticSolution) -> float:
    return 0.05 * float(np.linalg.norm(sol.N)) + 0.05


def _step_sizes(sol: StaticSolution, net: Network) -> np.ndarray:
    """Critical step sizes, or a neutral proportional choice when the optimum
    leaves every frontend single-homed (routing locally frozen: any step size
    is locally stable, so there is no critical scale to speak of)."""
    try:
        eta_crit, _ = critical_step_sizes(sol, net)
        return eta_crit
    except DisconnectedGraphError:
        return net.lam / float(net.lam.sum())


# ---------------------------------------------------------------------------
# harnesses
# ---------------------------------------------------------------------------


def _instance_seed(params: ExperimentParams, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(params.seed, spawn_key=(rep,))


def _init_seed(params: ExperimentParams, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(params.seed, spawn_key=(rep, 1))


def _base_row(params: ExperimentParams, rep: int) -> dict:
    return {
        "mu_f": params.mu_f,
        "mu_b": params.mu_b,
        "tau_max": params.tau_max,
        "replication": rep,
    }


def _metrics_fields(m: Metrics | None, sol: StaticSolution | None) -> dict:
    if m is None:
        return {
            "gap": "", "gap_window": "", "error_N": "", "error_x": "",
            "avg_total_second_half": "", "opt_value": "" if sol is None else sol.opt_value,
            "converged": "",
        }
    return {
        "gap": m.gap,
        "gap_window": m.gap_window,
        "error_N": m.error_N,
        "error_x": m.error_x,
        "avg_total_second_half": m.avg_total_second_half,
        "opt_value": sol.opt_value,
        "converged": int(m.error_N < convergence_threshold(sol)),
    }


def _local_rep(params: ExperimentParams, rep: int) -> list[dict]:
    rows = []
    base = _base_row(params, rep)
    try:
        net = generate_instance(params, _instance_seed(params, rep))
        sol = solve_static(net, keep_history=False)
        eta_crit = _step_sizes(sol, net)
        n0, x0 = mixed_init(sol, net, _init_seed(params, rep), params.mix_weight)
    except FluidLBError as e:
        for alpha in params.alphas:
            rows.append(base | {"alpha": alpha, "error": f"{e.kind}: {e}"})
        return rows
    for alpha in params.alphas:
        row = base | {
            "alpha": alpha,
            "lhs_at_eta": stability_condition_lhs(sol, net, alpha * eta_crit),
            "error": "",
        }
        try:
            cfg = SimConfig(
                horizon=params.horizon,
                policy="dgd",
                eta=alpha * eta_crit,
                dt=params.dt,
                N0=n0,
                x0=x0,
            )
            m = run(net, cfg, sol)
            row |= _metrics_fields(m, sol)
        except FluidLBError as e:
            row |= _metrics_fields(None, sol) | {"error": f"{e.kind}: {e}"}
        rows.append(row)
    return rows


def _benchmark_rep(params: ExperimentParams, rep: int) -> list[dict]:
    rows = []
    base = _base_row(params, rep)
    try:
        net = generate_instance(params, _instance_seed(params, rep))
        sol = solve_static(net, keep_history=False)
        eta_crit = _step_sizes(sol, net)
        n0, x0 = mixed_init(sol, net, _init_seed(params, rep), weight=1.0)
    except FluidLBError as e:
        for policy in ("dgd",) + BENCHMARK_POLICIES:
            rows.append(base | {"policy": policy, "error": f"{e.kind}: {e}"})
        return rows

    def run_policy(policy, eta=None):
        cfg = SimConfig(
            horizon=params.horizon, policy=policy, eta=eta, dt=params.dt, N0=n0, x0=x0
        )
        return run(net, cfg, sol)

    best = None
    for alpha in params.dgd_alphas:
        try:
            m = run_policy("dgd", alpha * eta_crit)
        except FluidLBError:
            continue
        if best is None or m.gap_window < best[1].gap_window:
            best = (alpha, m)
    if best is None:
        rows.append(base | {"policy": "dgd", "alpha": "", "error": "all multipliers failed"})
    else:
        rows.append(
            base
            | {"policy": "dgd", "alpha": best[0], "error": ""}
            | _metrics_fields(best[1], sol)
        )
    for policy in BENCHMARK_POLICIES:
        row = base | {"policy": policy, "alpha": "", "error": ""}
        try:
            row |= _metrics_fields(run_policy(policy), sol)
        except FluidLBError as e:
            row |= _metrics_fields(None, sol) | {"error": f"{e.kind}: {e}"}
        rows.append(row)
    return rows


def _worker_count() -> int:
    env = os.environ.get("FLUIDLB_THREADS", "1")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _map_reps(fn, params: ExperimentParams) -> list[dict]:
    reps = range(params.replications)
    workers = min(_worker_count(), params.replications)
    if workers <= 1:
        nested = [fn(params, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            nested = list(pool.map(fn, [params] * params.replications, reps))
    return [row for rows in nested for row in rows]


def _aggregate(rows: list[dict], group_keys: tuple[str, ...], value_keys) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in group_keys), []).append(row)
    out = []
    for key, members in groups.items():
        agg = dict(zip(group_keys, key))
        agg["replication"] = "mean"
        ok = [r for r in members if not r.get("error")]
        for vk in value_keys:
            vals = [float(r[vk]) for r in ok if r.get(vk) != ""]
            agg[vk] = float(np.mean(vals)) if vals else ""
        agg["converged"] = (
            float(np.mean([r["converged"] for r in ok])) if ok else 0.0
        )
        agg["failures"] = len(members) - len(ok)
        out.append(agg)
    return out


def run_local_stability(params: ExperimentParams) -> tuple[list[dict], list[dict]]:
    """Mixed-init runs at each step-size multiplier; rows plus aggregates."""
    rows = _map_reps(_local_rep, params)
    agg = _aggregate(
        rows,
        ("mu_f", "mu_b", "tau_max", "alpha"),
        ("gap", "error_N", "error_x", "avg_total_second_half", "opt_value"),
    )
    return rows, agg


def run_benchmarks(params: ExperimentParams) -> tuple[list[dict], list[dict]]:
    """Random-init policy comparison; DGD reported at its best multiplier."""
    rows = _map_reps(_benchmark_rep, params)
    agg = _aggregate(
        rows,
        ("mu_f", "mu_b", "tau_max", "policy"),
        ("gap", "gap_window", "error_N", "avg_total_second_half", "opt_value"),
    )
    return rows, agg
