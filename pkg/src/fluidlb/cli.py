"""Command-line interface over the instance JSON schema.

Subcommands: solve, simulate, stability, experiment, project. Exit codes:
0 success, 1 domain error (one-line JSON on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import jsonio
from .errors import FluidLBError
from .experiments import ExperimentParams, generate_instance, run_benchmarks, run_local_stability, mixed_init, _instance_seed
from .network import Network
from .sim import POLICIES, SimConfig, run
from .simplex import project_tangent_cone
from .stability import stability_report
from .static_routing import kkt_residual, solve_static


class UsageError(Exception):
    pass


def _load_network(path: str) -> Network:
    try:
        return Network.from_json(path)
    except FileNotFoundError:
        raise UsageError(f"instance file not found: {path}")
    except (json.JSONDecodeError, ValueError) as e:
        raise UsageError(f"malformed instance {path}: {e}")


def _print_json(obj) -> None:
    print(jsonio.dumps(obj, indent=2))


def _cmd_solve(args) -> int:
    net = _load_network(args.instance)
    sol = solve_static(net)
    payload = sol.to_dict()
    payload["kkt_residual"] = kkt_residual(net, sol)
    _print_json(payload)
    return 0


def _parse_eta(text: str, net: Network, sol) -> np.ndarray:
    if text.startswith("auto"):
        from .stability import critical_step_sizes

        eta, _ = critical_step_sizes(sol, net)
        if ":" in text:
            eta = eta * float(text.split(":", 1)[1])
        return eta
    vals = np.array([float(v) for v in text.split(",")])
    if vals.size == 1:
        vals = np.full(net.F, vals[0])
    if vals.size != net.F:
        raise UsageError(f"expected 1 or {net.F} step sizes, got {vals.size}")
    return vals


def _cmd_simulate(args) -> int:
    net = _load_network(args.instance)
    sol = solve_static(net)
    eta = _parse_eta(args.eta, net, sol) if args.policy == "dgd" else None

    if args.init == "equilibrium":
        n0, x0 = sol.N, sol.x
    elif args.init == "random":
        n0, x0 = mixed_init(sol, net, args.seed, weight=1.0)
    elif args.init.startswith("mix:"):
        n0, x0 = mixed_init(sol, net, args.seed, weight=float(args.init[4:]))
    else:
        raise UsageError(f"unknown init {args.init!r} (equilibrium|mix:<w>|random)")

    cfg = SimConfig(
        horizon=args.horizon,
        policy=args.policy,
        eta=eta,
        dt=args.dt,
        clip_multiplier=args.clip,
        literal_update=args.literal_step,
        N0=np.asarray(n0, dtype=float),
        x0=np.asarray(x0, dtype=float),
    )
    metrics = run(net, cfg, sol)
    if args.out:
        _write_trajectory(args.out, metrics, net)
    _print_json(metrics.to_dict())
    return 0


def _write_trajectory(path: str, metrics, net: Network) -> None:
    header = (
        ["t"]
        + [f"N_{j}" for j in range(net.B)]
        + [f"x_{i}{j}" for i in range(net.F) for j in range(net.B)]
        + ["inflight_total"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(len(metrics.traj_t)):
            row = (
                [metrics.traj_t[r]]
                + list(metrics.traj_N[r])
                + list(metrics.traj_x[r].ravel())
                + [metrics.traj_inflight[r]]
            )
            writer.writerow(format(v, ".17g") for v in row)


def _cmd_stability(args) -> int:
    net = _load_network(args.instance)
    sol = solve_static(net)
    if args.eta == "auto":
        from .stability import critical_step_sizes

        eta, _ = critical_step_sizes(sol, net)
    else:
        eta = _parse_eta(args.eta, net, sol)
    _print_json(stability_report(net, sol, eta).to_dict())
    return 0


def _cmd_experiment(args) -> int:
    params = ExperimentParams(
        mu_f=args.mu_f,
        mu_b=args.mu_b,
        tau_max=args.tau_max,
        alphas=tuple(args.alpha) if args.alpha else (0.5, 2.0),
        replications=args.reps,
        horizon=args.horizon if args.horizon is not None else (100.0 if args.kind == "local" else 1000.0),
        seed=args.seed,
        dt=args.dt,
    )
    if args.dump_instances:
        import os

        os.makedirs(args.dump_instances, exist_ok=True)
        for rep in range(params.replications):
            net = generate_instance(params, _instance_seed(params, rep))
            jsonio.dump_path(
                net.to_dict(), os.path.join(args.dump_instances, f"instance_{rep:03d}.json")
            )
    runner = run_local_stability if args.kind == "local" else run_benchmarks
    rows, agg = runner(params)
    all_rows = rows + agg
    keys: list[str] = []
    for row in all_rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, restval="")
        writer.writeheader()
        for row in all_rows:
            writer.writerow(
                {k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()}
            )
    print(f"wrote {len(rows)} rows + {len(agg)} aggregates to {args.out}")
    return 0


def _cmd_project(args) -> int:
    z = np.array([float(v) for v in args.z.split(",")])
    x = np.array([float(v) for v in args.x.split(",")])
    mask = None
    if args.mask:
        mask = np.array([bool(int(v)) for v in args.mask.split(",")])
    v = project_tangent_cone(z, x, mask)
    _print_json({"v": v.tolist()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluidlb",
        description="Fluid-model load balancing: static optimum, simulation, stability analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the optimal static routing problem")
    p.add_argument("instance", help="instance JSON path")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("simulate", help="integrate the fluid dynamics under a policy")
    p.add_argument("instance")
    p.add_argument("--policy", choices=POLICIES, default="dgd")
    p.add_argument("--eta", default="auto:0.5", help="step sizes: values, auto, or auto:<alpha> (default auto:0.5)")
    p.add_argument("--dt", type=float, default=None, help="time step (default min(1e-3, min latency/50))")
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--init", default="equilibrium", help="equilibrium | mix:<w> | random")
    p.add_argument("--seed", type=int, default=0, help="seed for random initial conditions")
    p.add_argument("--clip", type=float, default=4.0, help="gradient clip multiplier")
    p.add_argument("--literal-step", action="store_true", help="use the per-epoch update x - eta g without dt scaling")
    p.add_argument("--out", default=None, help="trajectory CSV path")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("stability", help="evaluate the local stability conditions")
    p.add_argument("instance")
    p.add_argument("--eta", default="auto", help="step sizes: values, auto (critical), or auto:<alpha>")
    p.set_defaults(fn=_cmd_stability)

    p = sub.add_parser("experiment", help="batch experiments over random instances")
    p.add_argument("kind", choices=("local", "benchmark"))
    p.add_argument("--mu-f", type=float, default=2.0, dest="mu_f")
    p.add_argument("--mu-b", type=float, default=2.0, dest="mu_b")
    p.add_argument("--tau-max", type=float, default=1.0, dest="tau_max")
    p.add_argument("--alpha", type=float, action="append", help="step-size multiplier (repeatable; local only)")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=None, help="default 100 (local) or 1000 (benchmark)")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--dump-instances", default=None, help="directory for per-replication instance JSON")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("project", help="debug: tangent-cone projection")
    p.add_argument("--z", required=True, help="comma-separated values to project")
    p.add_argument("--x", required=True, help="comma-separated simplex point")
    p.add_argument("--mask", default=None, help="comma-separated 0/1 presence flags")
    p.set_defaults(fn=_cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except UsageError as e:
        print(json.dumps({"error": "usage", "message": str(e)}), file=sys.stderr)
        return 2
    except FluidLBError as e:
        print(json.dumps({"error": e.kind, "message": str(e)}), file=sys.stderr)
        return 1
    except ValueError as e:
        print(json.dumps({"error": "invalid-input", "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
