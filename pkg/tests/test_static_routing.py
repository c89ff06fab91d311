import numpy as np
import pytest

from fluidlb import HyperbolicRate, Network, SqrtRate
from fluidlb.errors import InfeasibleInstanceError, OverloadError
from fluidlb.experiments import ExperimentParams, generate_instance, _instance_seed
from fluidlb.static_routing import (
    equilibrium_workloads,
    kkt_residual,
    reduced_objective,
    solve_static,
)
from oracles import central_diff, grid_search_opt_1x2, random_feasible_routing


def random_1x2_sqrt(rng) -> Network:
    return Network(
        1,
        2,
        [(0, 0, rng.uniform(0.05, 2.0)), (0, 1, rng.uniform(0.05, 2.0))],
        [rng.uniform(0.5, 3.0)],
        [SqrtRate(rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0)) for _ in range(2)],
    )


def test_equilibrium_workloads(sym_net):
    n = equilibrium_workloads(sym_net, np.array([[0.5, 0.5]]))
    assert n == pytest.approx([0.625, 0.625], abs=1e-12)
    n = equilibrium_workloads(sym_net, np.array([[1.0, 0.0]]))
    assert n[1] == 0.0


def test_equilibrium_overload_names_backend():
    net = Network(1, 2, [(0, 0, 1.0), (0, 1, 1.0)], [5.1],
                  [HyperbolicRate(5, 1), HyperbolicRate(5, 1)])
    with pytest.raises(OverloadError) as exc:
        equilibrium_workloads(net, np.array([[1.0, 0.0]]))
    assert exc.value.backend == 0
    assert "backend 0" in str(exc.value)


def test_reduced_objective_value(sym_net):
    f, _, _ = reduced_objective(sym_net, np.array([[0.5, 0.5]]))
    assert f == pytest.approx(2.25, abs=1e-12)


def test_reduced_objective_zero_latency_is_workload_only():
    net = Network(1, 2, [(0, 0, 1e-9), (0, 1, 1e-9)], [1.0],
                  [SqrtRate(1, 2), SqrtRate(1, 2)])
    f, _, n = reduced_objective(net, np.array([[0.5, 0.5]]))
    assert f == pytest.approx(n.sum(), abs=1e-8)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    p = ExperimentParams(mu_f=3, mu_b=3, tau_max=1.0, seed=77)
    for rep in range(5):
        net = generate_instance(p, _instance_seed(p, rep))
        x = random_feasible_routing(net, rng)
        _, grad, _ = reduced_objective(net, x)
        for _ in range(6):
            i = int(rng.integers(0, net.F))
            j = int(rng.integers(0, net.B))

            def f_of(xij):
                xc = x.copy()
                xc[i, j] = xij
                return reduced_objective(net, xc)[0]

            fd = central_diff(f_of, x[i, j], 1e-6)
            assert grad[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_solve_symmetric_instance(sym_net, sym_sol):
    assert sym_sol.x[0] == pytest.approx([0.5, 0.5], abs=1e-9)
    assert sym_sol.N == pytest.approx([0.625, 0.625], abs=1e-9)
    assert sym_sol.c[0] == pytest.approx(2.5, abs=1e-9)
    assert sym_sol.opt_value == pytest.approx(2.25, abs=1e-9)
    assert kkt_residual(sym_net, sym_sol) < 1e-9


def test_solver_prefers_short_latency():
    net = Network(1, 2, [(0, 0, 0.1), (0, 1, 10.0)], [1.0],
                  [SqrtRate(1, 2), SqrtRate(1, 2)])
    sol = solve_static(net)
    assert sol.x[0, 0] > sol.x[0, 1]
    assert sol.opt_value == pytest.approx(grid_search_opt_1x2(net, points=100_001), abs=1e-4)


def test_solver_matches_grid_oracle_on_random_1x2():
    rng = np.random.default_rng(99)
    for _ in range(10):
        net = random_1x2_sqrt(rng)
        sol = solve_static(net)
        assert sol.opt_value == pytest.approx(grid_search_opt_1x2(net), abs=1e-4)


def test_kkt_residual_detects_perturbation(sym_net, sym_sol):
    assert kkt_residual(sym_net, sym_sol) < 1e-9
    bent = solve_static(sym_net)
    bent.x = np.array([[0.51, 0.49]])
    bent.N = equilibrium_workloads(sym_net, bent.x)
    assert kkt_residual(sym_net, bent) > 1e-4


def test_solution_invariants_on_random_instances():
    p = ExperimentParams(mu_f=3, mu_b=4, tau_max=1.0, seed=5)
    for rep in range(10):
        net = generate_instance(p, _instance_seed(p, rep))
        sol = solve_static(net)
        # rows on the simplex, flow balance, KKT
        assert np.all(sol.x[~net.mask] == 0.0)
        assert sol.x.sum(axis=1) == pytest.approx(np.ones(net.F), abs=1e-9)
        inflow = net.lam @ sol.x
        served = np.array([r.rate(n) for r, n in zip(net.rates, sol.N)])
        assert inflow == pytest.approx(served, abs=1e-7)
        assert kkt_residual(net, sol) < 1e-6


def test_lemma1_lower_bound_over_feasible_routings():
    rng = np.random.default_rng(31)
    p = ExperimentParams(mu_f=2, mu_b=3, tau_max=1.0, seed=13)
    for rep in range(5):
        net = generate_instance(p, _instance_seed(p, rep))
        sol = solve_static(net)
        for _ in range(20):
            x = random_feasible_routing(net, rng)
            f, _, _ = reduced_objective(net, x)
            assert f >= sol.opt_value - 1e-9


def test_objective_convexity_spot_check():
    rng = np.random.default_rng(17)
    p = ExperimentParams(mu_f=2, mu_b=3, tau_max=1.0, seed=29)
    net = generate_instance(p, _instance_seed(p, 0))
    for _ in range(30):
        x = random_feasible_routing(net, rng)
        y = random_feasible_routing(net, rng)
        t = rng.random()
        fx, _, _ = reduced_objective(net, x)
        fy, _, _ = reduced_objective(net, y)
        fm, _, _ = reduced_objective(net, t * x + (1 - t) * y)
        assert fm <= t * fx + (1 - t) * fy + 1e-9


def test_solver_iterates_monotone(sym_net):
    p = ExperimentParams(mu_f=3, mu_b=3, tau_max=0.5, seed=3)
    for rep in range(5):
        net = generate_instance(p, _instance_seed(p, rep))
        sol = solve_static(net, keep_history=True)
        assert np.all(np.diff(sol.objective_history) <= 1e-9)


def test_infeasible_instance_rejected():
    net = Network(1, 2, [(0, 0, 1.0), (0, 1, 1.0)], [10.0],
                  [HyperbolicRate(5, 1), HyperbolicRate(4, 1)])
    with pytest.raises(InfeasibleInstanceError):
        solve_static(net)
