import numpy as np
import pytest

from fluidlb import Network, SqrtRate
from fluidlb.errors import DisconnectedGraphError
from fluidlb.experiments import ExperimentParams, generate_instance, _instance_seed
from fluidlb.stability import (
    condition12_lhs,
    condition13_lhs,
    critical_step_sizes,
    diameter_bound,
    is_connected,
    jacobi_eigenvalues,
    laplacian,
    lemma9_margin,
    minimize_pivot,
    spectral_gap,
    stability_condition_lhs,
    stability_report,
    weighted_laplacian,
)
from fluidlb.static_routing import solve_static

LEMMA9_PIN = 0.21399022074395313  # margin at c=2, w=1, tau=1


def test_laplacian_pair():
    e = laplacian([1, 1])
    assert np.allclose(e, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_laplacian_rank_one_support():
    eigs = jacobi_eigenvalues(laplacian([1, 0, 1]))
    assert eigs == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)


def test_laplacian_single_neighbor_and_errors():
    assert np.allclose(laplacian([1]), [[0.0]])
    with pytest.raises(ValueError):
        laplacian([0, 0])
    with pytest.raises(ValueError):
        laplacian([0.5, 1.0])


def test_jacobi_matches_characteristic_polynomial():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        a = rng.normal(size=(3, 3))
        a = (a + a.T) / 2.0
        ours = jacobi_eigenvalues(a)
        ref = np.sort(np.roots(np.poly(a)).real)
        worst = max(worst, float(np.abs(ours - ref).max()))
    assert worst < 1e-9


def test_laplacian_psd_radius_and_kernel():
    rng = np.random.default_rng(8)
    for _ in range(100):
        nb = int(rng.integers(1, 9))
        row = (rng.random(nb) < 0.6).astype(float)
        if row.sum() == 0:
            row[int(rng.integers(0, nb))] = 1.0
        e = laplacian(row)
        eigs = jacobi_eigenvalues(e)
        assert eigs[0] >= -1e-12
        assert eigs[-1] <= 1.0 + 1e-12
        # annihilates the all-ones vector restricted to the neighbors
        ones = row.copy()
        assert np.abs(e @ ones).max() < 1e-12


def test_spectral_gap_examples():
    m = weighted_laplacian(np.array([[True, True]]), np.array([1.0]), np.array([1.0]))
    assert jacobi_eigenvalues(m) == pytest.approx([0.0, 1.0], abs=1e-12)
    assert spectral_gap(m) == pytest.approx(1.0, abs=1e-12)


def test_spectral_gap_disconnected_errors():
    active = np.array([[True, False], [False, True]])
    m = weighted_laplacian(active, np.ones(2), np.ones(2))
    with pytest.raises(DisconnectedGraphError):
        spectral_gap(m)
    assert not is_connected(active)


def test_diameter_bound_examples(sym_sol, sym_net):
    b = diameter_bound(sym_net, sym_sol.active, sym_net.lam, np.array([1.0]))
    assert b == pytest.approx(0.25, abs=1e-12)
    # complete 2x2 with unit weights: single-hop paths of cost 2
    active = np.ones((2, 2), dtype=bool)
    b22 = diameter_bound(None, active, np.ones(2), np.ones(2))
    assert b22 == pytest.approx(0.25, abs=1e-12)
    # doubling every step size halves the diameter and doubles the bound
    b22_fast = diameter_bound(None, active, np.ones(2), 2.0 * np.ones(2))
    assert b22_fast == pytest.approx(2.0 * b22, abs=1e-12)


def test_condition13(sym_net, sym_sol, sym_net_fast, sym_sol_fast):
    assert condition13_lhs(sym_sol, sym_net, 0.4) == pytest.approx(0.8, abs=1e-12)
    assert condition13_lhs(sym_sol, sym_net, 0.6) == pytest.approx(1.2, abs=1e-12)
    assert condition13_lhs(sym_sol_fast, sym_net_fast, 4.0) == pytest.approx(0.8, abs=1e-12)
    assert condition13_lhs(sym_sol_fast, sym_net_fast, 6.0) == pytest.approx(1.2, abs=1e-12)


def test_condition13_requires_single_frontend():
    p = ExperimentParams(mu_f=4, mu_b=3, tau_max=1.0, seed=1)
    net = generate_instance(p, _instance_seed(p, 1))
    assert net.F > 1
    sol = solve_static(net)
    with pytest.raises(ValueError):
        condition13_lhs(sol, net, 0.1)


def test_condition12_single_frontend_reduces_to_13(sym_net, sym_sol):
    lhs12 = condition12_lhs(sym_sol, sym_net, [0.4], float(sym_sol.c[0]))
    assert lhs12 == pytest.approx(condition13_lhs(sym_sol, sym_net, 0.4), abs=1e-12)


def test_condition12_rejects_low_pivot(sym_net, sym_sol):
    with pytest.raises(ValueError):
        condition12_lhs(sym_sol, sym_net, [0.4], 0.5)


def test_condition12_homogeneous_in_eta():
    p = ExperimentParams(mu_f=3, mu_b=3, tau_max=1.0, seed=23)
    net = generate_instance(p, _instance_seed(p, 0))
    sol = solve_static(net)
    c_hat, _ = minimize_pivot(sol, net, net.lam)
    one = condition12_lhs(sol, net, net.lam, c_hat)
    two = condition12_lhs(sol, net, 2.0 * net.lam, c_hat)
    assert two == pytest.approx(2.0 * one, rel=1e-12)


def test_critical_step_sizes_symmetric(sym_net, sym_sol, sym_net_fast, sym_sol_fast):
    eta, c_hat = critical_step_sizes(sym_sol, sym_net)
    assert eta == pytest.approx([0.5], abs=1e-9)
    assert condition12_lhs(sym_sol, sym_net, eta, c_hat) == pytest.approx(1.0, abs=1e-9)
    eta_fast, _ = critical_step_sizes(sym_sol_fast, sym_net_fast)
    assert eta_fast == pytest.approx([5.0], abs=1e-8)


def test_critical_step_sizes_rescale_with_arrivals():
    # doubling the arrival rate on the symmetric instance halves the
    # critical step size (the condition depends on eta*lambda and the
    # sqrt family keeps sigma/l' constant); verified by re-solving
    net2 = Network(1, 2, [(0, 0, 1.0), (0, 1, 1.0)], [2.0],
                   [SqrtRate(1, 2), SqrtRate(1, 2)])
    sol2 = solve_static(net2)
    eta2, _ = critical_step_sizes(sol2, net2)
    assert eta2 == pytest.approx([0.25], abs=1e-9)


def test_critical_contract_on_generated_instances():
    p = ExperimentParams(mu_f=3, mu_b=3, tau_max=1.0, seed=2)
    checked = 0
    for rep in range(10):
        net = generate_instance(p, _instance_seed(p, rep))
        sol = solve_static(net)
        try:
            eta, _ = critical_step_sizes(sol, net)
        except DisconnectedGraphError:
            continue
        checked += 1
        assert stability_condition_lhs(sol, net, eta) == pytest.approx(1.0, abs=1e-6)
        # positive homogeneity of the component-wise condition
        assert stability_condition_lhs(sol, net, 0.5 * eta) == pytest.approx(0.5, abs=1e-6)
    assert checked >= 8


def test_lemma7_bound_on_random_instances():
    rng = np.random.default_rng(44)
    p = ExperimentParams(mu_f=3, mu_b=3, tau_max=1.0, seed=15)
    for rep in range(30):
        net = generate_instance(p, _instance_seed(p, rep))
        eta = rng.uniform(0.1, 2.0, net.F)
        gap = spectral_gap(weighted_laplacian(net.mask, net.lam, eta))
        bound = diameter_bound(net, net.mask, net.lam, eta)
        assert gap >= bound - 1e-9


def test_lemma9_margin_grid():
    worst = np.inf
    for w in np.linspace(0.1, 20.0, 20):
        for c in (0.5, 1.0, 2.0, 4.0):
            for m in range(1, 201):
                worst = min(worst, lemma9_margin(c, w, c * m / 201.0))
    assert worst >= -1e-9


def test_lemma9_margin_pin_and_limits():
    assert lemma9_margin(2.0, 1.0, 1.0) == pytest.approx(LEMMA9_PIN, rel=1e-12)
    # w -> 0: the curve escapes along the imaginary axis but stays feasible
    assert lemma9_margin(2.0, 1e-3, 1.0) > 0.0
    with pytest.raises(ValueError):
        lemma9_margin(2.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        lemma9_margin(2.0, 1.0, -0.1)
    with pytest.raises(ValueError):
        lemma9_margin(2.0, 0.0, 1.0)


def test_stability_report(sym_net, sym_sol):
    rep = stability_report(sym_net, sym_sol, 0.4)
    assert rep.stable and rep.lhs12 == pytest.approx(0.8, abs=1e-9)
    assert rep.lhs13 == pytest.approx(0.8, abs=1e-9)
    assert rep.gap == pytest.approx(0.4, abs=1e-12)
    assert rep.eta_critical == pytest.approx([0.5], abs=1e-9)
    assert rep.tau_hat == pytest.approx([1.0, 1.0], abs=1e-9)
    d = rep.to_dict()
    assert d["stable"] is True and len(d["laplacians"]) == 1

    rep6 = stability_report(sym_net, sym_sol, 0.6)
    assert not rep6.stable
