"""Independent reference computations the tests check the library against.

Everything here is deliberately brute force: finite differences, bisection,
grid search. None of it shares code paths with the implementations under
test.
"""

import numpy as np


def central_diff(f, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def bisect_inverse(f, target: float, lo: float, hi: float, iters: int = 200) -> float:
    """Root of f(x) = target on [lo, hi] for increasing f, by pure bisection."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def grid_search_opt_1x2(net, points: int = 100_001) -> float:
    """Brute-force optimum of a one-frontend two-backend instance.

    Scans x_1 over a uniform grid, computing workloads by closed form (sqrt,
    vectorized over the grid) or bisection (otherwise) and skipping
    infeasible splits.
    """
    assert net.F == 1 and net.B == 2
    lam = float(net.lam[0])
    x1 = np.linspace(0.0, 1.0, points)
    caps = net.capacities()
    if all(r.family == "sqrt" for r in net.rates):
        total = lam * (x1 * net.tau[0, 0] + (1.0 - x1) * net.tau[0, 1])
        for j, x in ((0, x1), (1, 1.0 - x1)):
            a, b = net.rates[j].a, net.rates[j].b
            y = lam * x
            total = total + ((y + np.sqrt(a)) ** 2 - a) / b
        return float(total[(lam * x1 < caps[0]) & (lam * (1.0 - x1) < caps[1])].min())
    best = np.inf
    for x in x1:
        flows = (lam * x, lam * (1.0 - x))
        if flows[0] >= caps[0] or flows[1] >= caps[1]:
            continue
        total = 0.0
        for j, y in enumerate(flows):
            r = net.rates[j]
            n = bisect_inverse(r.rate, y, 0.0, r.k + r.s * y * 10.0 + 50.0)
            total += n
        total += lam * (x * net.tau[0, 0] + (1.0 - x) * net.tau[0, 1])
        best = min(best, total)
    return best


def random_feasible_routing(net, rng) -> np.ndarray:
    """Random routing matrix with all backends strictly below capacity.

    Blends a random split toward the capacity-proportional one (feasible by
    construction at utilization below 1) until feasibility holds.
    """
    caps = net.capacities()
    weights = np.where(np.isfinite(caps), caps, 1.0)
    x_safe = np.where(net.mask, weights[None, :], 0.0)
    x_safe /= x_safe.sum(axis=1, keepdims=True)
    x_rand = np.where(net.mask, rng.exponential(1.0, (net.F, net.B)), 0.0)
    x_rand /= x_rand.sum(axis=1, keepdims=True)
    t = 1.0
    for _ in range(60):
        x = (1.0 - t) * x_safe + t * x_rand
        if np.all(net.lam @ x < caps * 0.999):
            return x
        t *= 0.5
    raise RuntimeError("could not sample a feasible routing")
