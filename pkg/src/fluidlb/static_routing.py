"""Optimal static routing: the convex benchmark every policy is measured against.

The program minimizes steady-state total requests (in service plus in
flight),

    min_x  sum_j N_j(x) + sum_{(i,j)} lam_i x_ij tau_ij,
    N_j(x) = l_j^{-1}( sum_i lam_i x_ij ),   rows x_i in the simplex,

solved by projected gradient descent with Armijo backtracking. The reduced
gradient is lam_i (1/l_j'(N_j(x)) + tau_ij) per arc. At the optimum each
frontend has a multiplier c_i (seconds): the shared marginal cost of its
active arcs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rates as _rates
from .errors import ConvergenceError, InfeasibleInstanceError, OverloadError
from .network import Network
from .simplex import project_simplex_rows, project_tangent_cone

ACTIVE_THRESHOLD = 1e-7  # arcs with x* above this are considered active
KKT_TOL = 1e-6
_ARMIJO_C = 1e-4


@dataclass
class StaticSolution:
    """Optimal routing x, workloads N, multipliers c, and objective value."""

    x: np.ndarray  # (F, B), rows in the simplex over the frontend's arcs
    N: np.ndarray  # (B,)
    c: np.ndarray  # (F,) seconds
    opt_value: float
    active: np.ndarray  # (F, B) bool, x* above the activity threshold
    residual: float  # tangent-cone-projected gradient norm at exit
    iterations: int
    objective_history: np.ndarray = field(repr=False, default=None)

    def active_arcs(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(self.active)
        return list(zip(ii.tolist(), jj.tolist()))

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "N": self.N.tolist(),
            "c": self.c.tolist(),
            "opt_value": float(self.opt_value),
            "active_arcs": [[i, j] for i, j in self.active_arcs()],
            "kkt_residual": None,  # filled by the CLI
            "solver_residual": float(self.residual),
            "iterations": int(self.iterations),
        }


def inflows(net: Network, x: np.ndarray) -> np.ndarray:
    return net.lam @ np.where(net.mask, x, 0.0)


def equilibrium_workloads(net: Network, x, warm: np.ndarray | None = None) -> np.ndarray:
    """Workloads N with l_j(N_j) equal to the inflow induced by routing x.

    Raises OverloadError naming the first backend whose inflow reaches its
    capacity.
    """
    x = np.asarray(x, dtype=float)
    y = inflows(net, x)
    cap = net.capacities()
    over = np.nonzero(y >= cap)[0]
    if over.size:
        j = int(over[0])
        raise OverloadError(j, float(y[j]), float(cap[j]))
    return _rates.inverse_vec(net.fam, net.p1, net.p2, y, warm=warm)


def reduced_objective(net: Network, x, warm: np.ndarray | None = None):
    """Objective value, its per-arc gradient, and the equilibrium workloads."""
    x = np.asarray(x, dtype=float)
    N = equilibrium_workloads(net, x, warm=warm)
    travel = float(np.sum(net.lam[:, None] * np.where(net.mask, x, 0.0) * net.tau))
    value = float(N.sum()) + travel
    deriv = _rates.deriv_vec(net.fam, net.p1, net.p2, N)
    grad = net.lam[:, None] * (1.0 / deriv[None, :] + net.tau)
    grad = np.where(net.mask, grad, 0.0)
    return value, grad, N


def projected_gradient_norm(net: Network, x, grad) -> float:
    """Norm of the descent direction projected to the simplex tangent cones."""
    sq = 0.0
    for i in range(net.F):
        v = project_tangent_cone(-grad[i], x[i], net.mask[i])
        sq += float(v @ v)
    return np.sqrt(sq)


def initial_point(net: Network) -> np.ndarray:
    """Feasible start: capacity-weighted split over each frontend's arcs,
    falling back to a uniform split (sqrt-family capacities are unbounded, so
    the weights degenerate to uniform there)."""
    cap = net.capacities()
    finite = np.isfinite(cap)
    weights = np.where(finite, cap, (cap[finite].max() * 10.0 if finite.any() else 1.0))
    for w in (weights, np.ones(net.B)):
        x = np.where(net.mask, w[None, :], 0.0)
        x /= x.sum(axis=1, keepdims=True)
        y = inflows(net, x)
        if np.all(y < net.capacities()):
            return x
    raise InfeasibleInstanceError(
        "no feasible start found (tried capacity-weighted and uniform routing); "
        "total arrival may be too close to total capacity"
    )


def _newton_direction(net: Network, x, g, N) -> np.ndarray | None:
    """Equality-constrained Newton direction on the positive support of x.

    The reduced Hessian is rank-structured: H[(i,j),(i',j)] = lam_i lam_i'
    kappa_j with kappa_j the second derivative of l_j^{-1} at the current
    inflow. Variables at exactly zero stay pinned (projected-gradient steps
    release them when worthwhile); each frontend keeps its row-sum fixed.
    A tiny Tikhonov term makes flow cycles (exact null directions of H with
    nonzero travel cost) come out as very long direction components, so the
    ratio test slides them to the simplex boundary in one step instead of
    leaving them to creep.
    """
    support = net.mask & (x > 0.0)
    ii, jj = np.nonzero(support)
    nf = ii.size
    deriv = _rates.deriv_vec(net.fam, net.p1, net.p2, N)
    sigma = _rates.sigma_vec(net.fam, net.p1, net.p2, N)
    kappa = sigma / deriv  # (l^{-1})'' at the current inflow
    lam_f = net.lam[ii]
    same_backend = jj[:, None] == jj[None, :]
    H = same_backend * np.outer(lam_f, lam_f) * kappa[jj][None, :]
    eps = 1e-12 * max(1.0, float(H.diagonal().max(initial=0.0)))
    H[np.diag_indices(nf)] += eps
    A = np.zeros((net.F, nf))
    A[ii, np.arange(nf)] = 1.0
    K = np.block([[H, A.T], [A, np.zeros((net.F, net.F))]])
    rhs = np.concatenate([-g[support], np.zeros(net.F)])
    try:
        sol_vec = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol_vec, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    d = np.zeros_like(x)
    d[support] = sol_vec[:nf]
    if not np.all(np.isfinite(d)):
        return None
    return d


def solve_static(
    net: Network,
    tol: float = 1e-9,
    max_iter: int = 10**6,
    keep_history: bool = True,
) -> StaticSolution:
    """Solve the static routing program to a projected-gradient norm below tol.

    Projected gradient descent with Armijo halving (initial step 1.0, grown
    again after clean accepts) globalizes; an equality-constrained Newton
    step on the identified support is attempted after each gradient step and
    drives the tail, because the reduced objective becomes extremely
    ill-conditioned when hyperbolic backends run near saturation and
    first-order steps alone cannot reach the stationarity target there.
    Per-frontend gradient directions are divided by lam_i (constant per
    simplex block, so the Euclidean projection is unaffected) to decondition
    heterogeneous arrival rates. Every accepted step is monotone in the
    objective up to float resolution.
    """
    net.check_total_capacity()
    x = initial_point(net)
    f, g, N = reduced_objective(net, x)
    history = [f] if keep_history else None
    h = 1.0
    inv_lam = 1.0 / net.lam[:, None]

    def try_point(xn, f_ref, slope):
        """Armijo test at xn; returns (accepted, fn, gn, Nn)."""
        try:
            fn, gn, Nn = reduced_objective(net, xn, warm=N)
        except OverloadError:
            return False, None, None, None
        noise_floor = 1e-13 * (1.0 + abs(f_ref))
        bound = slope if slope < -noise_floor else noise_floor
        return fn <= f_ref + bound, fn, gn, Nn

    it = 0
    while True:
        res = projected_gradient_norm(net, x, g)
        if res < tol:
            break
        if it >= max_iter:
            raise ConvergenceError("static solver hit the iteration cap", res)
        it += 1

        # projected-gradient step with halving line search; the step only
        # grows again after an accept that needed no halving (else the next
        # iteration would re-halve its way down every time), and may grow
        # past 1 because sliding along nearly-flat cycle directions needs
        # long steps
        halvings = 0
        while True:
            xn = project_simplex_rows(x - h * (g * inv_lam), net.mask)
            ok, fn, gn, Nn = try_point(xn, f, _ARMIJO_C * float(np.sum(g * (xn - x))))
            if ok:
                x, f, g, N = xn, fn, gn, Nn
                if halvings == 0:
                    h = min(1e12, h * 2.0)
                break
            h *= 0.5
            halvings += 1
            if h < 1e-18:
                raise ConvergenceError("static solver line search stalled", res)
        if keep_history:
            history.append(f)

        # Newton refinement, run to face optimality (each pass either takes a
        # full step or pins a variable at the boundary, so the inner loop is
        # short); PGD above is what releases pinned variables again
        for _ in range(12):
            d = _newton_direction(net, x, g, N)
            if d is None:
                break
            shrink = d < 0.0
            alpha_max = float(np.min(x[shrink] / -d[shrink])) if shrink.any() else 1.0
            alpha = min(1.0, alpha_max)
            accepted = False
            for _ in range(30):
                if alpha <= 0.0:
                    break
                # renormalize multiplicatively rather than project: the
                # candidate is feasible up to float error in the row sums,
                # and scaling the support keeps exact zeros exact; sub-1e-14
                # crumbs from boundary-hitting steps are snapped so the
                # pinned set shrinks for good
                xn = np.maximum(x + alpha * d, 0.0)
                xn[xn < 1e-14] = 0.0
                xn /= xn.sum(axis=1, keepdims=True)
                ok, fn, gn, Nn = try_point(xn, f, _ARMIJO_C * alpha * float(np.sum(g * d)))
                if ok:
                    x, f, g, N = xn, fn, gn, Nn
                    if keep_history:
                        history.append(f)
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted or float(np.abs(alpha * d).max()) < 1e-10:
                break

    active = net.mask & (x > ACTIVE_THRESHOLD)
    deriv = _rates.deriv_vec(net.fam, net.p1, net.p2, N)
    marginal = 1.0 / deriv[None, :] + net.tau  # seconds, per arc
    c = np.array(
        [marginal[i, active[i]].mean() if active[i].any() else np.nan for i in range(net.F)]
    )
    return StaticSolution(
        x=x,
        N=N,
        c=c,
        opt_value=f,
        active=active,
        residual=res,
        iterations=it,
        objective_history=np.array(history) if keep_history else None,
    )


def kkt_residual(net: Network, sol: StaticSolution) -> float:
    """Worst first-order-condition violation (seconds).

    Active arcs must price at c_i; inactive arcs must price at or above c_i.
    """
    deriv = _rates.deriv_vec(net.fam, net.p1, net.p2, sol.N)
    marginal = 1.0 / deriv[None, :] + net.tau
    worst = 0.0
    for i in range(net.F):
        act = sol.active[i]
        inact = net.mask[i] & ~act
        if act.any():
            worst = max(worst, float(np.abs(marginal[i, act] - sol.c[i]).max()))
        if inact.any():
            worst = max(worst, float(np.maximum(0.0, sol.c[i] - marginal[i, inact]).max()))
    return worst
