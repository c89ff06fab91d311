"""Local-stability machinery: Laplacians, spectral gap, step-size conditions.

Around the static optimum the routing dynamics linearize through per-frontend
Laplacians over the active arcs,

    E_i = diag(a_i) - a_i a_i^T / (a_i^T 1),

and stability is governed by the weighted sum  sum_i lam_i eta_i E_i. The
general sufficient condition compares, against 1,

    2 eta^T lam ( max_j tau_hat_j sigma_j / l_j'
                  + sum_i lam_i eta_i |c_hat - c_i| / gap * c_hat * max_j sigma_j )

for a pivot c_hat >= max_j 1/l_j', with uniform latencies
tau_hat_j = c_hat - 1/l_j'. With a single frontend the pivot can be its own
multiplier and the condition collapses to  max_j 2 tau_ij eta lam sigma_j / l_j' < 1.
All quantities are evaluated on the active subnetwork (inactive arcs carry no
flow at the optimum and drop out of the linearization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rates as _rates
from .errors import DisconnectedGraphError
from .network import Network
from .static_routing import StaticSolution

ZERO_EIG_REL = 1e-9  # eigenvalues below this fraction of the radius count as zero


# ---------------------------------------------------------------------------
# symmetric eigenvalues via cyclic Jacobi rotations
# ---------------------------------------------------------------------------


def jacobi_eigenvalues(mat, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending.

    Cyclic Jacobi: sweeps of plane rotations until the off-diagonal Frobenius
    norm falls below tol (relative to the matrix scale when that is larger
    than 1, so big inputs cannot demand sub-float accuracy).
    """
    a = np.array(mat, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix must be symmetric")
    if n == 1:
        return a.ravel().copy()
    stop = tol * max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-300 + 1e-150 * abs(diff):
                    # the rotation angle underflows: zeroing is all it would do
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:  # theta^2 would overflow; use 1/(2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                a[[p, q], :] = rot.T @ a[[p, q], :]
                a[:, [p, q]] = a[:, [p, q]] @ rot
    return np.sort(np.diag(a))


def laplacian(adjacency_row) -> np.ndarray:
    """E = diag(a) - a a^T / (a^T 1) for a binary adjacency row a."""
    a = np.asarray(adjacency_row, dtype=float)
    if a.ndim != 1 or not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("adjacency row must be a binary vector")
    deg = a.sum()
    if deg == 0:
        raise ValueError("adjacency row has no arcs")
    return np.diag(a) - np.outer(a, a) / deg


def weighted_laplacian(active, lam, eta) -> np.ndarray:
    """sum_i lam_i eta_i E_i over the rows of a boolean active-arc matrix."""
    active = np.asarray(active, dtype=bool)
    total = np.zeros((active.shape[1], active.shape[1]))
    for i in range(active.shape[0]):
        if active[i].any():
            total += lam[i] * eta[i] * laplacian(active[i].astype(float))
    return total


def spectral_gap(mat, expect_connected: bool = True) -> float:
    """Smallest nonzero eigenvalue of a PSD matrix (zero = below 1e-9 of radius).

    A connected active graph yields exactly one zero eigenvalue per covered
    component; more than one means the graph is disconnected, which is an
    error when connectivity was promised.
    """
    eigs = jacobi_eigenvalues(mat)
    radius = float(eigs[-1])
    if radius <= 0.0:
        raise DisconnectedGraphError("weighted Laplacian is identically zero")
    zero_cut = ZERO_EIG_REL * radius
    nonzero = eigs[eigs > zero_cut]
    n_zero = len(eigs) - len(nonzero)
    if expect_connected and n_zero != 1:
        raise DisconnectedGraphError(
            f"expected one zero eigenvalue, found {n_zero} (disconnected active graph)"
        )
    return float(nonzero[0])


# ---------------------------------------------------------------------------
# active subnetwork bookkeeping
# ---------------------------------------------------------------------------


def covered_backends(active) -> np.ndarray:
    return np.nonzero(np.asarray(active).any(axis=0))[0]


def is_connected(active) -> bool:
    """Connectivity of the bipartite graph induced by the active arcs."""
    active = np.asarray(active, dtype=bool)
    cov = covered_backends(active)
    if len(cov) == 0:
        return False
    seen_b = {int(cov[0])}
    seen_f = set()
    frontier = [int(cov[0])]
    while frontier:
        j = frontier.pop()
        for i in np.nonzero(active[:, j])[0]:
            if int(i) in seen_f:
                continue
            seen_f.add(int(i))
            for j2 in np.nonzero(active[i])[0]:
                if int(j2) not in seen_b:
                    seen_b.add(int(j2))
                    frontier.append(int(j2))
    return len(seen_b) == len(cov) and len(seen_f) == int(active.any(axis=1).sum())


def diameter_bound(net: Network, active, lam, eta) -> float:
    """Lemma-style lower bound 1/(|B| d) on the spectral gap.

    A path between backends pays |B_i| / (lam_i eta_i) for each distinct
    frontend it crosses; d is the largest shortest-path cost between covered
    backends (the diameter). All-pairs by Floyd-Warshall; sizes are tiny.
    """
    active = np.asarray(active, dtype=bool)
    if not is_connected(active):
        raise DisconnectedGraphError("active graph is disconnected")
    cov = covered_backends(active)
    nb = len(cov)
    deg = active.sum(axis=1)
    dist = np.full((nb, nb), np.inf)
    np.fill_diagonal(dist, 0.0)
    for i in range(active.shape[0]):
        js = np.nonzero(active[i][cov])[0]
        if len(js) < 2:
            continue
        cost = deg[i] / (lam[i] * eta[i])
        for a in js:
            for b in js:
                if a != b and cost < dist[a, b]:
                    dist[a, b] = cost
    for k in range(nb):
        dist = np.minimum(dist, dist[:, k, None] + dist[None, k, :])
    d = float(dist.max())
    if not np.isfinite(d):
        raise DisconnectedGraphError("active graph is disconnected")
    return 1.0 / (nb * d) if d > 0.0 else np.inf


# ---------------------------------------------------------------------------
# stability conditions
# ---------------------------------------------------------------------------


def _active_quantities(sol: StaticSolution, net: Network):
    cov = covered_backends(sol.active)
    deriv = _rates.deriv_vec(net.fam[cov], net.p1[cov], net.p2[cov], sol.N[cov])
    sigma = _rates.sigma_vec(net.fam[cov], net.p1[cov], net.p2[cov], sol.N[cov])
    return cov, deriv, sigma


def active_components(active) -> list[tuple[np.ndarray, np.ndarray]]:
    """Connected components of the bipartite active graph.

    Returns (frontend indices, backend indices) per component; backends with
    no active arc appear in no component.
    """
    active = np.asarray(active, dtype=bool)
    unseen_b = set(int(j) for j in covered_backends(active))
    comps = []
    while unseen_b:
        frontier = [unseen_b.pop()]
        comp_b = {frontier[0]}
        comp_f: set[int] = set()
        while frontier:
            j = frontier.pop()
            for i in np.nonzero(active[:, j])[0]:
                if int(i) in comp_f:
                    continue
                comp_f.add(int(i))
                for j2 in np.nonzero(active[i])[0]:
                    if int(j2) not in comp_b:
                        comp_b.add(int(j2))
                        unseen_b.discard(int(j2))
                        frontier.append(int(j2))
        comps.append((np.array(sorted(comp_f)), np.array(sorted(comp_b))))
    return comps


def _condition12_on(sol: StaticSolution, net: Network, eta, c_hat: float, fidx, bidx) -> float:
    """Condition left-hand side restricted to one active component."""
    deriv = _rates.deriv_vec(net.fam[bidx], net.p1[bidx], net.p2[bidx], sol.N[bidx])
    sigma = _rates.sigma_vec(net.fam[bidx], net.p1[bidx], net.p2[bidx], sol.N[bidx])
    inv_deriv = 1.0 / deriv
    if c_hat < inv_deriv.max() - 1e-12:
        raise ValueError(
            f"pivot {c_hat:.6g} below max_j 1/l_j' = {inv_deriv.max():.6g}"
        )
    tau_hat = c_hat - inv_deriv
    lam, et = net.lam[fidx], np.asarray(eta, dtype=float)[fidx]
    act = sol.active[np.ix_(fidx, bidx)]
    gap = spectral_gap(weighted_laplacian(act, lam, et))
    eta_lam = float(et @ lam)
    perturb = float(np.sum(lam * et * np.abs(c_hat - sol.c[fidx])))
    return 2.0 * eta_lam * (
        float(np.max(tau_hat * sigma / deriv)) + perturb / gap * c_hat * float(sigma.max())
    )


def condition12_lhs(sol: StaticSolution, net: Network, eta, c_hat: float) -> float:
    """Left-hand side of the general stability condition; stable when < 1.

    Requires a connected active graph; `stability_condition_lhs` handles the
    disconnected case component by component.
    """
    eta = np.asarray(eta, dtype=float)
    if not is_connected(sol.active):
        raise DisconnectedGraphError("active graph is disconnected")
    fidx = np.arange(net.F)
    return _condition12_on(sol, net, eta, c_hat, fidx, covered_backends(sol.active))


def condition13_lhs(sol: StaticSolution, net: Network, eta) -> float:
    """Single-frontend condition: max_j 2 tau_ij eta lam sigma_j / l_j'."""
    if net.F != 1:
        raise ValueError("single-frontend condition requires exactly one frontend")
    eta = np.asarray(eta, dtype=float).reshape(())
    cov, deriv, sigma = _active_quantities(sol, net)
    tau = net.tau[0, cov]
    return float(np.max(2.0 * tau * eta * net.lam[0] * sigma / deriv))


def minimize_pivot(
    sol: StaticSolution, net: Network, eta, fidx=None, bidx=None
) -> tuple[float, float]:
    """Best pivot c_hat in [max_j 1/l_j', 2 max_i c_i] for the general condition.

    The left-hand side is not known to be unimodal in the pivot, so a 64-point
    coarse grid picks the basin and golden-section refines inside it
    (best-effort, with c_hat = max_i c_i as the guaranteed-feasible fallback).
    Returns (c_hat, lhs at c_hat), restricted to one active component when
    (fidx, bidx) are given.
    """
    if fidx is None:
        fidx = np.arange(net.F)
    if bidx is None:
        bidx = covered_backends(sol.active)
    deriv = _rates.deriv_vec(net.fam[bidx], net.p1[bidx], net.p2[bidx], sol.N[bidx])
    lo = float((1.0 / deriv).max())
    hi = max(2.0 * float(np.max(sol.c[fidx])), lo * (1.0 + 1e-9))

    def lhs(c_hat):
        return _condition12_on(sol, net, eta, c_hat, fidx, bidx)

    grid = np.linspace(lo, hi, 64)
    vals = [lhs(c) for c in grid]
    best = int(np.argmin(vals))
    a = grid[max(0, best - 1)]
    b = grid[min(len(grid) - 1, best + 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = lhs(c1), lhs(c2)
    for _ in range(60):
        if b - a < 1e-12 * max(1.0, abs(b)):
            break
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = lhs(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = lhs(c2)
    cands = [(vals[best], grid[best]), (f1, c1), (f2, c2)]
    fallback = float(np.max(sol.c[fidx]))
    if fallback >= lo:
        cands.append((lhs(fallback), fallback))
    val, c_hat = min(cands, key=lambda t: t[0])
    return float(c_hat), float(val)


def _nontrivial_components(sol: StaticSolution) -> list[tuple[np.ndarray, np.ndarray]]:
    # single-backend components have no routing freedom and no dynamics
    return [(f, b) for f, b in active_components(sol.active) if len(b) >= 2]


def stability_condition_lhs(sol: StaticSolution, net: Network, eta) -> float:
    """Stability condition over a possibly disconnected active graph.

    Each connected component is analyzed independently with its own best
    pivot; the binding (largest) left-hand side is returned. Components with
    a single backend have frozen routing and contribute nothing.
    """
    eta = np.asarray(eta, dtype=float)
    comps = _nontrivial_components(sol)
    if not comps:
        return 0.0
    return max(minimize_pivot(sol, net, eta, f, b)[1] for f, b in comps)


def critical_step_sizes(sol: StaticSolution, net: Network) -> tuple[np.ndarray, float]:
    """Step sizes proportional to arrival rates making the condition tight.

    The left-hand side is positively homogeneous of degree one in the step
    sizes, so the proportional-to-lambda ray is scaled until the binding
    component's minimized condition equals one. Returns (eta_critical, c_hat
    at the binding component's optimum pivot).
    """
    eta0 = net.lam / float(net.lam.sum())
    comps = _nontrivial_components(sol)
    if not comps:
        raise DisconnectedGraphError(
            "no component with routing freedom (all frontends single-homed)"
        )
    c_hat, val = max(
        (minimize_pivot(sol, net, eta0, f, b) for f, b in comps),
        key=lambda t: t[1],
    )
    if val <= 0.0:
        raise ValueError("degenerate stability condition (no curvature)")
    return eta0 / val, c_hat


def lemma9_margin(c: float, w: float, tau: float) -> float:
    """Half-space margin of f(tau) = e^{-2 tau i w} / (2 tau i w (i w (c - tau) + 1)).

    Returns Re(f) + 1 - w c Im(f); the geometric lemma asserts this is >= 0
    for 0 < tau < c and w > 0.
    """
    if not (0.0 < tau < c):
        raise ValueError("requires 0 < tau < c")
    if not w > 0.0:
        raise ValueError("requires w > 0")
    iw = 1j * w
    f = np.exp(-2.0 * tau * iw) / (2.0 * tau * iw * (iw * (c - tau) + 1.0))
    return float(f.real + 1.0 - w * c * f.imag)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    eta: np.ndarray
    laplacians: list[np.ndarray]  # per frontend, over covered backends
    gap: float
    gap_lower_bound: float
    lhs12: float
    lhs13: float | None  # single-frontend only
    c_hat: float
    tau_hat: np.ndarray  # per covered backend
    covered: np.ndarray  # covered backend indices
    eta_critical: np.ndarray
    stable: bool

    def to_dict(self) -> dict:
        return {
            "eta": self.eta.tolist(),
            "laplacians": [e.tolist() for e in self.laplacians],
            "gap": self.gap,
            "gap_lower_bound": self.gap_lower_bound,
            "lhs12": self.lhs12,
            "lhs13": self.lhs13,
            "c_hat": self.c_hat,
            "tau_hat": self.tau_hat.tolist(),
            "covered_backends": self.covered.tolist(),
            "eta_critical": self.eta_critical.tolist(),
            "stable": self.stable,
        }


def stability_report(net: Network, sol: StaticSolution, eta) -> StabilityReport:
    """Evaluate the stability condition at the given step sizes.

    On a disconnected active graph every component is analyzed independently
    and the report carries the binding (largest left-hand side) component's
    pivot quantities.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape == ():
        eta = np.full(net.F, float(eta))
    comps = _nontrivial_components(sol)
    if not comps:
        raise DisconnectedGraphError(
            "no component with routing freedom (all frontends single-homed)"
        )
    per_comp = [minimize_pivot(sol, net, eta, f, b) for f, b in comps]
    binding = int(np.argmax([v for _, v in per_comp]))
    c_hat, lhs12 = per_comp[binding]
    fidx, bidx = comps[binding]
    deriv = _rates.deriv_vec(net.fam[bidx], net.p1[bidx], net.p2[bidx], sol.N[bidx])
    gap = min(
        spectral_gap(weighted_laplacian(sol.active[np.ix_(f, b)], net.lam[f], eta[f]))
        for f, b in comps
    )
    bound = min(
        diameter_bound(net, sol.active[np.ix_(f, b)], net.lam[f], eta[f])
        for f, b in comps
    )
    eta_crit, _ = critical_step_sizes(sol, net)
    return StabilityReport(
        eta=eta,
        laplacians=[
            laplacian(sol.active[i, bidx].astype(float))
            if sol.active[i, bidx].any()
            else np.zeros((len(bidx), len(bidx)))
            for i in range(net.F)
        ],
        gap=gap,
        gap_lower_bound=bound,
        lhs12=lhs12,
        lhs13=condition13_lhs(sol, net, eta[0]) if net.F == 1 else None,
        c_hat=c_hat,
        tau_hat=c_hat - 1.0 / deriv,
        covered=bidx,
        eta_critical=eta_crit,
        stable=lhs12 < 1.0,
    )
