"""Processing-rate function families: value, derivatives, curvature, inverse.

Each backend serves requests at a rate ``l(N)`` that is a strictly
increasing, concave, twice-differentiable function of its workload ``N``
with ``l(0) = 0``. Two parametric families are supported:

* square-root: ``l(N) = sqrt(a + b N) - sqrt(a)``, unbounded capacity;
* hyperbolic: ``l(N) = (N + log cosh(k) - log cosh(k - N)) / (2 s)``,
  roughly linear with slope ``1/s`` below ``k`` servers' worth of work and
  saturating at capacity ``k/s`` above it.

An affine family (``l(N) = slope * N``) exists purely for tests; its slope
may be zero, which breaks the strict-monotonicity contract on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleThroughputError

_LOG2 = math.log(2.0)

# integer codes used for vectorized dispatch and the simulation kernel
SQRT, HYPERBOLIC, AFFINE = 0, 1, 2


def log_cosh(x: float) -> float:
    # |x| + log1p(e^{-2|x|}) - log 2: immune to overflow for large |x|
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - _LOG2


def _logistic(u: float) -> float:
    if u >= 0.0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


@dataclass(frozen=True)
class ProcessingRate:
    """Base type; use :class:`SqrtRate`, :class:`HyperbolicRate` or :class:`AffineRate`."""

    @property
    def family(self) -> str:
        raise NotImplementedError

    def code_params(self) -> tuple[int, float, float]:
        """(family code, p1, p2) encoding for array-based dispatch."""
        raise NotImplementedError

    def rate(self, n: float) -> float:
        raise NotImplementedError

    def deriv(self, n: float) -> float:
        raise NotImplementedError

    def second_deriv(self, n: float) -> float:
        raise NotImplementedError

    def capacity(self) -> float:
        raise NotImplementedError

    def sigma(self, n: float) -> float:
        """Curvature -l''(N) / l'(N)^2 (seconds per request/second)."""
        self._check_n(n)
        d = self.deriv(n)
        return -self.second_deriv(n) / (d * d)

    def inverse(self, y: float) -> float:
        """Workload N with l(N) = y; rejects y at or above capacity."""
        raise NotImplementedError

    @staticmethod
    def _check_n(n: float) -> None:
        if n < 0.0:
            raise ValueError(f"workload must be nonnegative, got {n}")

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "ProcessingRate":
        fam = d["family"]
        if fam == "sqrt":
            return SqrtRate(a=float(d["a"]), b=float(d["b"]))
        if fam == "hyperbolic":
            return HyperbolicRate(k=float(d["k"]), s=float(d["s"]))
        if fam == "affine":
            return AffineRate(slope=float(d["slope"]))
        raise ValueError(f"unknown rate family {fam!r}")


@dataclass(frozen=True)
class SqrtRate(ProcessingRate):
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError("sqrt family requires a > 0 and b > 0")

    @property
    def family(self) -> str:
        return "sqrt"

    def code_params(self) -> tuple[int, float, float]:
        return SQRT, self.a, self.b

    def rate(self, n: float) -> float:
        self._check_n(n)
        return math.sqrt(self.a + self.b * n) - math.sqrt(self.a)

    def deriv(self, n: float) -> float:
        self._check_n(n)
        return self.b / (2.0 * math.sqrt(self.a + self.b * n))

    def second_deriv(self, n: float) -> float:
        self._check_n(n)
        return -self.b * self.b / (4.0 * (self.a + self.b * n) ** 1.5)

    def capacity(self) -> float:
        return math.inf

    def inverse(self, y: float) -> float:
        if y < 0.0:
            raise ValueError(f"throughput must be nonnegative, got {y}")
        r = y + math.sqrt(self.a)
        return (r * r - self.a) / self.b

    def to_dict(self) -> dict:
        return {"family": "sqrt", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class HyperbolicRate(ProcessingRate):
    k: float
    s: float

    def __post_init__(self):
        if not (self.k >= 1.0 and self.s > 0.0):
            raise ValueError("hyperbolic family requires k >= 1 and s > 0")

    @property
    def family(self) -> str:
        return "hyperbolic"

    def code_params(self) -> tuple[int, float, float]:
        return HYPERBOLIC, self.k, self.s

    def rate(self, n: float) -> float:
        self._check_n(n)
        return (n + log_cosh(self.k) - log_cosh(self.k - n)) / (2.0 * self.s)

    def deriv(self, n: float) -> float:
        # (1 + tanh(k - N)) / (2 s), written through the logistic for stability
        self._check_n(n)
        return _logistic(2.0 * (self.k - n)) / self.s

    def second_deriv(self, n: float) -> float:
        # -sech^2(k - N) / (2 s)
        self._check_n(n)
        th = 2.0 * (self.k - n)
        return -2.0 * _logistic(th) * _logistic(-th) / self.s

    def sigma(self, n: float) -> float:
        # -l''/l'^2 collapses to 2 s e^{2(N-k)}
        self._check_n(n)
        return 2.0 * self.s * math.exp(2.0 * (n - self.k))

    def capacity(self) -> float:
        return self.k / self.s

    def inverse(self, y: float) -> float:
        if y < 0.0:
            raise ValueError(f"throughput must be nonnegative, got {y}")
        if y >= self.capacity():
            raise InfeasibleThroughputError(
                f"throughput {y:.6g} at or above capacity {self.capacity():.6g}"
            )
        if y == 0.0:
            return 0.0
        # safeguarded Newton within a bisection bracket; 1e-12 residual target
        lo, hi = 0.0, self.k + self.s * y * 10.0 + 50.0
        n = min(self.s * y, hi)  # near-linear regime guess
        for _ in range(200):
            r = self.rate(n) - y
            if abs(r) <= 1e-12:
                return n
            if r > 0.0:
                hi = n
            else:
                lo = n
            step = r / self.deriv(n)
            n_new = n - step
            if not (lo < n_new < hi):
                n_new = 0.5 * (lo + hi)
            n = n_new
        return n

    def to_dict(self) -> dict:
        return {"family": "hyperbolic", "k": self.k, "s": self.s}


@dataclass(frozen=True)
class AffineRate(ProcessingRate):
    """Test-only family l(N) = slope * N (slope 0 models a sink-less backend)."""

    slope: float

    def __post_init__(self):
        if self.slope < 0.0:
            raise ValueError("affine slope must be nonnegative")

    @property
    def family(self) -> str:
        return "affine"

    def code_params(self) -> tuple[int, float, float]:
        return AFFINE, self.slope, 0.0

    def rate(self, n: float) -> float:
        self._check_n(n)
        return self.slope * n

    def deriv(self, n: float) -> float:
        self._check_n(n)
        return self.slope

    def second_deriv(self, n: float) -> float:
        self._check_n(n)
        return 0.0

    def sigma(self, n: float) -> float:
        self._check_n(n)
        return 0.0

    def capacity(self) -> float:
        return math.inf if self.slope > 0.0 else 0.0

    def inverse(self, y: float) -> float:
        if y < 0.0:
            raise ValueError(f"throughput must be nonnegative, got {y}")
        if y == 0.0:
            return 0.0
        if self.slope == 0.0:
            raise InfeasibleThroughputError("zero-slope affine rate serves nothing")
        return y / self.slope

    def to_dict(self) -> dict:
        return {"family": "affine", "slope": self.slope}


# ---------------------------------------------------------------------------
# vectorized evaluation over a heterogeneous collection of backends
# ---------------------------------------------------------------------------


def pack_rates(rates) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode a sequence of ProcessingRate into (codes, p1, p2) arrays."""
    codes = np.empty(len(rates), dtype=np.int64)
    p1 = np.empty(len(rates))
    p2 = np.empty(len(rates))
    for j, r in enumerate(rates):
        codes[j], p1[j], p2[j] = r.code_params()
    return codes, p1, p2


def rate_vec(codes, p1, p2, n):
    out = np.empty_like(n, dtype=float)
    m = codes == SQRT
    if m.any():
        out[m] = np.sqrt(p1[m] + p2[m] * n[m]) - np.sqrt(p1[m])
    m = codes == HYPERBOLIC
    if m.any():
        x = p1[m] - n[m]
        ax = np.abs(x)
        lc = ax + np.log1p(np.exp(-2.0 * ax)) - _LOG2
        ak = np.abs(p1[m])
        lck = ak + np.log1p(np.exp(-2.0 * ak)) - _LOG2
        out[m] = (n[m] + lck - lc) / (2.0 * p2[m])
    m = codes == AFFINE
    if m.any():
        out[m] = p1[m] * n[m]
    return out


def deriv_vec(codes, p1, p2, n):
    out = np.empty_like(n, dtype=float)
    m = codes == SQRT
    if m.any():
        out[m] = p2[m] / (2.0 * np.sqrt(p1[m] + p2[m] * n[m]))
    m = codes == HYPERBOLIC
    if m.any():
        u = 2.0 * (p1[m] - n[m])
        out[m] = _logistic_vec(u) / p2[m]
    m = codes == AFFINE
    if m.any():
        out[m] = p1[m]
    return out


def sigma_vec(codes, p1, p2, n):
    out = np.empty_like(n, dtype=float)
    m = codes == SQRT
    if m.any():
        out[m] = 1.0 / np.sqrt(p1[m] + p2[m] * n[m])
    m = codes == HYPERBOLIC
    if m.any():
        out[m] = 2.0 * p2[m] * np.exp(2.0 * (n[m] - p1[m]))
    m = codes == AFFINE
    if m.any():
        out[m] = 0.0
    return out


def capacity_vec(codes, p1, p2):
    out = np.full(codes.shape, np.inf)
    m = codes == HYPERBOLIC
    out[m] = p1[m] / p2[m]
    m = (codes == AFFINE) & (p1 == 0.0)
    out[m] = 0.0
    return out


def _logistic_vec(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def inverse_vec(codes, p1, p2, y, warm=None):
    """Vectorized l^{-1}(y) per backend, Newton-polished from ``warm`` if given.

    Same 1e-12 absolute residual target as the scalar inverses. Assumes the
    caller already checked y < capacity.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    m = codes == SQRT
    if m.any():
        r = y[m] + np.sqrt(p1[m])
        out[m] = (r * r - p1[m]) / p2[m]
    m = codes == AFFINE
    if m.any():
        out[m] = np.where(y[m] == 0.0, 0.0, y[m] / np.where(p1[m] > 0, p1[m], 1.0))
    m = codes == HYPERBOLIC
    if m.any():
        idx = np.nonzero(m)[0]
        n = warm[idx].copy() if warm is not None else p2[idx] * y[idx]
        n = np.maximum(n, 0.0)
        target = y[idx]
        for _ in range(100):
            resid = rate_vec(codes[idx], p1[idx], p2[idx], n) - target
            if np.all(np.abs(resid) <= 1e-12):
                break
            n = n - resid / deriv_vec(codes[idx], p1[idx], p2[idx], n)
            n = np.maximum(n, 0.0)
        else:
            # Newton failed somewhere: fall back to the scalar safeguarded inverse
            for pos, j in enumerate(idx):
                n[pos] = HyperbolicRate(k=p1[j], s=p2[j]).inverse(target[pos])
        out[idx] = n
        out[m & (y == 0.0)] = 0.0
    return out
