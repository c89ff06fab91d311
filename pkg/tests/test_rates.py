import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fluidlb.errors import InfeasibleThroughputError
from fluidlb.rates import (
    AffineRate,
    HyperbolicRate,
    SqrtRate,
    deriv_vec,
    inverse_vec,
    pack_rates,
    rate_vec,
    sigma_vec,
)
from oracles import bisect_inverse, central_diff


def _random_rate(rng):
    if rng.random() < 0.5:
        return SqrtRate(a=rng.uniform(0.5, 5.0), b=rng.uniform(0.5, 5.0))
    return HyperbolicRate(k=rng.uniform(1.0, 15.0), s=rng.uniform(0.2, 3.0))


def _sample_n(rng, fn):
    hi = fn.k + 3.0 if isinstance(fn, HyperbolicRate) else 10.0
    return rng.uniform(0.0, hi)


def test_rate_values():
    assert SqrtRate(1, 2).rate(0.0) == 0.0
    assert SqrtRate(1, 2).rate(4.0) == pytest.approx(2.0, abs=1e-12)
    assert HyperbolicRate(5, 1).rate(0.0) == 0.0


def test_deriv_closed_forms():
    assert SqrtRate(1, 2).deriv(0.625) == pytest.approx(2.0 / 3.0, abs=1e-14)
    # deep in the plateau the marginal rate vanishes
    assert HyperbolicRate(5, 1).deriv(500.0) < 1e-200


def test_sqrt_curvature_ratio_constant():
    # -l''/l'^3 = 2/b independently of the workload
    for b in (0.5, 2.0, 7.0):
        fn = SqrtRate(a=1.3, b=b)
        for n in (0.0, 0.625, 3.0, 42.0):
            ratio = -fn.second_deriv(n) / fn.deriv(n) ** 3
            assert ratio == pytest.approx(2.0 / b, rel=1e-12)


def test_sigma_values():
    assert SqrtRate(1, 2).sigma(0.625) == pytest.approx(2.0 / 3.0, abs=1e-14)
    assert AffineRate(1.5).sigma(3.0) == 0.0
    fn = HyperbolicRate(2, 0.5)
    fd = -central_diff(fn.deriv, 2.0, 1e-6) / fn.deriv(2.0) ** 2
    assert fn.sigma(2.0) == pytest.approx(fd, rel=1e-6)


def test_inverse_closed_form():
    assert SqrtRate(1, 2).inverse(0.5) == pytest.approx(0.625, abs=1e-14)
    assert SqrtRate(1, 2).inverse(0.0) == 0.0
    assert HyperbolicRate(5, 1).inverse(0.0) == 0.0


def test_inverse_hyperbolic_near_capacity():
    fn = HyperbolicRate(5, 1)
    n = fn.inverse(4.999)
    assert abs(fn.rate(n) - 4.999) < 1e-10
    ref = bisect_inverse(fn.rate, 4.999, 0.0, 100.0)
    assert n == pytest.approx(ref, abs=1e-8)


def test_inverse_rejects_capacity():
    fn = HyperbolicRate(5, 1)
    with pytest.raises(InfeasibleThroughputError):
        fn.inverse(5.0)
    with pytest.raises(InfeasibleThroughputError):
        fn.inverse(5.1)


def test_capacity():
    assert HyperbolicRate(5, 1).capacity() == pytest.approx(5.0)
    assert HyperbolicRate(2, 0.5).capacity() == pytest.approx(4.0)
    assert SqrtRate(3, 1).capacity() == math.inf


def test_negative_workload_rejected():
    for fn in (SqrtRate(1, 2), HyperbolicRate(5, 1), AffineRate(1.0)):
        with pytest.raises(ValueError):
            fn.rate(-0.5)
        with pytest.raises(ValueError):
            fn.deriv(-0.5)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(20240601)
    for _ in range(1000):
        fn = _random_rate(rng)
        n = _sample_n(rng, fn) + 0.01
        fd1 = central_diff(fn.rate, n, 1e-5)
        assert fn.deriv(n) == pytest.approx(fd1, rel=1e-6)
        # absolute floor scaled to l': where the curve is nearly linear the
        # difference quotient of l' cancels below float resolution
        fd2 = central_diff(fn.deriv, n, 1e-4)
        assert fn.second_deriv(n) == pytest.approx(
            fd2, rel=1e-5, abs=1e-8 * (1.0 + fn.deriv(n))
        )


def test_inverse_roundtrip():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(500):
        fn = _random_rate(rng)
        n = _sample_n(rng, fn)
        y = fn.rate(n)
        if y >= fn.capacity():  # l crests slightly above k/s; out of contract
            continue
        checked += 1
        assert abs(fn.rate(fn.inverse(y)) - y) < 1e-10
        assert fn.inverse(y) == pytest.approx(n, abs=1e-9)
    assert checked > 400


def test_monotone_and_concave():
    rng = np.random.default_rng(11)
    for _ in range(300):
        fn = _random_rate(rng)
        n1, n2 = sorted((_sample_n(rng, fn), _sample_n(rng, fn)))
        if n2 - n1 < 1e-9:
            continue
        assert fn.rate(n1) < fn.rate(n2)
        assert fn.deriv(n1) >= fn.deriv(n2) - 1e-12


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(5)
    fns = [_random_rate(rng) for _ in range(40)] + [AffineRate(0.7)]
    codes, p1, p2 = pack_rates(fns)
    n = np.array([_sample_n(rng, f) for f in fns])
    assert rate_vec(codes, p1, p2, n) == pytest.approx([f.rate(v) for f, v in zip(fns, n)], rel=1e-14)
    assert deriv_vec(codes, p1, p2, n) == pytest.approx([f.deriv(v) for f, v in zip(fns, n)], rel=1e-14)
    assert sigma_vec(codes, p1, p2, n) == pytest.approx([f.sigma(v) for f, v in zip(fns, n)], rel=1e-12, abs=1e-300)
    y = rate_vec(codes, p1, p2, n)
    inv = inverse_vec(codes, p1, p2, y)
    assert inv == pytest.approx(n, abs=1e-8)


@given(st.floats(0.5, 5.0), st.floats(0.5, 5.0), st.floats(0.0, 50.0))
def test_sqrt_inverse_is_exact(a, b, n):
    fn = SqrtRate(a, b)
    assert fn.inverse(fn.rate(n)) == pytest.approx(n, rel=1e-12, abs=1e-9)


@given(st.floats(1.0, 20.0), st.floats(0.1, 4.0), st.floats(0.0, 1.0, exclude_max=True))
def test_hyperbolic_inverse_feasible_range(k, s, frac):
    fn = HyperbolicRate(k, s)
    y = frac * fn.capacity()
    n = fn.inverse(y)
    assert n >= 0.0
    assert abs(fn.rate(n) - y) < 1e-10
