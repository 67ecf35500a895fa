from fractions import Fraction as F

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigorstoch.errors import NumericRefusal
from rigorstoch.exactnum import DyadicInterval, pow2
from rigorstoch.validated import (
    MIN_TOL,
    add_iv,
    cos_interval,
    cos_iv,
    exp_interval,
    exp_iv,
    exp_point,
    gaussian_quantile,
    mul_iv,
    phi_bounds,
    phi_enclosure,
    quantile_bounds,
    sin_interval,
    sin_iv,
    sub_iv,
)

mpmath.mp.dps = 50


def mp_phi(x):
    return mpmath.ncdf(mpmath.mpf(x))


def mp(q):
    return mpmath.mpf(q.numerator) / q.denominator


def contains(iv, value):
    return mp(iv.lower) <= value <= mp(iv.upper)


floats = st.floats(-40, 40, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(floats)
def test_phi_bounds_enclose_high_precision_cdf(x):
    lo, hi = phi_bounds(np.array([x]))
    ref = mp_phi(x)
    assert mpmath.mpf(lo[0]) <= ref <= mpmath.mpf(hi[0])


def test_phi_bounds_are_tight():
    xs = np.linspace(-37, 8, 4501)
    lo, hi = phi_bounds(xs)
    assert (hi - lo).max() <= 1e-13
    # relative width stays small deep in the lower tail
    assert ((hi - lo) / hi).max() <= 1e-10
    assert phi_bounds(np.array([-np.inf, np.inf]))[0].tolist() == [0.0, 1.0]


def test_phi_enclosure_of_interval():
    e = phi_enclosure(DyadicInterval(F(-1), F(1)))
    assert contains(e, mp_phi(-1)) and contains(e, mp_phi(1))
    assert contains(phi_enclosure(0), mpmath.mpf(1) / 2)


def test_gaussian_quantile_examples():
    tol = pow2(-30)
    z = gaussian_quantile(DyadicInterval.point(F(1, 2)), tol)
    assert z.contains(0) and z.width <= tol
    q = gaussian_quantile(DyadicInterval(F(84, 100), F(85, 100)), tol)
    assert q.contains(1)
    assert contains(phi_enclosure(q), mpmath.mpf("0.84"))
    for u in (F(1, 10), F(1, 1000), F(3, 7)):
        a = gaussian_quantile(DyadicInterval.point(u), tol)
        b = gaussian_quantile(DyadicInterval.point(1 - u), tol)
        assert abs(a.mid + b.mid) <= 2 * tol
        assert contains(a, mpmath.sqrt(2) * mpmath.erfinv(2 * mp(u) - 1))


def test_gaussian_quantile_refusals():
    with pytest.raises(NumericRefusal):
        gaussian_quantile(DyadicInterval(F(0), F(1, 2)), pow2(-20))
    with pytest.raises(NumericRefusal):
        gaussian_quantile(DyadicInterval.point(F(1, 2)), 0)
    with pytest.raises(NumericRefusal):
        quantile_bounds(np.array([0.3]), np.array([0.3]), MIN_TOL / 4)


probs = st.fractions(min_value=F(1, 10 ** 6), max_value=1 - F(1, 10 ** 6), max_denominator=10 ** 6)


@settings(max_examples=60, deadline=None)
@given(probs, probs)
def test_gaussian_quantile_monotone(a, b):
    a, b = min(a, b), max(a, b)
    if a == b:
        return
    mid = (a + b) / 2
    left = gaussian_quantile(DyadicInterval(a, mid), pow2(-30))
    right = gaussian_quantile(DyadicInterval(mid, b), pow2(-30))
    assert left.lower <= right.upper
    assert left.mid <= right.mid


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-12, 0.5), st.floats(0, 0.01))
def test_quantile_bounds_bracket(p, dp):
    lo, hi = quantile_bounds(np.array([max(p - dp, 0.0)]), np.array([p]), 2.0 ** -30)
    ref_lo = mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(max(p - dp, 0.0)) - 1) if p - dp > 0 else -mpmath.inf
    ref_hi = mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1)
    assert mpmath.mpf(lo[0]) <= ref_lo or lo[0] == -np.inf
    assert ref_hi <= mpmath.mpf(hi[0])


rat = st.fractions(min_value=-30, max_value=30, max_denominator=1000)


@settings(max_examples=80, deadline=None)
@given(rat)
def test_exp_point_encloses(q):
    e = exp_point(q, 64)
    assert contains(e, mpmath.exp(mp(q)))
    assert e.width <= pow2(-60) * max(1, e.upper)


@settings(max_examples=80, deadline=None)
@given(rat, st.fractions(min_value=0, max_value=2, max_denominator=100))
def test_trig_intervals_enclose(q, w):
    x = DyadicInterval(q, q + w)
    s, c = sin_interval(x), cos_interval(x)
    for t in (q, q + w / 3, q + w / 2, q + w):
        assert contains(s, mpmath.sin(mp(t)))
        assert contains(c, mpmath.cos(mp(t)))


def test_trig_examples():
    assert sin_interval(DyadicInterval(F(1), F(2))).upper == 1
    assert cos_interval(DyadicInterval(F(3), F(4))).lower == -1
    assert sin_interval(DyadicInterval(F(0), F(7))) == DyadicInterval(F(-1), F(1))
    assert exp_interval(DyadicInterval(F(0), F(1))).contains(F(1))


vec = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=2).map(sorted)


@settings(max_examples=150, deadline=None)
@given(vec, vec)
def test_vector_interval_ops_enclose(a, b):
    alo, ahi = np.array([a[0]]), np.array([a[1]])
    blo, bhi = np.array([b[0]]), np.array([b[1]])
    for x in (F(a[0]), F(a[1]), (F(a[0]) + F(a[1])) / 2):
        for y in (F(b[0]), F(b[1])):
            lo, hi = add_iv(alo, ahi, blo, bhi)
            assert F(lo[0]) <= x + y <= F(hi[0])
            lo, hi = sub_iv(alo, ahi, blo, bhi)
            assert F(lo[0]) <= x - y <= F(hi[0])
            lo, hi = mul_iv(alo, ahi, blo, bhi)
            assert F(lo[0]) <= x * y <= F(hi[0])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=2).map(sorted))
def test_vector_elementary_functions_enclose(ab):
    lo, hi = np.array([ab[0]]), np.array([ab[1]])
    for f, ref in ((exp_iv, mpmath.exp), (sin_iv, mpmath.sin), (cos_iv, mpmath.cos)):
        ylo, yhi = f(lo, hi)
        for t in (ab[0], ab[1], 0.5 * (ab[0] + ab[1])):
            v = ref(mpmath.mpf(t))
            assert mpmath.mpf(ylo[0]) <= v <= mpmath.mpf(yhi[0])
