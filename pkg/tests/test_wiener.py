import csv
import json
import math
from fractions import Fraction as F

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigorstoch.errors import ContractViolation, NumericRefusal
from rigorstoch.exactnum import pow2
from rigorstoch.space import CantorPoint, SeededPoint
from rigorstoch.wiener import (
    HaarIndex,
    ScaledRoot,
    WienerPath,
    ensemble_values,
    haar,
    holder_estimate,
    reflection_check,
    sample_coefficients,
    sample_ensemble,
    sample_wiener,
    schauder,
    schauder_peak,
    stratum_mass,
    stratum_probability,
    tail_radius,
)


def test_haar_examples():
    assert haar(HaarIndex(0, 0), F(1, 4)) == 1
    assert haar(HaarIndex(0, 0), F(3, 4)) == -1
    assert haar(HaarIndex(1, 1), F(1, 4)) == 0
    assert haar(HaarIndex(1, 0), F(1, 8)) == ScaledRoot.of(1, 1)
    assert haar(HaarIndex(3, 2), F(5, 16)).square() == 8
    with pytest.raises(NumericRefusal):
        haar(HaarIndex(0, 0), F(3, 2))
    with pytest.raises(ContractViolation):
        HaarIndex(2, 4)


def integrate_haar(idx, t, cells=256):
    """Exact left Riemann sum; h is constant on cells of width 2^-8 for n < 8."""
    h = F(1, cells)
    acc = F(0)
    for j in range(cells):
        a = j * h
        if a >= t:
            break
        acc += haar(idx, a).sign() * min(h, t - a)
    # every nonzero value has the same magnitude 2^(n/2)
    return ScaledRoot.of(acc, idx.n)


@pytest.mark.parametrize("n,k", [(0, 0), (1, 0), (1, 1), (2, 3), (3, 5), (5, 17)])
def test_schauder_is_integral_of_haar(n, k):
    idx = HaarIndex(n, k)
    for j in range(0, 65):
        t = F(j, 64)
        assert schauder(idx, t) == integrate_haar(idx, t)
    assert schauder(idx, F(k, 2 ** n)) == 0
    assert schauder(idx, F(2 * k + 1, 2 ** (n + 1))) == schauder_peak(n)


def test_schauder_peak_values():
    assert schauder_peak(0) == F(1, 2)
    assert schauder(HaarIndex(0, 0), F(1, 2)) == schauder_peak(0)
    for n in range(8):
        assert schauder_peak(n).square() == F(1, 2 ** (n + 2))


def tail_oracle(m, terms=200):
    mpmath.mp.dps = 40
    s = mpmath.fsum(n * mpmath.mpf(2) ** (-mpmath.mpf(n) / 2) for n in range(m + 1, m + terms + 1))
    N = m + terms + 1
    r = mpmath.mpf(2) ** -0.5
    # remainder sum_{n >= N} n r^n in closed form
    rem = r ** N * (N - (N - 1) * r) / (1 - r) ** 2
    return s + rem


def test_tail_radius_examples():
    vals = [tail_radius(m) for m in range(1, 60)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    ref = tail_oracle(10)
    t10 = tail_radius(10)
    assert mpmath.mpf(t10.numerator) / t10.denominator >= ref
    assert abs(mpmath.mpf(t10.numerator) / t10.denominator - ref) <= 2.0 ** -10
    m_star = next(m for m in range(1, 100) if tail_radius(m) < pow2(-4))
    assert float(tail_oracle(m_star)) < 2.0 ** -4
    assert float(tail_oracle(m_star - 1)) >= 2.0 ** -4


def test_stratum_probability_examples():
    assert stratum_probability(6) == 1 - pow2(-6)
    assert stratum_probability(10) == 1 - pow2(-10)
    with pytest.raises(NumericRefusal):
        stratum_probability(5)
    assert sum(stratum_mass(j) for j in range(0, 80)) == 1 - pow2(-74)


def zero_point():
    """Copy 0 all zeros (stratum 6); every coefficient word is 0x8000... so u is about 1/2."""
    return CantorPoint.from_copies(lambda c: CantorPoint(lambda j: int(c == 1 and j % 64 == 0)))


def test_zero_coefficient_fixture():
    m = 6
    tol = pow2(-30)
    p = sample_wiener(zero_point(), m, tol=tol)
    assert p.stratum == 6
    assert (p.lo <= 0).all() and (p.hi >= 0).all()
    assert p.lo[0] == p.hi[0] == 0
    assert p.uniform_slack <= p.tail + tol * 2 ** (m + 1)
    assert holder_estimate(p, F(1, 2)) <= 1e-12


def test_bit_exhaustion_refused_in_statistical_mode():
    with pytest.raises(NumericRefusal):
        sample_wiener(CantorPoint(lambda i: 0), 6, mode="statistical")
    with pytest.raises(ContractViolation):
        sample_wiener(SeededPoint(1), 5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 40), st.integers(6, 9), st.integers(1, 4), st.sampled_from(["stratified", "statistical"]))
def test_finer_levels_stay_inside_coarse_enclosure(seed, m1, dm, mode):
    coarse = sample_wiener(SeededPoint(seed), m1, mode=mode)
    fine = sample_wiener(SeededPoint(seed), m1 + dm, mode=mode)
    step = 2 ** dm
    r = float(coarse.tail)
    assert (fine.lo[::step] >= coarse.lo - r).all()
    assert (fine.hi[::step] <= coarse.hi + r).all()


def test_level_fifteen_inside_level_ten():
    for seed in range(4):
        coarse = sample_wiener(SeededPoint(seed), 10)
        fine = sample_wiener(SeededPoint(seed), 15)
        r = float(coarse.tail)
        for j, t in enumerate(fine.breakpoints[:: 2 ** 3]):
            v = coarse.value_at(t)
            assert float(v.lower) - r <= fine.lo[j * 8] and fine.hi[j * 8] <= float(v.upper) + r


def test_same_seed_same_path():
    a = sample_ensemble(range(20), 7, batch=3, threads=4)
    b = sample_ensemble(range(20), 7)
    for p, q in zip(a, b):
        assert np.array_equal(p.lo, q.lo) and np.array_equal(p.hi, q.hi)
    s = sample_coefficients(SeededPoint(3), 6)
    assert s.coeff(HaarIndex(6, 0)).width < pow2(-29)


def test_endpoint_variance(ensemble):
    w1 = ensemble_values(ensemble, 1)
    assert 0.85 <= w1.var(ddof=1) <= 1.15
    assert all(p.lo[0] == p.hi[0] == 0 for p in ensemble)


@pytest.mark.parametrize("s,t", [(F(a, 4), F(b, 4)) for a in range(1, 5) for b in range(a, 5)])
def test_covariance(ensemble, s, t):
    ws, wt = ensemble_values(ensemble, s), ensemble_values(ensemble, t)
    n = len(ensemble)
    est = float(np.mean(ws * wt))
    # Var(W_s W_t) = s t + s^2 for s <= t
    sigma = math.sqrt(float(s * t + s * s) / n)
    assert abs(est - float(s)) <= 3 * sigma


def test_increment_independence(ensemble):
    a = ensemble_values(ensemble, F(1, 2))
    b = ensemble_values(ensemble, 1) - a
    assert abs(np.corrcoef(a, b)[0, 1]) <= 3 / math.sqrt(len(ensemble))


def test_reflection_examples(ensemble):
    zero = reflection_check(ensemble, 0)
    assert zero.p_max == 1 and zero.verdict
    one = reflection_check(ensemble, 1)
    assert one.reference.contains(F(3173, 10000)) or abs(float(one.reference.mid) - 0.3173) < 1e-4
    assert one.verdict
    far = reflection_check(ensemble, 5)
    assert far.p_max < 0.002 and far.p_end_twice < 0.002 and far.verdict


def test_holder_examples():
    m = 6
    g = 2 ** (m + 1)
    line = WienerPath.from_values(m, [j / g for j in range(g + 1)])
    assert holder_estimate(line, F(1, 2)) == 1
    seq = [holder_estimate(sample_wiener(SeededPoint(9), m), F(a, 10)) for a in range(1, 10)]
    assert seq == sorted(seq)


def test_csv_and_sidecar(tmp_path):
    p = sample_ensemble([11], 6)[0]
    f = tmp_path / "path_11.csv"
    p.write_csv(str(f))
    rows = list(csv.reader(open(f)))
    assert rows[0] == ["t", "lower", "upper", "uniform_slack"]
    assert len(rows) == 2 ** 7 + 2
    assert rows[-1][0] == "1"
    meta = json.load(open(str(f) + ".json"))
    assert meta["seed"] == 11 and meta["level"] == 6 and meta["mode"] == "stratified"
