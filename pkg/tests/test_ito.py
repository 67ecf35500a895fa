import itertools
from fractions import Fraction as F

import numpy as np
import pytest

from rigorstoch import randvar as rv
from rigorstoch.errors import ContractViolation
from rigorstoch.exactnum import DyadicInterval, pow2
from rigorstoch.ito import (
    PathStep,
    StepProcess,
    constant_process,
    indicator_after,
    ito_extend,
    ito_isometry_check,
    ito_step,
    martingale_l2_bound,
    martingale_mean_check,
    norm_inequality_check,
    random_walk,
    step_approximate,
    submartingale_bound,
    uniform_grid,
    wiener_integrand_sequence,
)
from rigorstoch.space import SeededPoint, global_index
from rigorstoch.wiener import sample_wiener


def fair_sign(copy=2):
    """+-1 with probability 1/2, read from a block disjoint from the Wiener bits."""
    return rv.rv_image(lambda iv: iv * 2 - 1, rv.bit(global_index(copy, 0)))


# ---------------------------------------------------------------------------
# step approximation

def test_step_approximation_examples():
    c = step_approximate([F(3, 2)], uniform_grid(1, 4))
    assert c.error_squared == 0 and c.exact
    lin = step_approximate([0, 1], uniform_grid(1, 4))
    assert [v.value for v in lin.process.values] == [0, F(1, 4), F(1, 2), F(3, 4)]
    assert lin.error_squared == F(1, 48)
    errs = [step_approximate([0, 1], uniform_grid(1, 2 ** k)).error_squared for k in range(1, 6)]
    assert all(b == a / 4 for a, b in zip(errs, errs[1:]))


def test_step_approximation_of_callable_uses_lipschitz_bound():
    s = step_approximate(lambda t: 2 * t, uniform_grid(1, 8), lipschitz=2)
    exact = step_approximate([0, 2], uniform_grid(1, 8)).error_squared
    assert s.error_squared == exact
    with pytest.raises(ContractViolation):
        step_approximate(lambda t: t, uniform_grid(1, 4))


def test_step_process_contracts():
    with pytest.raises(ContractViolation):
        StepProcess([0, F(1, 2), F(1, 2)], [1, 1])
    with pytest.raises(ContractViolation):
        StepProcess([0, 1], [rv.bit(0)])
    with pytest.raises(ContractViolation):
        StepProcess([0, F(1, 2), 1], [PathStep.wiener_value(F(1, 2)), 1])


# ---------------------------------------------------------------------------
# the integral on single paths

def test_ito_step_examples():
    W = sample_wiener(SeededPoint(4), 8)
    one = ito_step(constant_process(1), W)
    assert np.all(one.lo <= W.lo) and np.all(one.hi >= W.hi)
    assert one.endpoint().width <= 2 * W.endpoint().width + pow2(-40)
    three = ito_step(constant_process(3), W)
    assert np.allclose(three.mid, 3 * W.mid, atol=1e-12)
    ind = ito_step(indicator_after(F(1, 2)), W)
    j = W.index_of(F(1, 2))
    assert np.all(ind.lo[:j + 1] <= 0) and np.all(ind.hi[:j + 1] >= 0)
    diff_lo, diff_hi = W.lo[j:] - W.hi[j], W.hi[j:] - W.lo[j]
    assert np.all(ind.lo[j:] <= diff_hi) and np.all(ind.hi[j:] >= diff_lo)
    assert np.allclose(ind.mid[j:], W.mid[j:] - W.mid[j], atol=1e-12)


def test_ito_step_of_random_step_value():
    X = StepProcess([0, 1], [fair_sign()])
    W = sample_wiener(SeededPoint(6), 7)
    omega = SeededPoint(6)
    I = ito_step(X, W, omega)
    s = fair_sign().continuous.evaluate(omega, 0)[0]
    assert np.allclose(I.mid, float(s.mid) * W.mid, atol=1e-12)


def test_grid_mismatch_refused():
    W = sample_wiener(SeededPoint(1), 6)
    with pytest.raises(ContractViolation):
        ito_step(indicator_after(F(1, 3)), W)


def test_refinement_stays_inside_coarse_enclosure():
    X = StepProcess([0, F(1, 4), F(1, 2), 1], [1, -2, F(1, 2)])
    for seed in range(6):
        coarse_W = sample_wiener(SeededPoint(seed), 6)
        fine_W = sample_wiener(SeededPoint(seed), 9)
        coarse, fine = ito_step(X, coarse_W), ito_step(X, fine_W)
        # each increment moves by at most 2 * tail, times |X_i| summed over steps
        r = float(2 * coarse_W.tail * (1 + 2 + F(1, 2)))
        assert np.all(fine.lo[::8] >= coarse.lo - r) and np.all(fine.hi[::8] <= coarse.hi + r)


# ---------------------------------------------------------------------------
# ensemble checks

def test_isometry_examples(ensemble):
    assert ito_isometry_check(constant_process(1), paths=ensemble).verdict
    half = ito_isometry_check(indicator_after(F(1, 2)), paths=ensemble)
    assert half.reference == DyadicInterval.point(F(1, 2)) and half.verdict
    coin = ito_isometry_check(StepProcess([0, 1], [fair_sign()]), paths=ensemble)
    assert coin.reference == DyadicInterval.point(1) and coin.verdict


def test_martingale_mean(ensemble):
    X = StepProcess([0, F(1, 4), F(1, 2), F(3, 4), 1], [1, -1, 2, PathStep.wiener_value(F(3, 4))])
    assert martingale_mean_check(X, paths=ensemble).verdict


def test_norm_inequality(ensemble):
    r = norm_inequality_check(StepProcess([0, F(1, 2), 1], [2, 1]), paths=ensemble)
    assert r.verdict and r.details["rhs_squared"] == 16


def test_wiener_integral_limit(ensemble):
    ext = ito_extend(wiener_integrand_sequence(), F(3, 2), sup_norm=1)
    n = 5
    ints = ext.at(n).evaluate(ensemble)
    lhs = np.array([I.mid[-1] for I in ints])
    w1 = np.array([p.mid[-1] for p in ensemble])
    diff = lhs - (w1 ** 2 - 1) / 2
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / np.sqrt(len(diff)) + 1e-12
    assert np.sqrt((diff ** 2).mean()) <= float(ext.error(n))
    assert ext.spot_check(3, 4, ensemble[:512]).verdict
    assert ext.norm.value.upper == 2


def test_extension_constant_sequence_and_certificate_scaling():
    W = sample_wiener(SeededPoint(2), 7)
    X = indicator_after(F(1, 4))
    ext = ito_extend(lambda n: X, 1)
    assert np.array_equal(ext.at(3).evaluate([W])[0].lo, ito_step(X, W).lo)
    double = ito_extend(lambda n: X, 2)
    assert all(double.error(n) == 2 * ext.error(n) for n in range(6))


# ---------------------------------------------------------------------------
# exact martingale inequalities

def walk_oracle(n):
    """E max_k S_k^2, Pr(max_k |S_k| >= 2), E|S_n| by enumerating all 2^n sign paths."""
    emax2 = F(0)
    hit = F(0)
    e_abs = F(0)
    for signs in itertools.product((-1, 1), repeat=n):
        s = list(itertools.accumulate(signs, initial=0))
        emax2 += max(v * v for v in s)
        hit += max(abs(v) for v in s) >= 2
        e_abs += abs(s[-1])
    N = 2 ** n
    return emax2 / N, hit / N, e_abs / N


def test_submartingale_examples():
    _, p_hit, e_abs = walk_oracle(4)
    assert (p_hit, e_abs) == (F(12, 16), F(3, 2))
    r = submartingale_bound(random_walk(4, absolute=True), 2)
    assert r.details["prob_upper"] == p_hit and r.rhs_lower == e_abs
    # the maximal inequality is tight here: 2 * 12/16 = 3/2
    assert r.lhs_upper == F(3, 2) and r.holds
    const = [rv.SimpleRV([([""], 3)])] * 3
    assert submartingale_bound(const, 2).holds
    far = submartingale_bound(random_walk(4, absolute=True), 9)
    assert far.lhs_upper == 0 and far.holds


def test_martingale_l2_examples():
    emax2, _, _ = walk_oracle(10)
    r = martingale_l2_bound(random_walk(10))
    assert r.lhs_upper == emax2 and r.rhs_lower == 40 and r.holds
    zero = martingale_l2_bound([rv.SimpleRV([([""], 0)])] * 2)
    assert zero.lhs_upper == 0 and zero.holds
    one = martingale_l2_bound(random_walk(1))
    assert one.lhs_upper == 1 and one.rhs_lower == 4 and one.bound == 4
