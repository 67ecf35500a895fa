from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from rigorstoch.errors import ContractViolation
from rigorstoch.exactnum import pow2
from rigorstoch.space import ClosedSet, OpenSet
from rigorstoch.valuation import (
    ConditionalUndefined,
    FunctionValuation,
    LowerFunction,
    UnsupportedOperation,
    WeightedBoxValuation as W,
    bounded_integral,
    check_modularity,
    conditional_valuation,
    from_json,
    lower_integral,
    measure_of_closed,
    to_json,
)

I = OpenSet.interval


def riemann_upper(nu, f, cells):
    """Exact upper Riemann sum of an increasing f over each atom."""
    total = F(0)
    for a in nu.atoms:
        (lo, hi), = a.sides
        if lo == hi:
            total += a.weight * f(lo)
            continue
        w = (hi - lo) / cells
        total += a.weight * sum(f(lo + w * (j + 1)) for j in range(cells)) / cells
    return total


def test_measure_of_closed_examples():
    d = W.dirac(F(1, 2))
    assert measure_of_closed(d, ClosedSet.interval(0, 1)).approx(5) == 1
    far = measure_of_closed(d, ClosedSet.interval(2, 3))
    assert far.approx(0) == 1 and far.approx(2) == 0
    u = W.uniform((0, 1))
    assert abs(measure_of_closed(u, ClosedSet.interval(0, F(1, 2))).approx(16) - F(1, 2)) <= pow2(-10)


def test_measure_of_closed_needs_total():
    nu = FunctionValuation(1, lambda U, n: F(0))
    with pytest.raises(UnsupportedOperation):
        measure_of_closed(nu, ClosedSet.interval(0, 1))


def test_lower_integral_examples():
    u = W.uniform((0, 1))
    U = I(F(1, 4), F(3, 4))
    chi = lower_integral(u, LowerFunction.indicator(U)).approx(16)
    assert chi <= u.measure_lower(U, 16) == F(1, 2)
    assert F(1, 2) - chi <= pow2(-14)
    assert lower_integral(u, LowerFunction.constant(0)).approx(16) == 0
    x = lower_integral(u, LowerFunction.from_interval(lambda t: t), 16)
    vals = [x.approx(n) for n in (4, 8, 16)]
    assert vals == sorted(vals)
    assert F(1, 2) - pow2(-8) <= vals[-1] <= F(1, 2)


def test_indicator_integral_exact_on_atoms():
    nu = W.discrete({F(1, 8): F(1, 4), F(1, 2): F(1, 2), 2: F(1, 4)})
    for U in (I(0, 1), I(F(1, 4), 3), OpenSet.empty(), I(-5, 5)):
        assert lower_integral(nu, LowerFunction.indicator(U)).approx(8) == nu.measure_lower(U, 8)


def test_bounded_integral_examples():
    u = W.uniform((0, 1))
    one = bounded_integral(u, lambda x: x * 0 + 1, 0, 2)
    assert one.lower == one.upper == 1
    half = bounded_integral(u, lambda x: x, 0, 1)
    assert half.contains(F(1, 2)) and half.width <= pow2(-6)
    neg = bounded_integral(u, lambda x: -x, -1, 0)
    assert neg.contains(F(-1, 2))


def test_bounded_integral_detects_false_bounds():
    u = W.uniform((0, 1))
    with pytest.raises(ContractViolation):
        bounded_integral(u, lambda x: x * 0 + 5, 0, 1, stage=4)


def test_conditional_examples():
    u = W.uniform((0, 1))
    c = conditional_valuation(u, I(0, F(1, 2)), ClosedSet.interval(0, F(1, 2)))
    assert abs(c.measure_lower(I(0, F(1, 4)), 16) - F(1, 2)) <= pow2(-8)
    full = conditional_valuation(u, OpenSet.full(), ClosedSet.whole())
    for U in (I(0, F(1, 3)), I(F(1, 2), 2)):
        assert full.measure_lower(U, 10) == u.measure_lower(U, 10)
    with pytest.raises(ConditionalUndefined):
        conditional_valuation(W.dirac(0), I(1, 2), ClosedSet.interval(1, 2))


def test_modularity_examples():
    assert check_modularity(W.dirac(F(1, 2)), I(0, 1), I(F(1, 4), 2)).holds
    r = check_modularity(W.uniform((0, 1)), I(0, F(1, 2)), I(F(1, 4), 1))
    assert r.holds and r.lhs == F(5, 4)
    # a set function that only records non-emptiness is not modular
    bad = FunctionValuation(1, lambda U, n: F(1) if U.enumerate(n) else F(0), exact_total=1)
    assert not check_modularity(bad, I(0, F(1, 2)), I(F(3, 4), 1)).holds


def test_json_round_trip():
    nu = W([(((0, 1),), F(1, 3)), (((F(1, 2), F(1, 2)),), F(2, 3))])
    data = to_json(nu)
    assert data == [{"box": [["0", "1"]], "weight": "1/3"}, {"box": [["1/2", "1/2"]], "weight": "2/3"}]
    back = from_json(data)
    assert to_json(back) == data


def test_monotone_convergence_in_the_set():
    u = W.uniform((0, 1))
    ms = [u.measure_lower(I(pow2(-k), 1 - pow2(-k)), 8) for k in range(2, 12)]
    assert ms == sorted(ms)
    assert 1 - ms[-1] == pow2(-10)


def test_decreasing_to_empty():
    nu = W([(((0, 1),), F(1, 2)), (((F(1, 2), F(1, 2)),), F(1, 2))])
    ms = [nu.measure_lower(I(0, pow2(-k)), 8) for k in range(1, 15)]
    assert ms == sorted(ms, reverse=True)
    assert ms[-1] == pow2(-15)


dyadic = st.integers(0, 16).map(lambda k: F(k, 16))


@st.composite
def box_valuations(draw):
    n = draw(st.integers(1, 3))
    atoms = []
    raw = [draw(st.integers(1, 8)) for _ in range(n)]
    for r in raw:
        a = draw(dyadic)
        w = draw(st.integers(0, 4)) * F(1, 16)
        atoms.append((((a, a + w),), F(r, sum(raw))))
    return W(atoms)


@settings(max_examples=10, deadline=None)
@given(box_valuations(), st.integers(0, 3), st.integers(0, 3))
def test_linearity_of_lower_integral(nu, a1, a2):
    psi1 = LowerFunction.from_interval(lambda x: x)
    psi2 = LowerFunction.from_interval(lambda x: x * x)
    n = 12
    lhs = lower_integral(nu, psi1.scale(a1) + psi2.scale(a2), n).approx(n)
    rhs = a1 * lower_integral(nu, psi1, n).approx(n) + a2 * lower_integral(nu, psi2, n).approx(n)
    assert abs(lhs - rhs) <= pow2(-8)
    upper = a1 * riemann_upper(nu, lambda x: x, 64) + a2 * riemann_upper(nu, lambda x: x * x, 64)
    assert lhs <= upper and rhs <= upper
    assert upper - lhs <= pow2(-4)


@settings(max_examples=25, deadline=None)
@given(box_valuations(), st.lists(st.tuples(dyadic, st.integers(0, 3)), min_size=1, max_size=3))
def test_step_function_identity(nu, steps):
    # disjoint unit-sixteenth intervals with nonnegative coefficients
    seen, parts = set(), []
    for a, c in steps:
        if a in seen or a >= 1:
            continue
        seen.add(a)
        parts.append((I(a, a + F(1, 16)), c))
    psi = LowerFunction.constant(0)
    for U, c in parts:
        psi = psi + LowerFunction.indicator(U).scale(c)
    n = 10
    got = lower_integral(nu, psi, n).approx(n)
    want = sum((c * nu.measure_lower(U, n) for U, c in parts), F(0))
    assert got <= want
    assert want - got <= pow2(-8) * max(1, sum(c for _, c in parts))


@settings(max_examples=40, deadline=None)
@given(box_valuations(), dyadic, dyadic, dyadic, dyadic)
def test_modularity_on_box_valuations(nu, a, b, c, d):
    U = I(min(a, b), max(a, b) + F(1, 16))
    V = I(min(c, d), max(c, d) + F(1, 16))
    assert check_modularity(nu, U, V).holds
