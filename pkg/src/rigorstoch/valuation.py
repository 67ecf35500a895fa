"""Valuations on R^d: lower measures of open sets, lower integrals,
bounded integrals and conditioning on regular pairs.

The concrete workhorse is `WeightedBoxValuation`, a finite list of atoms.
An atom is a closed box with a weight; sides with equal endpoints are
fixed coordinates, so a fully degenerate box is a point mass.  A
"uniform" atom spreads its weight evenly over its free sides, a "cloud"
atom only promises that its weight lies somewhere in the box.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .errors import ContractViolation, NumericRefusal
from .exactnum import (
    DEFAULT_STAGE_BUDGET,
    INF,
    DyadicInterval,
    LowerReal,
    UpperReal,
    as_rational,
    pow2,
    rational_str,
)
from .space import Box, ClosedSet, OpenSet, as_point, union_measure

Sides = tuple  # tuple of (lo, hi) Fraction pairs, closed

CELL_BUDGET = 1 << 16


class UnsupportedOperation(NumericRefusal):
    pass


class ConditionalUndefined(NumericRefusal):
    pass


def _sides(x) -> Sides:
    """Normalize a point, a Box, or a list of [lo, hi] pairs to closed sides."""
    if isinstance(x, Box):
        return x.sides
    if isinstance(x, (tuple, list)) and x and isinstance(x[0], (tuple, list)):
        return tuple((as_rational(a), as_rational(b)) for a, b in x)
    if isinstance(x, (tuple, list)) and x and isinstance(x[0], DyadicInterval):
        return tuple((i.lower, i.upper) for i in x)
    return tuple((v, v) for v in as_point(x))


def sides_to_intervals(sides: Sides) -> tuple[DyadicInterval, ...]:
    return tuple(DyadicInterval(a, b) for a, b in sides)


@dataclass(frozen=True)
class Atom:
    sides: Sides
    weight: Fraction
    kind: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "sides", _sides(self.sides))
        object.__setattr__(self, "weight", as_rational(self.weight))
        for a, b in self.sides:
            if a > b:
                raise ValueError(f"inverted atom side [{a}, {b}]")
        if self.weight < 0:
            raise ValueError("negative atom weight")
        if self.kind not in ("uniform", "cloud"):
            raise ValueError(f"unknown atom kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def is_point(self) -> bool:
        return all(a == b for a, b in self.sides)

    def key(self):
        return (self.kind, self.sides)

    def fraction_in(self, boxes: Sequence[Box]) -> Fraction:
        """Certified lower bound of the share of this atom inside the union."""
        if self.kind == "cloud" and not self.is_point:
            return Fraction(1) if any(b.contains_closed(self.sides) for b in boxes) else Fraction(0)
        return union_measure(self.sides, boxes)


class Valuation:
    """Base class: lower bounds on the measure of open sets, by stage."""

    dim: int = 1
    exact_total: Optional[Fraction] = None

    def measure_lower(self, U: OpenSet, n: int) -> Fraction:
        raise NotImplementedError

    def measure(self, U: OpenSet) -> LowerReal:
        return LowerReal(lambda n: self.measure_lower(U, n))

    @property
    def total_mass(self) -> LowerReal:
        if self.exact_total is not None:
            return LowerReal.constant(self.exact_total)
        return self.measure(OpenSet.full(self.dim))

    def bounding_box(self) -> Sides:
        raise UnsupportedOperation(f"{type(self).__name__} has no bounding box")


class FunctionValuation(Valuation):
    """Valuation given directly by a lower-bound function."""

    def __init__(self, dim: int, fn: Callable[[OpenSet, int], Fraction], exact_total=None, box=None):
        self.dim = dim
        self._fn = fn
        self.exact_total = None if exact_total is None else as_rational(exact_total)
        self._box = box

    def measure_lower(self, U, n):
        return self._fn(U, n)

    def bounding_box(self):
        if self._box is None:
            return super().bounding_box()
        return self._box


class WeightedBoxValuation(Valuation):
    def __init__(self, atoms: Iterable, dim: Optional[int] = None):
        atoms = [a if isinstance(a, Atom) else Atom(*a) for a in atoms]
        if dim is None:
            if not atoms:
                raise ValueError("dimension needed for an empty atom list")
            dim = atoms[0].dim
        for a in atoms:
            if a.dim != dim:
                raise ValueError("atoms of mixed dimension")
        self.atoms = tuple(atoms)
        self.dim = dim
        self.exact_total = sum((a.weight for a in atoms), Fraction(0))

    @classmethod
    def dirac(cls, x) -> "WeightedBoxValuation":
        return cls([Atom(_sides(x), 1)])

    @classmethod
    def uniform(cls, *sides) -> "WeightedBoxValuation":
        return cls([Atom(tuple(sides), 1)])

    @classmethod
    def discrete(cls, masses: dict) -> "WeightedBoxValuation":
        """Point masses {point: weight}."""
        return cls([Atom(_sides(x), w) for x, w in masses.items()])

    def atom_measure(self, atom: Atom, boxes: Sequence[Box]) -> Fraction:
        return atom.weight * atom.fraction_in(boxes)

    def measure_lower(self, U: OpenSet, n: int) -> Fraction:
        boxes = U.enumerate(n)
        if not boxes:
            return Fraction(0)
        return sum((self.atom_measure(a, boxes) for a in self.atoms), Fraction(0))

    def measure_exact(self, U: OpenSet, n: int = 0) -> Fraction:
        return self.measure_lower(U, n)

    def bounding_box(self) -> Sides:
        lo = [min(a.sides[i][0] for a in self.atoms) for i in range(self.dim)]
        hi = [max(a.sides[i][1] for a in self.atoms) for i in range(self.dim)]
        return tuple(zip(lo, hi))

    def merged(self) -> "WeightedBoxValuation":
        """Combine atoms with identical support; drop zero weights; sort."""
        acc: dict = {}
        for a in self.atoms:
            acc[a.key()] = acc.get(a.key(), Fraction(0)) + a.weight
        atoms = [Atom(sides, w, kind) for (kind, sides), w in sorted(acc.items()) if w != 0]
        return WeightedBoxValuation(atoms, self.dim)

    def point_masses(self) -> dict:
        """{point: weight} for purely atomic valuations."""
        out: dict = {}
        for a in self.merged().atoms:
            if not a.is_point:
                raise UnsupportedOperation("valuation has non-point atoms")
            p = tuple(lo for lo, _ in a.sides)
            out[p] = out.get(p, Fraction(0)) + a.weight
        return out

    def __eq__(self, other):
        if not isinstance(other, WeightedBoxValuation):
            return NotImplemented
        return self.dim == other.dim and self.merged().atoms == other.merged().atoms

    def __hash__(self):
        return hash(self.merged().atoms)

    def __repr__(self):
        return f"WeightedBoxValuation({len(self.atoms)} atoms, total={self.exact_total})"


def to_json(nu: WeightedBoxValuation) -> list:
    out = []
    for a in nu.atoms:
        item = {"box": [[rational_str(lo), rational_str(hi)] for lo, hi in a.sides], "weight": rational_str(a.weight)}
        if a.kind != "uniform":
            item["kind"] = a.kind
        out.append(item)
    return out


def from_json(data: Sequence[dict]) -> WeightedBoxValuation:
    atoms = []
    for item in data:
        sides = tuple((as_rational(str(lo)), as_rational(str(hi))) for lo, hi in item["box"])
        atoms.append(Atom(sides, as_rational(str(item["weight"])), item.get("kind", "uniform")))
    return WeightedBoxValuation(atoms)


# ---------------------------------------------------------------------------
# Lower functions


class LowerFunction:
    """Lower semicontinuous integrand given by lower bounds on closed boxes.

    `eval(sides, n)` returns a rational lower bound of the infimum over the
    closed box; it may grow with n and with shrinking boxes.
    """

    def __init__(self, fn: Callable[[Sides, int], Fraction], label: str = ""):
        self._fn = fn
        self.label = label

    def eval(self, box, n: int = DEFAULT_STAGE_BUDGET):
        return self._fn(_sides(box), n)

    @classmethod
    def constant(cls, c) -> "LowerFunction":
        c = as_rational(c)
        return cls(lambda s, n: c, label=str(c))

    @classmethod
    def indicator(cls, U: OpenSet) -> "LowerFunction":
        def f(sides, n):
            return Fraction(1) if any(b.contains_closed(sides) for b in U.enumerate(n)) else Fraction(0)

        return cls(f, label="indicator")

    @classmethod
    def from_interval(cls, fn: Callable) -> "LowerFunction":
        """From an interval extension.

        In one dimension `fn` receives a DyadicInterval, otherwise a tuple
        of them; it returns a DyadicInterval or an exact rational.
        """
        g = _interval_fn(fn)

        def f(sides, n):
            out = g(sides)
            return out.lower if isinstance(out, DyadicInterval) else as_rational(out)

        return cls(f, label="interval")

    def __add__(self, other: "LowerFunction") -> "LowerFunction":
        other = other if isinstance(other, LowerFunction) else LowerFunction.constant(other)
        return LowerFunction(lambda s, n: self._fn(s, n) + other._fn(s, n))

    __radd__ = __add__

    def scale(self, a) -> "LowerFunction":
        a = as_rational(a)
        if a < 0:
            raise ValueError("lower functions scale by nonnegative constants only")
        return LowerFunction(lambda s, n: a * self._fn(s, n))

    def __rmul__(self, a):
        return self.scale(a)

    def clamp(self) -> "LowerFunction":
        return LowerFunction(lambda s, n: max(Fraction(0), self._fn(s, n)))


def _cells(sides: Sides, per_dim: int):
    """Split the free sides of a closed box into per_dim equal pieces each."""
    axes = []
    for lo, hi in sides:
        if lo == hi:
            axes.append([(lo, hi)])
        else:
            w = (hi - lo) / per_dim
            cuts = [lo]
            for _ in range(per_dim - 1):
                cuts.append(cuts[-1] + w)
            cuts.append(hi)
            axes.append(list(zip(cuts, cuts[1:])))
    return itertools.product(*axes)


def _split_level(n: int, free: int, n_atoms: int) -> int:
    if free == 0:
        return 0
    budget = max(1, CELL_BUDGET // max(1, n_atoms))
    by_budget = int(math.log2(budget)) // free
    return max(0, min(n, by_budget))


def lower_integral(nu: Valuation, psi: LowerFunction, stage_budget: int = DEFAULT_STAGE_BUDGET) -> LowerReal:
    """Lower horizontal integral of a nonnegative lower function.

    At stage n each atom is cut into dyadic cells (up to the stage and the
    cell budget); on every cell the lower bound v of psi gives the threshold
    chain at the cell values, so the stage value is sum(mass(cell) * v)
    with v capped at 2^n.  Generic valuations go through explicit open
    preimages on a grid over their bounding box.
    """

    def stage(n):
        n = min(n, stage_budget)
        if isinstance(nu, WeightedBoxValuation):
            return _atom_integral(nu, psi, n)
        return _grid_integral(nu, psi, n)

    return LowerReal(stage)


def _atom_integral(nu: WeightedBoxValuation, psi: LowerFunction, n: int) -> Fraction:
    cap = pow2(n)
    total = Fraction(0)
    for atom in nu.atoms:
        if atom.weight == 0:
            continue
        free = sum(1 for a, b in atom.sides if a < b)
        if atom.kind == "cloud" or free == 0:
            v = psi.eval(atom.sides, n)
            total += atom.weight * min(max(v, Fraction(0)), cap)
            continue
        j = _split_level(n, free, len(nu.atoms))
        per = 1 << j
        cell_mass = atom.weight / per**free
        acc = Fraction(0)
        fn = psi._fn
        for cell in _cells(atom.sides, per):
            v = fn(cell, n)
            if v > 0:
                acc += min(v, cap)
        total += cell_mass * acc
    return total


def _grid_integral(nu: Valuation, psi: LowerFunction, n: int) -> Fraction:
    box = nu.bounding_box()
    d = len(box)
    j = _split_level(n, d, 1)
    per = 1 << j
    cap = pow2(n)
    values: list[tuple[Fraction, Box]] = []
    for cell in _cells(box, per):
        pad = [((b - a) / 4 if b > a else pow2(-n)) for a, b in cell]
        grown = tuple((a - p, b + p) for (a, b), p in zip(cell, pad))
        v = min(psi.eval(grown, n), cap)
        if v > 0:
            values.append((v, Box(grown)))
    if not values:
        return Fraction(0)
    levels = sorted({v for v, _ in values})
    total, prev = Fraction(0), Fraction(0)
    for lv in levels:
        pre = OpenSet.from_boxes([b for v, b in values if v >= lv], d)
        total += (lv - prev) * nu.measure_lower(pre, n)
        prev = lv
    return total


def _interval_fn(f) -> Callable[[Sides], DyadicInterval]:
    def g(sides):
        ivs = sides_to_intervals(sides)
        out = f(ivs[0]) if len(ivs) == 1 else f(ivs)
        return out if isinstance(out, DyadicInterval) else DyadicInterval.point(out)

    return g


def bounded_integral(nu: Valuation, f: Callable, a, b, stage: int = 16) -> DyadicInterval:
    """Two-sided enclosure of the integral of a continuous f with a < f < b."""
    if nu.exact_total is None:
        raise UnsupportedOperation("bounded integration needs an exact total mass")
    a, b = as_rational(a), as_rational(b)
    c = nu.exact_total
    fi = _interval_fn(f)
    above_a = LowerFunction(lambda s, n: fi(s).lower - a)
    below_b = LowerFunction(lambda s, n: b - fi(s).upper)
    lo = a * c + lower_integral(nu, above_a, stage).approx(stage)
    hi = b * c - lower_integral(nu, below_b, stage).approx(stage)
    if lo > hi:
        raise ContractViolation(
            "bounded integral inverted: the supplied bounds do not hold", lower=lo, upper=hi
        )
    return DyadicInterval(lo, hi)


def measure_of_closed(nu: Valuation, A: ClosedSet) -> UpperReal:
    if nu.exact_total is None:
        raise UnsupportedOperation("closed-set measures need an exact total mass")
    total = nu.exact_total
    return UpperReal(lambda n: total - nu.measure_lower(A.complement, n))


class ConditionalValuation(Valuation):
    def __init__(self, nu: Valuation, V: OpenSet, A: ClosedSet, stage: int = DEFAULT_STAGE_BUDGET):
        self.nu, self.V, self.A = nu, V, A
        self.dim = nu.dim
        self._den = measure_of_closed(nu, A)
        if self._den.approx(stage) <= 0:
            raise ConditionalUndefined("conditioning set has zero upper measure", stage=stage)
        self.exact_total = Fraction(1)

    def measure_lower(self, U: OpenSet, n: int) -> Fraction:
        den = self._den.approx(n)
        if den == INF or den <= 0:
            return Fraction(0)
        return min(Fraction(1), self.nu.measure_lower(U.intersection(self.V), n) / den)

    def bounding_box(self):
        return self.nu.bounding_box()


def conditional_valuation(nu: Valuation, V: OpenSet, A: ClosedSet, stage: int = DEFAULT_STAGE_BUDGET) -> ConditionalValuation:
    return ConditionalValuation(nu, V, A, stage)


@dataclass(frozen=True)
class ModularityReport:
    holds: bool
    lhs: Fraction
    rhs: Fraction
    witness: Optional[Atom] = None

    def __bool__(self):
        return self.holds


def check_modularity(nu, U: OpenSet, V: OpenSet, stage: int = DEFAULT_STAGE_BUDGET) -> ModularityReport:
    """Exact test of nu(U) + nu(V) = nu(U | V) + nu(U & V), atom by atom."""
    sets = [s.enumerate(stage) for s in (U, V, U.union(V), U.intersection(V))]
    atoms = getattr(nu, "atoms", None)
    if atoms is None:
        m = [nu.measure_lower(s, stage) for s in (U, V, U.union(V), U.intersection(V))]
        return ModularityReport(m[0] + m[1] == m[2] + m[3], m[0] + m[1], m[2] + m[3])
    lhs = rhs = Fraction(0)
    witness = None
    for atom in atoms:
        m = [nu.atom_measure(atom, s) if s else Fraction(0) for s in sets]
        lhs += m[0] + m[1]
        rhs += m[2] + m[3]
        if witness is None and m[0] + m[1] != m[2] + m[3]:
            witness = atom
    return ModularityReport(lhs == rhs and witness is None, lhs, rhs, witness)
