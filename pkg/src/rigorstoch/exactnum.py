"""Exact numeric substrate: rationals, interval enclosures and one-sided reals.

Everything here is exact.  Lower and upper reals are lazily evaluated,
memoized stage streams; the value they represent is the supremum
(respectively infimum) over all stages.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

from .errors import NumericRefusal

Rational = Fraction
Number = Union[int, Fraction, str]

# Sentinels for extended values.  Python compares them correctly with Fractions.
INF = math.inf
NEG_INF = -math.inf

DEFAULT_STAGE_BUDGET = 24


class CauchyViolation(NumericRefusal):
    """A sequence claimed to be strongly Cauchy provably is not."""


def as_rational(x) -> Fraction:
    """Convert ints, Fractions, exact floats and strings like "3/8" or "0.2"."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational")


def rational_str(q: Fraction) -> str:
    """Serialize as "p/q" (or "p" for integers)."""
    q = as_rational(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def pow2(k: int) -> Fraction:
    return Fraction(2) ** k


def dyadic_floor(q: Fraction, k: int) -> Fraction:
    """Largest multiple of 2^-k that is <= q."""
    s = pow2(k)
    return Fraction(math.floor(as_rational(q) * s)) / s


def dyadic_ceil(q: Fraction, k: int) -> Fraction:
    return -dyadic_floor(-q, k)


def sqrt_lower(q: Fraction, bits: int = 64) -> Fraction:
    """Rational lower bound for sqrt(q), accurate to 2^-bits."""
    if q < 0:
        raise ValueError("sqrt of negative rational")
    s = math.isqrt((q.numerator << (2 * bits)) // q.denominator)
    return Fraction(s, 1 << bits)


def sqrt_upper(q: Fraction, bits: int = 64) -> Fraction:
    """Rational upper bound for sqrt(q), accurate to 2^-bits."""
    lo = sqrt_lower(q, bits)
    if lo * lo == q:
        return lo
    return lo + Fraction(1, 1 << bits)


@dataclass(frozen=True)
class DyadicInterval:
    """Closed interval [lower, upper] with exact rational endpoints."""

    lower: Fraction
    upper: Fraction

    def __post_init__(self):
        lo, hi = self.lower, self.upper
        if type(lo) is not Fraction or type(hi) is not Fraction:
            lo, hi = as_rational(lo), as_rational(hi)
        if lo > hi:
            raise ValueError(f"inverted interval [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, x) -> "DyadicInterval":
        x = as_rational(x)
        return cls(x, x)

    @classmethod
    def around(cls, center, radius) -> "DyadicInterval":
        c, r = as_rational(center), as_rational(radius)
        return cls(c - r, c + r)

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    @property
    def mid(self) -> Fraction:
        return (self.lower + self.upper) / 2

    @property
    def radius(self) -> Fraction:
        return self.width / 2

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper

    def contains(self, x) -> bool:
        if isinstance(x, DyadicInterval):
            return self.lower <= x.lower and x.upper <= self.upper
        x = as_rational(x)
        return self.lower <= x <= self.upper

    __contains__ = contains

    def intersect(self, other: "DyadicInterval") -> "DyadicInterval | None":
        lo, hi = max(self.lower, other.lower), min(self.upper, other.upper)
        return DyadicInterval(lo, hi) if lo <= hi else None

    def hull(self, other: "DyadicInterval") -> "DyadicInterval":
        return DyadicInterval(min(self.lower, other.lower), max(self.upper, other.upper))

    def widen(self, r) -> "DyadicInterval":
        r = as_rational(r)
        return DyadicInterval(self.lower - r, self.upper + r)

    def magnitude(self) -> Fraction:
        """Upper bound of |x| over the interval."""
        return max(abs(self.lower), abs(self.upper))

    def mignitude(self) -> Fraction:
        """Lower bound of |x| over the interval."""
        if self.lower <= 0 <= self.upper:
            return Fraction(0)
        return min(abs(self.lower), abs(self.upper))

    def abs(self) -> "DyadicInterval":
        return DyadicInterval(self.mignitude(), self.magnitude())

    def __neg__(self):
        return DyadicInterval(-self.upper, -self.lower)

    def __add__(self, other):
        o = _coerce(other)
        return DyadicInterval(self.lower + o.lower, self.upper + o.upper)

    __radd__ = __add__

    def __sub__(self, other):
        o = _coerce(other)
        return DyadicInterval(self.lower - o.upper, self.upper - o.lower)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        o = _coerce(other)
        a, b, c, d = self.lower, self.upper, o.lower, o.upper
        if a >= 0 and c >= 0:
            return DyadicInterval(a * c, b * d)
        ps = (a * c, a * d, b * c, b * d)
        return DyadicInterval(min(ps), max(ps))

    __rmul__ = __mul__

    def reciprocal(self) -> "DyadicInterval":
        if self.lower <= 0 <= self.upper:
            raise NumericRefusal("reciprocal of an interval containing zero", interval=[self.lower, self.upper])
        return DyadicInterval(1 / self.upper, 1 / self.lower)

    def __truediv__(self, other):
        return self * _coerce(other).reciprocal()

    def __rtruediv__(self, other):
        return _coerce(other) * self.reciprocal()

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers")
        if k % 2 == 0:
            a = self.abs()
            return DyadicInterval(a.lower**k, a.upper**k)
        return DyadicInterval(self.lower**k, self.upper**k)

    def square(self) -> "DyadicInterval":
        a = self.abs()
        return DyadicInterval(a.lower * a.lower, a.upper * a.upper)

    def sqrt(self, bits: int = 64) -> "DyadicInterval":
        if self.lower < 0:
            raise ValueError("sqrt of interval reaching below zero")
        return DyadicInterval(sqrt_lower(self.lower, bits), sqrt_upper(self.upper, bits))

    def __str__(self):
        return f"[{rational_str(self.lower)}, {rational_str(self.upper)}]"


def _coerce(x) -> DyadicInterval:
    return x if isinstance(x, DyadicInterval) else DyadicInterval.point(x)


class _StageCache:
    """Thread-safe memo of a monotone stage sequence.

    With `combine` the sequence is made monotone by folding every earlier
    stage in; without it the oracle is trusted to be monotone already and
    stages are computed independently.
    """

    def __init__(self, fn: Callable[[int], object], combine=None):
        self._fn = fn
        self._combine = combine
        self._values: dict = {}
        self._lock = threading.RLock()

    def get(self, n: int):
        if n < 0:
            raise ValueError("stage index must be nonnegative")
        values = self._values
        if n in values:
            return values[n]
        with self._lock:
            if self._combine is None:
                if n not in values:
                    values[n] = self._fn(n)
                return values[n]
            k = 0
            while k <= n:
                if k not in values:
                    v = self._fn(k)
                    if k:
                        v = self._combine(values[k - 1], v)
                    values[k] = v
                k += 1
            return values[n]


def _ext(v):
    if v is INF or v is NEG_INF or (isinstance(v, float) and math.isinf(v)):
        return v
    return as_rational(v)


class LowerReal:
    """An element of [-inf, inf] known through nondecreasing rational lower bounds.

    `stage_fn(n)` may be any lower-bound oracle; monotonicity is enforced by
    taking the running maximum, so a non-monotone oracle cannot break the
    invariant.  Pass `monotone=True` only for oracles that are monotone by
    construction; stages are then computed independently.
    """

    def __init__(self, stage_fn: Callable[[int], object], label: str = "", monotone: bool = False):
        self._cache = _StageCache(lambda n: _ext(stage_fn(n)), None if monotone else max)
        self.label = label

    @classmethod
    def constant(cls, q) -> "LowerReal":
        q = _ext(q)
        return cls(lambda n: q, label=str(q), monotone=True)

    @classmethod
    def infinity(cls) -> "LowerReal":
        return cls(lambda n: INF, label="inf", monotone=True)

    @classmethod
    def from_sequence(cls, xs: Sequence) -> "LowerReal":
        xs = [_ext(x) for x in xs]
        return cls(lambda n: xs[min(n, len(xs) - 1)])

    def approx(self, n: int):
        return self._cache.get(n)

    def value(self, stage_budget: int = DEFAULT_STAGE_BUDGET):
        return self.approx(stage_budget)

    def __add__(self, other):
        return lr_add(self, _as_lower(other))

    __radd__ = __add__

    def __mul__(self, other):
        return lr_mul(self, _as_lower(other))

    __rmul__ = __mul__

    def __repr__(self):
        return f"LowerReal({self.label or '...'})"


class UpperReal:
    """An element of [-inf, inf] known through nonincreasing rational upper bounds."""

    def __init__(self, stage_fn: Callable[[int], object], label: str = "", monotone: bool = False):
        self._cache = _StageCache(lambda n: _ext(stage_fn(n)), None if monotone else min)
        self.label = label

    @classmethod
    def constant(cls, q) -> "UpperReal":
        q = _ext(q)
        return cls(lambda n: q, label=str(q), monotone=True)

    def approx(self, n: int):
        return self._cache.get(n)

    def value(self, stage_budget: int = DEFAULT_STAGE_BUDGET):
        return self.approx(stage_budget)

    def __repr__(self):
        return f"UpperReal({self.label or '...'})"


def _as_lower(x) -> LowerReal:
    return x if isinstance(x, LowerReal) else LowerReal.constant(x)


class SierpinskiBit:
    """Semi-decidable truth value: once confirmed it stays confirmed."""

    def __init__(self, probe: Callable[[int], bool]):
        self._cache = _StageCache(lambda n: bool(probe(n)), lambda a, b: a or b)

    @classmethod
    def true(cls) -> "SierpinskiBit":
        return cls(lambda n: True)

    @classmethod
    def bottom(cls) -> "SierpinskiBit":
        return cls(lambda n: False)

    def confirmed(self, n: int) -> bool:
        return self._cache.get(n)

    def __or__(self, other: "SierpinskiBit") -> "SierpinskiBit":
        return SierpinskiBit(lambda n: self.confirmed(n) or other.confirmed(n))

    def __and__(self, other: "SierpinskiBit") -> "SierpinskiBit":
        return SierpinskiBit(lambda n: self.confirmed(n) and other.confirmed(n))

    def to_lower_real(self) -> LowerReal:
        return LowerReal(lambda n: 1 if self.confirmed(n) else 0)


def lr_add(a: LowerReal, b: LowerReal) -> LowerReal:
    def stage(n):
        x, y = a.approx(n), b.approx(n)
        if x == NEG_INF or y == NEG_INF:
            return NEG_INF
        if x == INF or y == INF:
            return INF
        return x + y

    return LowerReal(stage)


def _nonneg(x):
    return x if x == INF or x > 0 else Fraction(0)


def lr_mul(a: LowerReal, b: LowerReal) -> LowerReal:
    """Product on [0, inf] with the convention 0 * inf = 0."""

    def stage(n):
        x, y = _nonneg(a.approx(n)), _nonneg(b.approx(n))
        if x == 0 or y == 0:
            return Fraction(0)
        if x == INF or y == INF:
            return INF
        return x * y

    return LowerReal(stage)


def lr_sup(xs: Union[Sequence[LowerReal], Callable[[int], LowerReal]]) -> LowerReal:
    """Countable supremum; `xs` may be a finite sequence or an index function."""
    if callable(xs):
        get, count = xs, None
    else:
        items = list(xs)
        if not items:
            return LowerReal.constant(0)
        get, count = items.__getitem__, len(items)

    def stage(n):
        top = n if count is None else min(n, count - 1)
        return max(get(i).approx(n) for i in range(top + 1))

    return LowerReal(stage)


class IntervalStream:
    """Nested enclosures of the limit of a strongly Cauchy interval sequence."""

    def __init__(self, xs: Union[Sequence[DyadicInterval], Callable[[int], DyadicInterval]]):
        if callable(xs):
            self._get = xs
            self._len = None
        else:
            items = list(xs)
            self._get = lambda n: items[min(n, len(items) - 1)]
            self._len = len(items)
        self._values: list[DyadicInterval] = []
        self._lock = threading.Lock()

    def enclosure(self, n: int) -> DyadicInterval:
        with self._lock:
            while len(self._values) <= n:
                k = len(self._values)
                x = self._get(k)
                cand = DyadicInterval.around(x.mid, pow2(-k))
                if self._values:
                    prev = self._values[-1]
                    cand = prev.intersect(cand)
                    if cand is None:
                        raise CauchyViolation(
                            f"term {k} ({x}) is incompatible with earlier enclosure {prev}"
                        )
                self._values.append(cand)
            return self._values[n]

    def __getitem__(self, n: int) -> DyadicInterval:
        return self.enclosure(n)


def interval_complete(xs) -> IntervalStream:
    return IntervalStream(xs)


def lower_stages(x: LowerReal, stages: Iterable[int]) -> list:
    return [x.approx(n) for n in stages]
