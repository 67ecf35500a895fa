"""Random variables over Cantor space.

A `ContinuousRV` reads finitely many bits of omega to produce a box
enclosing its value at a requested precision.  Enclosures are stored as
exact dyadic integers (numerator arrays over a power-of-two scale) so that
cylinder tables can be built and queried with numpy without rounding.

A `MeasurableRV` is a strong Cauchy sequence of continuous ones in the Fan
metric.  Distributions, expectations and norms are certified from the
cylinder tables of the approximants.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ContractViolation, NumericRefusal, ResourceLimit
from .exactnum import (
    DEFAULT_STAGE_BUDGET,
    DyadicInterval,
    LowerReal,
    as_rational,
    pow2,
    rational_str,
    sqrt_lower,
    sqrt_upper,
)
from .space import (
    Box,
    ClopenSet,
    OpenSet,
    PartitionStalled,
    as_point,
    check_depth,
    global_index,
    oracle_depth,
)
from .valuation import LowerFunction, UnsupportedOperation, WeightedBoxValuation

# Extra bits used when rounding rational enclosures to the dyadic grid.
ROUND_BITS = 8
_INT_LIMIT = 1 << 62


# ---------------------------------------------------------------------------
# Dyadic enclosure batches


class Encl(NamedTuple):
    """Rows of closed boxes; value = numerator / 2**shift."""

    lo: np.ndarray  # (N, d) int64
    hi: np.ndarray
    shift: int

    @property
    def dim(self) -> int:
        return self.lo.shape[1]

    def take(self, idx) -> "Encl":
        return Encl(self.lo[idx], self.hi[idx], self.shift)

    def rescale(self, shift: int) -> "Encl":
        if shift == self.shift:
            return self
        if shift < self.shift:
            raise ValueError("can only refine the scale")
        return Encl(_lshift(self.lo, shift - self.shift), _lshift(self.hi, shift - self.shift), shift)

    def intervals(self, i: int) -> tuple[DyadicInterval, ...]:
        den = 1 << self.shift
        return tuple(
            DyadicInterval(Fraction(int(a), den), Fraction(int(b), den)) for a, b in zip(self.lo[i], self.hi[i])
        )


def _lshift(arr: np.ndarray, bits: int) -> np.ndarray:
    if bits == 0 or arr.size == 0:
        return arr
    if int(np.abs(arr).max()) >= _INT_LIMIT >> bits:
        raise ResourceLimit("enclosure magnitudes overflow the 62-bit dyadic grid; lower the precision")
    return arr << np.int64(bits)


def _floor_at(q: Fraction, shift: int) -> int:
    return (q.numerator << shift) // q.denominator


def _ceil_at(q: Fraction, shift: int) -> int:
    return -((-q.numerator << shift) // q.denominator)


def _check_int(v: int) -> int:
    if abs(v) >= _INT_LIMIT:
        raise ResourceLimit("value too large for the 62-bit dyadic grid")
    return v


def encode_boxes(rows: Sequence[Sequence[tuple[Fraction, Fraction]]], shift: int) -> Encl:
    """Round rational closed boxes outward onto the 2^-shift grid."""
    d = len(rows[0]) if rows else 0
    lo = np.empty((len(rows), d), dtype=np.int64)
    hi = np.empty((len(rows), d), dtype=np.int64)
    for i, row in enumerate(rows):
        for j, (a, b) in enumerate(row):
            lo[i, j] = _check_int(_floor_at(a, shift))
            hi[i, j] = _check_int(_ceil_at(b, shift))
    return Encl(lo, hi, shift)


def _as_boxes(out, d: Optional[int] = None) -> tuple[tuple[Fraction, Fraction], ...]:
    """Normalize an interval-function result to closed sides."""
    if isinstance(out, DyadicInterval):
        return ((out.lower, out.upper),)
    if isinstance(out, (tuple, list)):
        sides = []
        for v in out:
            if isinstance(v, DyadicInterval):
                sides.append((v.lower, v.upper))
            else:
                q = as_rational(v)
                sides.append((q, q))
        return tuple(sides)
    q = as_rational(out)
    return ((q, q),)


def _align(encls: Sequence[Encl]) -> list[Encl]:
    s = max(e.shift for e in encls)
    return [e.rescale(s) for e in encls]


def _unique_rows(mat: np.ndarray):
    if mat.shape[0] == 0:
        return mat, np.zeros(0, dtype=np.int64)
    uniq, inv = np.unique(mat, axis=0, return_inverse=True)
    return uniq, np.asarray(inv).reshape(-1)


# ---------------------------------------------------------------------------
# Tables


@dataclass(frozen=True)
class Table:
    """Distribution of one or more RVs at a precision: rows with dyadic masses.

    Row i carries mass count[i] / 2**mass_exp; `encls[r]` is the enclosure
    of the r-th variable on that row.
    """

    encls: tuple
    count: np.ndarray
    mass_exp: int

    @property
    def size(self) -> int:
        return int(self.count.shape[0])

    def mass(self, i: int) -> Fraction:
        return Fraction(int(self.count[i]), 1 << self.mass_exp)

    @property
    def total(self) -> Fraction:
        return Fraction(int(self.count.sum()), 1 << self.mass_exp)

    def single(self, r: int = 0) -> "Table":
        return Table((self.encls[r],), self.count, self.mass_exp)


def _aggregate(encls: Sequence[Encl], count: np.ndarray, mass_exp: int) -> Table:
    mat = np.concatenate([np.concatenate([e.lo, e.hi], axis=1) for e in encls], axis=1)
    uniq, inv = _unique_rows(mat)
    acc = np.zeros(uniq.shape[0], dtype=np.int64)
    np.add.at(acc, inv, count)
    out, col = [], 0
    for e in encls:
        d = e.dim
        out.append(Encl(uniq[:, col : col + d], uniq[:, col + d : col + 2 * d], e.shift))
        col += 2 * d
    keep = acc > 0
    if not keep.all():
        out = [e.take(keep) for e in out]
        acc = acc[keep]
    return Table(tuple(out), acc, mass_exp)


# ---------------------------------------------------------------------------
# Continuous random variables


class ContinuousRV:
    """Base class.  Subclasses are either leaves (read bits of omega
    directly) or composites built from leaves."""

    dim: int = 1
    label: str = ""

    def __init__(self):
        self._tables: dict[int, Table] = {}
        self._lock = threading.Lock()

    # composite protocol
    def leaves(self, k: int) -> list:
        """[(leaf, precision)] this variable is built from at precision k."""
        raise NotImplementedError

    def build(self, rows: dict, k: int) -> Encl:
        """Enclosures at precision k from aligned leaf enclosures."""
        raise NotImplementedError

    def support(self, k: int) -> tuple[int, ...]:
        bits: set[int] = set()
        for leaf, kl in self.leaves(k):
            bits.update(leaf.leaf_support(kl))
        return tuple(sorted(bits))

    def modulus(self, k: int) -> int:
        """Prefix length that determines the precision-k enclosure."""
        s = self.support(k)
        return s[-1] + 1 if s else 0

    def table(self, k: int) -> Table:
        t = self._tables.get(k)
        if t is None:
            t = joint_table([self], k)
            with self._lock:
                self._tables[k] = t
        return t

    def evaluate(self, prefix, k: int) -> tuple[DyadicInterval, ...]:
        """Enclosure on the cylinder of a global bit prefix (str or CantorPoint)."""
        need = self.modulus(k)
        if not isinstance(prefix, str):
            prefix = prefix.prefix(need)
        if len(prefix) < need:
            raise ValueError(f"prefix of length {len(prefix)} shorter than the modulus {need}")
        rows = {}
        for leaf, kl in self.leaves(k):
            sup = leaf.leaf_support(kl)
            a = 0
            for g in sup:
                a = (a << 1) | int(prefix[g])
            rows[(id(leaf), kl)] = leaf.enclose(np.array([a], dtype=np.int64), kl)
        return self.build(rows, k).intervals(0)

    def __repr__(self):
        return f"{type(self).__name__}({self.label or self.dim})"


class LeafRV(ContinuousRV):
    """Reads the bits at `leaf_support(k)` (global indices, increasing)."""

    def leaves(self, k):
        return [(self, k)]

    def build(self, rows, k):
        return rows[(id(self), k)]

    def leaf_support(self, k: int) -> tuple[int, ...]:
        raise NotImplementedError

    def enclose(self, assign: np.ndarray, k: int) -> Encl:
        """Enclosures for assignments of the support bits (first bit = MSB)."""
        raise NotImplementedError

    def leaf_table(self, k: int) -> Optional[tuple[Encl, np.ndarray, int]]:
        """Optional fast table: (encl, count, mass_exp)."""
        return None


class FunctionRV(LeafRV):
    """Leaf from a Python function on prefixes.

    `fn(prefix: str, k)` receives a prefix of length `modulus(k)` and returns
    a DyadicInterval, a tuple of them, or exact rationals.
    """

    def __init__(self, dim: int, modulus: Callable[[int], int], fn: Callable, label: str = ""):
        super().__init__()
        self.dim, self._modulus, self._fn, self.label = dim, modulus, fn, label

    def leaf_support(self, k):
        return tuple(range(self._modulus(k)))

    def enclose(self, assign, k):
        m = self._modulus(k)
        shift = k + ROUND_BITS
        rows = []
        cache: dict[int, tuple] = {}
        for a in assign.tolist():
            r = cache.get(a)
            if r is None:
                bits = format(a, f"0{m}b") if m else ""
                r = cache[a] = _as_boxes(self._fn(bits, k))
            rows.append(r)
        return encode_boxes(rows, shift)


class ConstantRV(LeafRV):
    def __init__(self, value):
        super().__init__()
        self.value = as_point(value)
        self.dim = len(self.value)
        self.label = "const " + ",".join(rational_str(v) for v in self.value)

    def leaf_support(self, k):
        return ()

    def _shift(self, k):
        s = k + ROUND_BITS
        for v in self.value:
            e = v.denominator.bit_length() - 1
            if v.denominator == 1 << e and e > s:
                s = min(e, 60)
        return s

    def enclose(self, assign, k):
        e = encode_boxes([tuple((v, v) for v in self.value)], self._shift(k))
        idx = np.zeros(len(assign), dtype=np.int64)
        return e.take(idx)


class BitRV(LeafRV):
    """The global bit i of omega, or bit j of a copy."""

    def __init__(self, i: int):
        super().__init__()
        self.i = i
        self.label = f"bit {i}"

    def leaf_support(self, k):
        return (self.i,)

    def enclose(self, assign, k):
        a = assign.reshape(-1, 1).astype(np.int64)
        return Encl(a, a.copy(), 0)


class BinaryExpansionRV(LeafRV):
    """sum_j b_j 2^-(j+1) over the bits b_j of one copy (uniform on [0,1])."""

    def __init__(self, copy: Optional[int] = None):
        super().__init__()
        self.copy = copy
        self.label = "binary expansion" + ("" if copy is None else f" of copy {copy}")

    def leaf_support(self, k):
        if self.copy is None:
            return tuple(range(k))
        return tuple(sorted(global_index(self.copy, j) for j in range(k)))

    def enclose(self, assign, k):
        # global_index is increasing in j, so assignments list bits in order
        a = assign.reshape(-1, 1).astype(np.int64)
        return Encl(a, a + 1, k)

    def leaf_table(self, k):
        check_depth(k)
        a = np.arange(1 << k, dtype=np.int64).reshape(-1, 1)
        return Encl(a, a + 1, k), np.ones(1 << k, dtype=np.int64), k


class LookupRV(LeafRV):
    """Locally constant leaf: value index looked up from a prefix of fixed depth."""

    def __init__(self, depth: int, index: np.ndarray, values: Sequence[tuple], label: str = ""):
        super().__init__()
        self.depth = depth
        self.index = index
        self.values = [tuple(as_rational(v) for v in val) for val in values]
        self.dim = len(self.values[0])
        self.label = label

    def leaf_support(self, k):
        return tuple(range(self.depth))

    def _encoded(self, k):
        shift = k + ROUND_BITS
        for val in self.values:
            for v in val:
                e = v.denominator.bit_length() - 1
                if v.denominator == 1 << e and shift < e <= 60:
                    shift = e
        return encode_boxes([tuple((v, v) for v in val) for val in self.values], shift)

    def enclose(self, assign, k):
        return self._encoded(k).take(self.index[assign])

    def leaf_table(self, k):
        count = np.bincount(self.index, minlength=len(self.values)).astype(np.int64)
        return self._encoded(k), count, self.depth


class StepRV(LeafRV):
    """Value determined by which dyadic interval of [0,1] the first `depth`
    bits of omega (read as a binary fraction) fall into.

    `cuts[c]` is the start of cell c+1 in units of 2^-depth; zero-length
    cells are never selected.  Enclosures do not depend on the precision.
    """

    def __init__(self, depth: int, cuts: np.ndarray, encl: Encl, label: str = ""):
        super().__init__()
        self.depth, self.cuts, self.encl = depth, np.asarray(cuts, dtype=np.int64), encl
        self.dim = encl.dim
        self.label = label

    def leaf_support(self, k):
        return tuple(range(self.depth))

    def cell_of(self, assign: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.cuts, assign, side="right")

    def enclose(self, assign, k):
        return self.encl.take(self.cell_of(assign))

    def leaf_table(self, k):
        bounds = np.concatenate([[0], self.cuts, [1 << self.depth]]).astype(np.int64)
        count = np.diff(bounds)
        return self.encl, count, self.depth


class TreeRV(LeafRV):
    """Leaf given by a complete prefix code: {prefix: value sides}, per precision."""

    def __init__(self, dim: int, code: Callable[[int], dict], label: str = ""):
        super().__init__()
        self.dim, self._code, self.label = dim, code, label
        self._codes: dict[int, dict] = {}

    def code(self, k):
        c = self._codes.get(k)
        if c is None:
            c = self._codes[k] = self._code(k)
        return c

    def leaf_support(self, k):
        return tuple(range(max((len(p) for p in self.code(k)), default=0)))

    def _arrays(self, k):
        code = self.code(k)
        depth = max((len(p) for p in code), default=0)
        check_depth(depth)
        words = sorted(code)
        enc = encode_boxes([code[w] for w in words], k + ROUND_BITS)
        index = np.full(1 << depth, -1, dtype=np.int64)
        for i, w in enumerate(words):
            lo = (int(w, 2) if w else 0) << (depth - len(w))
            index[lo : lo + (1 << (depth - len(w)))] = i
        if (index < 0).any():
            raise ContractViolation("prefix code does not cover Cantor space")
        return enc, index, words, depth

    def enclose(self, assign, k):
        enc, index, _, _ = self._arrays(k)
        return enc.take(index[assign])

    def leaf_table(self, k):
        enc, _, words, depth = self._arrays(k)
        count = np.array([1 << (depth - len(w)) for w in words], dtype=np.int64)
        return enc, count, depth


class ProductRV(ContinuousRV):
    """Pair (X, Y) on the product space with the max-metric."""

    def __init__(self, parts: Sequence[ContinuousRV]):
        super().__init__()
        self.parts = tuple(parts)
        self.dim = sum(p.dim for p in self.parts)
        self.label = " x ".join(p.label or "?" for p in self.parts)

    def leaves(self, k):
        out = []
        for p in self.parts:
            for item in p.leaves(k):
                if item not in out:
                    out.append(item)
        return out

    def build(self, rows, k):
        encls = _align([p.build(rows, k) for p in self.parts])
        return Encl(
            np.concatenate([e.lo for e in encls], axis=1),
            np.concatenate([e.hi for e in encls], axis=1),
            encls[0].shift,
        )


class MappedRV(ContinuousRV):
    """f o X for an interval extension f.

    The base precision for output precision k is searched upward from
    k + 1 + ceil(log2 L) until every image box on the base table has width
    at most 2^-k.
    """

    MAX_EXTRA = 40

    def __init__(self, f: Callable, base: ContinuousRV, out_dim: Optional[int] = None, lipschitz=None, label=""):
        super().__init__()
        self.f, self.base = f, base
        self.lipschitz = None if lipschitz is None else as_rational(lipschitz)
        self._kb: dict[int, int] = {}
        self._fcache: dict = {}
        self.label = label or "image"
        if out_dim is None:
            probe = base.table(0).encls[0]
            out_dim = len(self._apply_row(probe, 0))
        self.dim = out_dim

    def _apply_row(self, enc: Encl, i: int):
        key = (enc.shift, enc.lo[i].tobytes(), enc.hi[i].tobytes())
        r = self._fcache.get(key)
        if r is None:
            ivs = enc.intervals(i)
            r = self._fcache[key] = _as_boxes(self.f(ivs[0] if len(ivs) == 1 else ivs))
        return r

    def base_precision(self, k: int) -> int:
        kb = self._kb.get(k)
        if kb is not None:
            return kb
        start = k + 1
        if self.lipschitz is not None and self.lipschitz > 1:
            start += math.ceil(math.log2(self.lipschitz))
        tol = pow2(-k)
        for kb in range(start, start + self.MAX_EXTRA):
            enc = self.base.table(kb).encls[0]
            widest = Fraction(0)
            for i in range(enc.lo.shape[0]):
                for a, b in self._apply_row(enc, i):
                    widest = max(widest, b - a)
            if widest <= tol:
                self._kb[k] = kb
                return kb
        raise NumericRefusal(
            "image enclosures do not shrink: the map may not be continuous on the range",
            precision=k,
            widest=widest,
        )

    def leaves(self, k):
        return self.base.leaves(self.base_precision(k))

    def build(self, rows, k):
        enc = self.base.build(rows, self.base_precision(k))
        mat = np.concatenate([enc.lo, enc.hi], axis=1)
        uniq, inv = _unique_rows(mat)
        d = enc.dim
        u = Encl(uniq[:, :d], uniq[:, d:], enc.shift)
        images = [self._apply_row(u, i) for i in range(uniq.shape[0])]
        out = encode_boxes(images, k + ROUND_BITS)
        return out.take(inv)


def _joint_leaf_rows(leaves: list) -> tuple[dict, np.ndarray, int]:
    """Aligned enclosures of all leaves over their joint cylinder table."""
    if len(leaves) == 1:
        leaf, kl = leaves[0]
        fast = leaf.leaf_table(kl)
        if fast is not None:
            enc, count, e = fast
            return {(id(leaf), kl): enc}, count, e
    if leaves and all(isinstance(leaf, StepRV) for leaf, _ in leaves):
        depth = max(leaf.depth for leaf, _ in leaves)
        cuts = [leaf.cuts << np.int64(depth - leaf.depth) for leaf, _ in leaves]
        bounds = np.unique(np.concatenate(cuts + [np.array([0, 1 << depth], dtype=np.int64)]))
        starts = bounds[:-1]
        count = np.diff(bounds)
        rows = {}
        for (leaf, kl), c in zip(leaves, cuts):
            rows[(id(leaf), kl)] = leaf.encl.take(np.searchsorted(c, starts, side="right"))
        return rows, count, depth
    bits = sorted({g for leaf, kl in leaves for g in leaf.leaf_support(kl)})
    check_depth(len(bits), "joint cylinder enumeration")
    pos = {g: i for i, g in enumerate(bits)}
    n = len(bits)
    a = np.arange(1 << n, dtype=np.int64)
    rows = {}
    for leaf, kl in leaves:
        sup = leaf.leaf_support(kl)
        la = np.zeros_like(a)
        for g in sup:
            la = (la << np.int64(1)) | ((a >> np.int64(n - 1 - pos[g])) & np.int64(1))
        rows[(id(leaf), kl)] = leaf.enclose(la, kl)
    return rows, np.ones(1 << n, dtype=np.int64), n


def joint_table(rvs: Sequence[ContinuousRV], k: int) -> Table:
    """Joint distribution table of continuous RVs over the same omega."""
    leaves: list = []
    for rv in rvs:
        for item in rv.leaves(k):
            if all(item[0] is not x[0] or item[1] != x[1] for x in leaves):
                leaves.append(item)
    rows, count, e = _joint_leaf_rows(leaves)
    encls = [rv.build(rows, k) for rv in rvs]
    return _aggregate(encls, count, e)


# constructors


def constant(c) -> "MeasurableRV":
    return MeasurableRV.from_continuous(ConstantRV(c))


def bit(i: int, copy: Optional[int] = None) -> "MeasurableRV":
    g = i if copy is None else global_index(copy, i)
    return MeasurableRV.from_continuous(BitRV(g))


def binary_expansion(copy: Optional[int] = None) -> "MeasurableRV":
    return MeasurableRV.from_continuous(BinaryExpansionRV(copy))


uniform = binary_expansion


def from_function(dim: int, modulus: Callable[[int], int], fn: Callable, label: str = "") -> "MeasurableRV":
    return MeasurableRV.from_continuous(FunctionRV(dim, modulus, fn, label))


# ---------------------------------------------------------------------------
# Fan metric


def _fan_once(X: ContinuousRV, Y: ContinuousRV, k: int) -> Fraction:
    t = joint_table([X, Y], k)
    ex, ey = _align(t.encls)
    if ex.dim != ey.dim:
        raise ValueError("Fan distance needs variables of equal dimension")
    gap = np.maximum(ex.hi - ey.lo, ey.hi - ex.lo).max(axis=1) if ex.dim else np.zeros(t.size, np.int64)
    order = np.argsort(gap, kind="stable")
    g_sorted = gap[order]
    c_sorted = t.count[order]
    u_vals, starts = np.unique(g_sorted, return_index=True)
    tails = np.cumsum(c_sorted[::-1])[::-1]  # mass with gap >= g_sorted[i]
    s, e = ex.shift, t.mass_exp
    prev = 0
    # on (u_{j-1}, u_j] the upper tail is T_j; the first j with T_j < u_j wins
    for u, st in zip(u_vals.tolist(), starts.tolist()):
        T = int(tails[st])
        if u > 0 and (T << s) < (u << e):
            return max(Fraction(prev, 1 << s), Fraction(T, 1 << e))
        prev = u
    return Fraction(prev, 1 << s)


def fan_distance_upper(X: ContinuousRV, Y: ContinuousRV, k: int, monotone: bool = True) -> Fraction:
    """Certified upper bound on the Fan distance inf{e : P(|X-Y| >= e) < e}.

    The bound uses the precision-k joint table; with `monotone` the result
    is the running minimum over precisions 0..k.
    """
    if X is Y:
        return Fraction(0)
    ks = range(k + 1) if monotone else (k,)
    return min([Fraction(1)] + [_fan_once(X, Y, kk) for kk in ks])


# ---------------------------------------------------------------------------
# Simple and piecewise random variables


class SimpleRV:
    """Finitely many exact values on a clopen partition of Cantor space."""

    def __init__(self, pieces: Iterable):
        merged: dict = {}
        for cl, val in pieces:
            cl = cl if isinstance(cl, ClopenSet) else ClopenSet([cl] if isinstance(cl, str) else cl)
            val = as_point(val)
            merged[val] = merged[val].union(cl) if val in merged else cl
        self.pieces = tuple((cl, v) for v, cl in sorted(merged.items()))
        if not self.pieces:
            raise ContractViolation("a simple random variable needs at least one piece")
        self.dim = len(self.pieces[0][1])
        total = sum((cl.measure for cl, _ in self.pieces), Fraction(0))
        for (a, _), (b, _) in itertools.combinations(self.pieces, 2):
            if a.intersection(b).prefixes:
                raise ContractViolation("simple random variable pieces overlap")
        if total != 1:
            raise ContractViolation(f"simple random variable pieces have total measure {total}")
        self._cont: Optional[LookupRV] = None

    @classmethod
    def constant(cls, c) -> "SimpleRV":
        return cls([(ClopenSet.full(), c)])

    @property
    def depth(self) -> int:
        return max(cl.depth for cl, _ in self.pieces)

    def value_at(self, bits: str):
        for cl, v in self.pieces:
            if cl.contains_prefix(bits):
                return v
        raise ValueError("prefix too short to determine the value")

    def distribution(self) -> dict:
        out: dict = {}
        for cl, v in self.pieces:
            out[v] = out.get(v, Fraction(0)) + cl.measure
        return out

    def expectation(self) -> tuple[Fraction, ...]:
        return tuple(sum((m * v[i] for v, m in self.distribution().items()), Fraction(0)) for i in range(self.dim))

    def moment(self, p: int) -> Fraction:
        """E|X|^p for the max-norm, exactly."""
        return sum((m * max(abs(x) for x in v) ** p for v, m in self.distribution().items()), Fraction(0))

    def _combine(self, other: "SimpleRV", op) -> "SimpleRV":
        pieces = []
        for a, u in self.pieces:
            for b, v in other.pieces:
                c = a.intersection(b)
                if c.prefixes:
                    pieces.append((c, op(u, v)))
        return SimpleRV(pieces)

    def __add__(self, other: "SimpleRV") -> "SimpleRV":
        return self._combine(other, lambda u, v: tuple(x + y for x, y in zip(u, v)))

    def __sub__(self, other: "SimpleRV") -> "SimpleRV":
        return self._combine(other, lambda u, v: tuple(x - y for x, y in zip(u, v)))

    def to_continuous(self) -> LookupRV:
        if self._cont is None:
            depth = self.depth
            check_depth(depth)
            index = np.empty(1 << depth, dtype=np.int64)
            for i, (cl, _) in enumerate(self.pieces):
                for p in cl.prefixes:
                    lo = (int(p, 2) if p else 0) << (depth - len(p))
                    index[lo : lo + (1 << (depth - len(p)))] = i
            self._cont = LookupRV(depth, index, [v for _, v in self.pieces], label="simple")
        return self._cont

    def to_measurable(self) -> "MeasurableRV":
        return MeasurableRV.from_continuous(self.to_continuous())

    def to_json(self) -> list:
        return [{"prefixes": list(cl.prefixes), "value": [rational_str(x) for x in v]} for cl, v in self.pieces]

    @classmethod
    def from_json(cls, data) -> "SimpleRV":
        if isinstance(data, str):
            data = json.loads(data)
        return cls([(ClopenSet(item["prefixes"]), [as_rational(str(x)) for x in item["value"]]) for item in data])

    def __eq__(self, other):
        return isinstance(other, SimpleRV) and self.pieces == other.pieces

    def __hash__(self):
        return hash(self.pieces)

    def __repr__(self):
        return f"SimpleRV({len(self.pieces)} values)"


class SimpleApproximation:
    """Simple approximations of a continuous RV from its prefix enclosures.

    Term m uses the largest precision k with modulus(k) <= m and takes the
    midpoint of each depth-m cylinder's enclosure, so the uniform error is
    at most the enclosure radius 2^-k.
    """

    def __init__(self, X: ContinuousRV, max_precision: int = 60):
        self.X = X
        self.max_precision = max_precision

    def precision_for(self, m: int) -> int:
        k, cap = 0, min(self.max_precision, m + 1)
        while k + 1 <= cap and self.X.modulus(k + 1) <= m:
            k += 1
        if self.X.modulus(k) > m:
            raise ValueError(f"depth {m} is below the modulus at precision 0")
        return k

    def term(self, m: int) -> SimpleRV:
        check_depth(m)
        k = self.precision_for(m)
        pieces = []
        for i in range(1 << m):
            bits = format(i, f"0{m}b") if m else ""
            ivs = self.X.evaluate(bits, k)
            pieces.append(([bits], tuple(iv.mid for iv in ivs)))
        return SimpleRV(pieces)

    def uniform_error(self, m: int) -> Fraction:
        """Exact supremum over depth-m cylinders of the enclosure half-width."""
        k = self.precision_for(m)
        worst = Fraction(0)
        for i in range(1 << m):
            bits = format(i, f"0{m}b") if m else ""
            for iv in self.X.evaluate(bits, k):
                worst = max(worst, iv.radius)
        return worst

    def __getitem__(self, m: int) -> SimpleRV:
        return self.term(m)

    def __iter__(self):
        m = 0
        while True:
            try:
                yield self.term(m)
            except ValueError:
                pass
            m += 1


def simple_approximation(X: ContinuousRV) -> SimpleApproximation:
    return SimpleApproximation(X)


class PiecewiseRV:
    """Continuous on a clopen-exhaustible domain of full measure.

    `domain(n)` is a nondecreasing sequence of clopen sets whose measures
    tend to 1.  `evaluate(prefix, k)` returns the precision-k enclosure for
    a prefix inside the domain, or None when more bits are needed.
    """

    def __init__(self, dim: int, domain: Callable[[int], ClopenSet], evaluate: Callable, label: str = ""):
        self.dim, self.domain, self._evaluate, self.label = dim, domain, evaluate, label

    def domain_mass(self) -> LowerReal:
        return LowerReal(lambda n: self.domain(n).measure)

    def _stage_for(self, n: int, budget: int) -> int:
        target = 1 - pow2(-(n + 1))
        for s in range(budget + 1):
            if self.domain(s).measure >= target:
                return s
        raise NumericRefusal(
            "domain mass does not reach the required level within budget",
            index=n,
            achieved=self.domain(budget).measure,
        )

    def to_measurable(self, default=0, budget: int = DEFAULT_STAGE_BUDGET) -> "MeasurableRV":
        """Term n equals the variable on a clopen domain of mass >= 1 - 2^-(n+1)
        and `default` elsewhere."""
        default_sides = tuple((v, v) for v in as_point(default))
        if len(default_sides) != self.dim:
            raise ValueError("default value has the wrong dimension")

        def term(n):
            dom = self.domain(self._stage_for(n, budget))
            outside = dom.complement()

            def code(k):
                out = {p: default_sides for p in outside.prefixes}
                limit = oracle_depth()
                stack = list(dom.prefixes)
                while stack:
                    p = stack.pop()
                    r = self._evaluate(p, k)
                    if r is not None:
                        out[p] = _as_boxes(r)
                    elif len(p) >= limit:
                        raise ResourceLimit("piecewise evaluation needs prefixes beyond the oracle limit")
                    else:
                        stack.extend([p + "0", p + "1"])
                return out

            return TreeRV(self.dim, code, label=f"{self.label or 'piecewise'}[{n}]")

        return MeasurableRV(term, self.dim, label=self.label or "piecewise")


# ---------------------------------------------------------------------------
# Measurable random variables


class MeasurableRV:
    """Strong Cauchy sequence n -> X_n of continuous RVs, d(X_m, X_n) < 2^-min(m,n).

    `exact` marks sequences whose terms all equal the limit (lifted
    continuous variables); distributions then need no Cauchy penalty.
    """

    def __init__(self, approx: Callable[[int], ContinuousRV], dim: int, exact: bool = False, label: str = ""):
        self._approx = approx
        self._terms: dict[int, ContinuousRV] = {}
        self._lock = threading.Lock()
        self.dim, self.exact, self.label = dim, exact, label

    @classmethod
    def from_continuous(cls, X: ContinuousRV) -> "MeasurableRV":
        return cls(lambda n: X, X.dim, exact=True, label=X.label)

    def approx(self, n: int) -> ContinuousRV:
        if n < 0:
            raise ValueError("index must be nonnegative")
        with self._lock:
            t = self._terms.get(n)
            if t is None:
                t = self._terms[n] = self._approx(n)
        return t

    @property
    def continuous(self) -> ContinuousRV:
        if not self.exact:
            raise UnsupportedOperation("this random variable has no single continuous representative")
        return self.approx(0)

    def __repr__(self):
        return f"MeasurableRV({self.label or self.dim}{', exact' if self.exact else ''})"


def audit_certificate(X: MeasurableRV, max_index: int = 8, k: int = 12) -> list[tuple[int, int, Fraction, bool]]:
    """Check d(X_m, X_n) < 2^-min(m,n) + 2^-k for all m < n <= max_index."""
    out = []
    for m in range(max_index + 1):
        for n in range(m + 1, max_index + 1):
            d = fan_distance_upper(X.approx(m), X.approx(n), k)
            out.append((m, n, d, d < pow2(-m) + pow2(-k)))
    return out


def rv_product(X: MeasurableRV, Y: MeasurableRV) -> MeasurableRV:
    """(X, Y): term n pairs the (n+1)-th terms, so d < 2 * 2^-(n+1)."""
    if X.exact and Y.exact:
        return MeasurableRV.from_continuous(ProductRV([X.continuous, Y.continuous]))
    return MeasurableRV(
        lambda n: ProductRV([X.approx(n + 1), Y.approx(n + 1)]),
        X.dim + Y.dim,
        label=f"({X.label}, {Y.label})",
    )


def _fatten_encl(enc: Encl, i: int, eta: Fraction):
    return tuple((iv.lower - eta, iv.upper + eta) for iv in enc.intervals(i))


def rv_image(f: Callable, X: MeasurableRV, lipschitz=None, stage_budget: int = DEFAULT_STAGE_BUDGET) -> MeasurableRV:
    """f(X) for f with an interval extension.

    Exact inputs give exact outputs.  Otherwise a Lipschitz constant L
    re-indexes by ceil(log2 L); without one, term n uses X_j for the least
    j >= n + 2 (and at least the previous j) such that the table mass of
    X_j on which f varies by >= 2^-(n+1) within distance 2^-j is at most
    2^-(n+2).
    """
    if X.exact:
        return MeasurableRV.from_continuous(MappedRV(f, X.continuous, lipschitz=lipschitz))
    probe = MappedRV(f, X.approx(0), lipschitz=lipschitz)
    out_dim = probe.dim
    if lipschitz is not None:
        L = as_rational(lipschitz)
        c = max(0, math.ceil(math.log2(L))) if L > 0 else 0
        return MeasurableRV(
            lambda n: MappedRV(f, X.approx(n + c), out_dim, lipschitz=L), out_dim, label=f"image of {X.label}"
        )
    chosen: dict[int, int] = {}
    lock = threading.Lock()

    def bad_mass(j: int, n: int) -> Fraction:
        Xj = X.approx(j)
        t = Xj.table(j + 2)
        enc = t.encls[0]
        eta = pow2(-j)
        eps = pow2(-(n + 1))
        bad = 0
        for i in range(t.size):
            img = _as_boxes(_call_boxes(f, _fatten_encl(enc, i, eta)))
            if any(b - a >= eps for a, b in img):
                bad += int(t.count[i])
        return Fraction(bad, 1 << t.mass_exp)

    def index(n: int) -> int:
        with lock:
            if n in chosen:
                return chosen[n]
        prev = index(n - 1) if n > 0 else 0
        best = None
        for j in range(max(prev, n + 2), n + 2 + stage_budget):
            b = bad_mass(j, n)
            best = (j, b)
            if b <= pow2(-(n + 2)):
                with lock:
                    chosen[n] = j
                return j
        raise NumericRefusal(
            "could not certify the re-indexing of the image within budget",
            index=n,
            best_delta=pow2(-best[0]),
            bad_mass=best[1],
        )

    return MeasurableRV(lambda n: MappedRV(f, X.approx(index(n)), out_dim), out_dim, label=f"image of {X.label}")


def _call_boxes(f, sides):
    ivs = tuple(DyadicInterval(a, b) for a, b in sides)
    return f(ivs[0] if len(ivs) == 1 else ivs)


# ---------------------------------------------------------------------------
# Distributions


def _components_1d(boxes: Sequence[Box]) -> list[tuple[Fraction, Fraction]]:
    ivs = sorted(b.sides[0] for b in boxes)
    out: list[list[Fraction]] = []
    for a, b in ivs:
        if out and a < out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _box_list(U, n: int, dim: int) -> list[tuple[tuple[Fraction, Fraction], ...]]:
    boxes = list(U.enumerate(n)) if isinstance(U, OpenSet) else list(U)
    if not boxes:
        return []
    if dim == 1:
        return [((a, b),) for a, b in _components_1d(boxes)]
    return [b.sides for b in boxes]


def _clip(v: int) -> int:
    return max(-_INT_LIMIT, min(_INT_LIMIT, v))


def _inside_mass(t: Table, r: int, boxes, eta: Fraction) -> Fraction:
    """Mass of rows whose closed enclosure sits inside a box shrunk by eta."""
    enc = t.encls[r]
    s = enc.shift
    mask = np.zeros(t.size, dtype=bool)
    for sides in boxes:
        m = np.ones(t.size, dtype=bool)
        for j, (a, b) in enumerate(sides):
            a, b = a + eta, b - eta
            if a >= b:
                m[:] = False
                break
            m &= enc.lo[:, j] > _clip(_floor_at(a, s))
            m &= enc.hi[:, j] < _clip(_ceil_at(b, s))
        mask |= m
    return Fraction(int(t.count[mask].sum()), 1 << t.mass_exp)


def _meeting_mass(t: Table, r: int, boxes, eta: Fraction) -> Fraction:
    """Mass of rows whose closed enclosure meets a box grown by eta."""
    enc = t.encls[r]
    s = enc.shift
    mask = np.zeros(t.size, dtype=bool)
    for sides in boxes:
        m = np.ones(t.size, dtype=bool)
        for j, (a, b) in enumerate(sides):
            a, b = a - eta, b + eta
            m &= enc.lo[:, j] < _clip(_ceil_at(b, s))
            m &= enc.hi[:, j] > _clip(_floor_at(a, s))
        mask |= m
    return Fraction(int(t.count[mask].sum()), 1 << t.mass_exp)


def _term_table(X: MeasurableRV, m: int) -> Table:
    """Table used for the index-m term of stage computations."""
    if X.exact:
        return X.continuous.table(m)
    return X.approx(m).table(m + 1)


def distribution_term(X: MeasurableRV, U, m: int) -> Fraction:
    """One lower bound: P(X_m in I_{2^-m}(U)) - 2^-m, or the exact-case count."""
    t = _term_table(X, m)
    boxes = _box_list(U, m, X.dim)
    if X.exact:
        return _inside_mass(t, 0, boxes, Fraction(0))
    eta = pow2(-m)
    return max(Fraction(0), _inside_mass(t, 0, boxes, eta) - eta)


def rv_distribution(X: MeasurableRV, U: OpenSet) -> LowerReal:
    """Pr(X in U) as a lower real; stage n is the best term over m <= n."""
    return LowerReal(lambda n: distribution_term(X, U, n))


def rv_distribution_upper(X: MeasurableRV, U, stage: int = 12) -> Fraction:
    """Upper bound on Pr(X in U) for a finite box union U (enumeration complete
    at `stage`); the minimum over terms m <= stage of P(X_m meets U_eta) + eta."""
    best = Fraction(1)
    ms = (stage,) if X.exact else range(stage + 1)
    for m in ms:
        t = _term_table(X, m)
        boxes = _box_list(U, stage, X.dim)
        eta = Fraction(0) if X.exact else pow2(-m)
        best = min(best, _meeting_mass(t, 0, boxes, eta) + eta)
    return best


# ---------------------------------------------------------------------------
# Realization of valuations


def _odd_part(n: int) -> int:
    while n and n % 2 == 0:
        n //= 2
    return n


def _offsets(nu: WeightedBoxValuation) -> tuple[Fraction, ...]:
    """Grid offsets 1/r, r an odd prime, chosen so no fixed coordinate of any
    atom ever lies on a grid hyperplane."""
    primes = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73]
    out = []
    for i in range(nu.dim):
        dens = [_odd_part(a.sides[i][0].denominator) for a in nu.atoms if a.sides[i][0] == a.sides[i][1]]
        for r in primes:
            if all(d % r for d in dens):
                out.append(Fraction(1, r))
                break
        else:
            raise UnsupportedOperation("could not find a grid offset avoiding all point atoms")
    return tuple(out)


def _floor_div(q: Fraction, h: Fraction) -> int:
    return math.floor(q / h)


def _cell_key(J: tuple[int, ...], level: int) -> tuple:
    """Order cells so that children of a cell are contiguous and ordered alike."""
    top = tuple(j >> level for j in J)
    path = []
    for b in range(level - 1, -1, -1):
        path.append(sum(((j >> b) & 1) << i for i, j in enumerate(J)))
    return top + tuple(path)


MAX_REALIZE_CELLS = 1 << 20


def _axis_shares(a: Fraction, b: Fraction, o: Fraction, h: Fraction) -> list[tuple[int, Fraction]]:
    """Cells of the offset grid met by [a, b] and the share of [a, b] in each."""
    if a == b:
        return [(_floor_div(a - o, h), Fraction(1))]
    j0 = _floor_div(a - o, h)
    j1 = math.ceil((b - o) / h) - 1
    if j0 == j1:
        return [(j0, Fraction(1))]
    L = b - a
    first = (o + (j0 + 1) * h - a) / L
    last = (b - (o + j1 * h)) / L
    inner = h / L
    out = [(j0, first)] if first > 0 else []
    out.extend((j, inner) for j in range(j0 + 1, j1))
    if last > 0:
        out.append((j1, last))
    return out


def _level_cells(nu: WeightedBoxValuation, offs, level: int):
    """Cells with positive mass at a level: (order, numerators, den, points)."""
    h = pow2(-(level + 1))
    mass: dict = {}
    points: dict = {}
    for atom in nu.atoms:
        if atom.weight == 0:
            continue
        if atom.kind == "cloud" and not atom.is_point:
            lo = [_floor_div(a - o, h) for (a, _), o in zip(atom.sides, offs)]
            inside = all(o + j * h < a and b < o + (j + 1) * h for (a, b), o, j in zip(atom.sides, offs, lo))
            if not inside:
                raise PartitionStalled(
                    "a cloud atom straddles the realization grid; its mass cannot be allocated",
                    level=level,
                    weight=atom.weight,
                )
            J = tuple(lo)
            mass.setdefault(J, []).append(atom.weight)
            points[J] = None
            continue
        axes = [_axis_shares(a, b, o, h) for (a, b), o in zip(atom.sides, offs)]
        ncells = math.prod(len(ax) for ax in axes)
        if ncells > MAX_REALIZE_CELLS:
            raise ResourceLimit("realization grid too fine for this valuation", level=level, cells=ncells)
        pt = tuple(a for a, _ in atom.sides) if atom.is_point else None
        products: dict = {}
        for combo in itertools.product(*axes):
            J = tuple(j for j, _ in combo)
            key = tuple(s for _, s in combo)
            f = products.get(key)
            if f is None:
                f = atom.weight
                for s in key:
                    f *= s
                products[key] = f
            mass.setdefault(J, []).append(f)
            if J in points:
                if points[J] != pt:
                    points[J] = None
            else:
                points[J] = pt
    if len(mass) > MAX_REALIZE_CELLS:
        raise ResourceLimit("realization grid too fine for this valuation", level=level, cells=len(mass))
    distinct = {f for fs in mass.values() for f in fs}
    den = math.lcm(*(f.denominator for f in distinct)) if distinct else 1
    scaled = {f: f.numerator * (den // f.denominator) for f in distinct}
    nums = {J: sum(scaled[f] for f in fs) for J, fs in mass.items()}
    if nu.dim == 1:
        order = sorted(nums)
    else:
        order = sorted(nums, key=lambda J: _cell_key(J, level))
    return order, nums, den, points


def _realize_level(nu: WeightedBoxValuation, offs, level: int) -> StepRV:
    order, nums, den, points = _level_cells(nu, offs, level)
    r = len(order)
    depth = level + 3 + max(0, (r - 1).bit_length())
    if depth > 60 or level > 44:
        raise ResourceLimit("realization needs more than 60 bits of omega", level=level)
    cuts = []
    acc = 0
    two_den = 2 * den
    for J in order[:-1]:
        acc += nums[J]
        cuts.append(((acc << (depth + 1)) + den) // two_den)
    # cell centers o + (2j+1) 2^-(level+2) on the 2^-48 grid
    shift = 48
    J = np.array(order, dtype=np.int64).reshape(r, nu.dim)
    odd = (2 * J + 1) << np.int64(shift - level - 2)
    lo = odd + np.array([_floor_at(o, shift) for o in offs], dtype=np.int64)
    hi = odd + np.array([_ceil_at(o, shift) for o in offs], dtype=np.int64)
    for i, Jt in enumerate(order):
        p = points[Jt]
        if p is not None:
            e = encode_boxes([tuple((v, v) for v in p)], shift)
            lo[i], hi[i] = e.lo[0], e.hi[0]
    enc = Encl(lo, hi, shift)
    return StepRV(depth, np.array(cuts, dtype=np.int64), enc, label=f"realization level {level}")


def rv_realize(nu) -> MeasurableRV:
    """A random variable with law nu, for a probability WeightedBoxValuation.

    Level n cuts space into the cells of an offset dyadic grid of side
    2^-(n+1) (offsets avoid every fixed atom coordinate, so cell boundaries
    carry no mass) and hands each cell a dyadic sub-interval of [0,1]
    proportional to its mass, in a nested order.  Cut points are rounded
    so the misallocated mass stays below 2^-(n+3); then
    d(X_m, X_n) <= 2^-(min+1).
    """
    if not isinstance(nu, WeightedBoxValuation):
        raise UnsupportedOperation("realization is implemented for finite atom valuations")
    if nu.exact_total != 1:
        raise ContractViolation("realization needs a probability valuation", total=nu.exact_total)
    offs = _offsets(nu)
    return MeasurableRV(lambda n: _realize_level(nu, offs, n), nu.dim, label="realization")


# ---------------------------------------------------------------------------
# Expectations and norms


def _step_integral(ts: Sequence[Fraction], ws: Sequence[Fraction], upper_x: Fraction, phi, p: int) -> Fraction:
    """Integral over x in [0, upper_x] of p x^(p-1) phi(S(x)), S(x) = sum of w_i with x < t_i."""
    if upper_x <= 0:
        return Fraction(0)
    pairs = sorted(zip(ts, ws), key=lambda tw: tw[0], reverse=True)
    total = Fraction(0)
    S = Fraction(0)
    right = upper_x
    i = 0
    n = len(pairs)
    # walk x downward; on [t_(i+1), t_(i)) S is the mass of the top i thresholds
    while True:
        while i < n and pairs[i][0] >= right:
            S += pairs[i][1]
            i += 1
        left = pairs[i][0] if i < n else Fraction(0)
        left = max(left, Fraction(0))
        if right > left:
            total += phi(S) * (right**p - left**p)
        if left <= 0:
            break
        right = left
    return total


def _values(t: Table, r: int = 0, absolute: bool = False):
    enc = t.encls[r]
    den = 1 << enc.shift
    if absolute:
        lo = np.where(enc.lo > 0, enc.lo, np.where(enc.hi < 0, -enc.hi, 0)).max(axis=1)
        hi = np.maximum(np.abs(enc.lo), np.abs(enc.hi)).max(axis=1)
    else:
        if enc.dim != 1:
            raise ValueError("expectation needs a real-valued variable")
        lo, hi = enc.lo[:, 0], enc.hi[:, 0]
    lows = [Fraction(int(v), den) for v in lo.tolist()]
    highs = [Fraction(int(v), den) for v in hi.tolist()]
    ws = [Fraction(int(c), 1 << t.mass_exp) for c in t.count.tolist()]
    return lows, highs, ws


def _moment_bounds(t: Table, eta: Fraction, b: Optional[Fraction], p: int, absolute: bool, negate: bool = False):
    """Lower/upper bounds of E(Y^p) for Y = X^+ (or X^- with negate, or |X|)."""
    lows, highs, ws = _values(t, absolute=absolute)
    if negate:
        lows, highs = [-h for h in highs], [-lo for lo in lows]
    lower_ts = [lo - eta for lo in lows]
    top = max([Fraction(0)] + lower_ts)
    lo_val = _step_integral(lower_ts, ws, top if b is None else min(top, b), lambda S: max(Fraction(0), S - eta), p)
    if b is None:
        return lo_val, None
    upper_ts = [h + eta for h in highs]
    hi_val = _step_integral(upper_ts, ws, b, lambda S: min(Fraction(1), S + eta), p)
    return lo_val, hi_val


def _check_nonnegative(t: Table, eta: Fraction):
    _, highs, ws = _values(t)
    neg = sum((w for h, w in zip(highs, ws) if h < -eta), Fraction(0))
    if neg > eta:
        raise ContractViolation("negative values met in a lower expectation", mass=neg)


def _terms(X: MeasurableRV, stage: int):
    if X.exact:
        return [(X.continuous.table(stage), Fraction(0))]
    return [(X.approx(m).table(m + 1), pow2(-m)) for m in range(stage + 1)]


def expectation(X: MeasurableRV, tail_bound=None, stage: int = 16):
    """E(X).  Without a tail bound: a lower real for X >= 0.  With a
    certified bound b (Pr(|X| > b) = 0): an enclosure at `stage`."""
    if tail_bound is None:

        def lower(n):
            if X.exact:
                t, eta = X.continuous.table(n), Fraction(0)
            else:
                t, eta = X.approx(n).table(n + 1), pow2(-n)
            _check_nonnegative(t, eta)
            return _moment_bounds(t, eta, None, 1, False)[0]

        return LowerReal(lower)
    b = as_rational(tail_bound)
    lo, hi = -b, b
    for t, eta in _terms(X, stage):
        pl, pu = _moment_bounds(t, eta, b, 1, False)
        nl, nu_ = _moment_bounds(t, eta, b, 1, False, negate=True)
        lo, hi = max(lo, pl - nu_), min(hi, pu - nl)
    return DyadicInterval(lo, hi)


def lower_expectation(X: MeasurableRV, f: LowerFunction) -> LowerReal:
    """Lower integral of f against the law of X."""

    def stage(n):
        if X.exact:
            t, eta = X.continuous.table(n), Fraction(0)
        else:
            t, eta = X.approx(n).table(n + 1), pow2(-n)
        enc = t.encls[0]
        cap = pow2(n)
        vals = []
        for i in range(t.size):
            v = f.eval(_fatten_encl(enc, i, eta), n)
            vals.append(min(max(Fraction(v), Fraction(0)), cap))
        ws = [Fraction(int(c), 1 << t.mass_exp) for c in t.count.tolist()]
        if eta == 0:
            return sum((v * w for v, w in zip(vals, ws)), Fraction(0))
        return _step_integral(vals, ws, max(vals, default=Fraction(0)), lambda S: max(Fraction(0), S - eta), 1)

    return LowerReal(stage)


def lp_norm(X: MeasurableRV, p: int, tail_bound=None, stage: int = 16) -> DyadicInterval:
    """Enclosure of (E|X|^p)^(1/p), p in {1, 2}, |.| the max-norm."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if tail_bound is None:
        raise ContractViolation("lp_norm needs a certified tail bound")
    b = as_rational(tail_bound)
    lo, hi = Fraction(0), b**p
    for t, eta in _terms(X, stage):
        ml, mu = _moment_bounds(t, eta, b, p, True)
        lo, hi = max(lo, ml), min(hi, mu)
    if p == 1:
        return DyadicInterval(lo, hi)
    return DyadicInterval(sqrt_lower(lo), sqrt_upper(hi))


# ---------------------------------------------------------------------------
# Independence


@dataclass(frozen=True)
class IndependenceReport:
    certified_discrepancy: Fraction  # lower bound on max |P(joint) - P1 P2|
    discrepancy_upper: Fraction
    tol: Fraction
    pairs: tuple

    @property
    def verdict(self) -> str:
        if self.certified_discrepancy > self.tol:
            return "dependent"
        if self.discrepancy_upper <= self.tol:
            return "independent within tol"
        return "inconclusive"


def _as_boxes_list(U) -> list[Box]:
    if isinstance(U, OpenSet):
        return list(U.enumerate(0))
    if isinstance(U, Box):
        return [U]
    return list(U)


def independence_check(X: MeasurableRV, Y: MeasurableRV, Us, tol=0, stage: int = 12) -> IndependenceReport:
    """Compare Pr(X in U1, Y in U2) with Pr(X in U1) Pr(Y in U2).

    `Us` is a list of (U1, U2) pairs or a list of opens (all pairs are used);
    opens must be finite box unions.
    """
    tol = as_rational(tol)
    Us = list(Us)
    if Us and isinstance(Us[0], tuple) and len(Us[0]) == 2 and not isinstance(Us[0], Box):
        pairs = Us
    else:
        pairs = list(itertools.product(Us, Us))
    Z = rv_product(X, Y)
    worst_lo = worst_hi = Fraction(0)
    rows = []
    for U1, U2 in pairs:
        b1, b2 = _as_boxes_list(U1), _as_boxes_list(U2)
        joint = [Box(a.sides + c.sides) for a in b1 for c in b2]
        p1 = (rv_distribution(X, OpenSet.from_boxes(b1, X.dim)).approx(stage), rv_distribution_upper(X, b1, stage))
        p2 = (rv_distribution(Y, OpenSet.from_boxes(b2, Y.dim)).approx(stage), rv_distribution_upper(Y, b2, stage))
        J = (
            rv_distribution(Z, OpenSet.from_boxes(joint, Z.dim)).approx(stage),
            rv_distribution_upper(Z, joint, stage),
        )
        lo = max(Fraction(0), J[0] - p1[1] * p2[1], p1[0] * p2[0] - J[1])
        hi = max(J[1] - p1[0] * p2[0], p1[1] * p2[1] - J[0])
        worst_lo, worst_hi = max(worst_lo, lo), max(worst_hi, hi)
        rows.append((lo, hi))
    return IndependenceReport(worst_lo, worst_hi, tol, tuple(rows))
