"""Cantor space, cylinder combinatorics, and open/closed subsets of R^d.

Open sets are cumulative enumerations of rational open boxes; closed sets
are complements of open sets.  All set arithmetic is exact.
"""

from __future__ import annotations

import itertools
import os
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import NumericRefusal, ResourceLimit
from .exactnum import as_rational, pow2

DEFAULT_ORACLE_DEPTH = 22

Point = tuple  # tuple of Fractions


def oracle_depth() -> int:
    """Cap on exhaustive cylinder enumeration, from RIGORSTOCH_ORACLE_DEPTH."""
    raw = os.environ.get("RIGORSTOCH_ORACLE_DEPTH")
    if raw is None:
        return DEFAULT_ORACLE_DEPTH
    try:
        return int(raw)
    except ValueError:
        return DEFAULT_ORACLE_DEPTH


def check_depth(depth: int, what: str = "cylinder enumeration") -> None:
    limit = oracle_depth()
    if depth > limit:
        raise ResourceLimit(
            f"{what} needs depth {depth}, above the oracle limit {limit}",
            depth=depth,
            limit=limit,
        )


def as_point(x) -> Point:
    if isinstance(x, (tuple, list)):
        return tuple(as_rational(v) for v in x)
    return (as_rational(x),)


# ---------------------------------------------------------------------------
# Cantor space


def global_index(copy: int, j: int) -> int:
    """Global bit index of bit j of copy `copy` under the interleaving."""
    return (1 << copy) * (2 * j + 1) - 1


def split_index(g: int) -> tuple[int, int]:
    """Inverse of global_index: (copy, j)."""
    g1 = g + 1
    copy = (g1 & -g1).bit_length() - 1
    return copy, ((g1 >> copy) - 1) // 2


_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def stream_words(key: int, idx) -> np.ndarray:
    """64-bit words of a counter-based stream: word i = splitmix64(key + (i+1)*gamma).

    Random access at any index is what the Wiener sampler needs for local
    refinement, which ordinary sequential generators do not offer.
    """
    i = np.asarray(idx, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (i + np.uint64(1)) * _GAMMA
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def stream_key(seed: int, copy: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(copy)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class CantorPoint:
    """A point of {0,1}^omega given by a total bit function."""

    def __init__(self, bit: Callable[[int], int]):
        self._bit = bit

    def bit(self, i: int) -> int:
        return self._bit(i)

    def prefix(self, m: int) -> str:
        return "".join(str(self.bit(i)) for i in range(m))

    def prefix_int(self, m: int) -> int:
        v = 0
        for i in range(m):
            v = (v << 1) | self.bit(i)
        return v

    def copy(self, i: int) -> "CantorPoint":
        """The i-th coordinate under the identification Sigma = Sigma^omega."""
        return CantorPoint(lambda j: self.bit(global_index(i, j)))

    @classmethod
    def from_prefix(cls, bits: str, tail: int = 0) -> "CantorPoint":
        bits = bits.strip()
        if any(c not in "01" for c in bits):
            raise ValueError(f"not a bit string: {bits!r}")
        return cls(lambda i: int(bits[i]) if i < len(bits) else tail)

    @classmethod
    def from_copies(cls, copies: Callable[[int], "CantorPoint"]) -> "CantorPoint":
        """Interleave countably many points into one."""

        def bit(g):
            c, j = split_index(g)
            return copies(c).bit(j)

        return cls(bit)


class SeededPoint(CantorPoint):
    """Pseudo-random point: copy c draws from its own counter-based stream.

    Global bits follow the interleaving, so `copy(c)` agrees with the
    generic definition while allowing vectorized word access.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._keys: dict[int, int] = {}
        self._lock = threading.Lock()
        super().__init__(self._global_bit)

    def key(self, copy: int) -> int:
        with self._lock:
            k = self._keys.get(copy)
            if k is None:
                k = self._keys[copy] = stream_key(self.seed, copy)
            return k

    def words(self, copy: int, idx) -> np.ndarray:
        return stream_words(self.key(copy), idx)

    def copy_bit(self, copy: int, j: int) -> int:
        w = int(self.words(copy, [j // 64])[0])
        return (w >> (63 - j % 64)) & 1

    def _global_bit(self, g: int) -> int:
        return self.copy_bit(*split_index(g))

    def copy(self, i: int) -> CantorPoint:
        return _SeededCopy(self, i)


class _SeededCopy(CantorPoint):
    def __init__(self, parent: SeededPoint, c: int):
        self.parent, self.c = parent, c
        super().__init__(lambda j: parent.copy_bit(c, j))

    def words(self, idx) -> np.ndarray:
        return self.parent.words(self.c, idx)


@dataclass(frozen=True, order=True)
class Cylinder:
    prefix: str

    def __post_init__(self):
        if any(c not in "01" for c in self.prefix):
            raise ValueError(f"not a bit string: {self.prefix!r}")

    @property
    def depth(self) -> int:
        return len(self.prefix)

    @property
    def measure(self) -> Fraction:
        return Fraction(1, 1 << len(self.prefix))

    def extends(self, other: "Cylinder") -> bool:
        return self.prefix.startswith(other.prefix)

    def contains(self, omega: CantorPoint) -> bool:
        return omega.prefix(len(self.prefix)) == self.prefix

    def interval(self) -> tuple[Fraction, Fraction]:
        """The cylinder as a dyadic subinterval of [0,1] via binary expansion."""
        d = len(self.prefix)
        lo = Fraction(int(self.prefix, 2), 1 << d) if d else Fraction(0)
        return lo, lo + Fraction(1, 1 << d)


class ClopenSet:
    """Finite union of cylinders, kept as a normalized prefix antichain."""

    def __init__(self, cylinders: Iterable = ()):
        prefixes = {c.prefix if isinstance(c, Cylinder) else str(c) for c in cylinders}
        self._prefixes = tuple(sorted(_normalize(prefixes), key=lambda p: (len(p), p)))

    @classmethod
    def full(cls) -> "ClopenSet":
        return cls([""])

    @property
    def cylinders(self) -> tuple[Cylinder, ...]:
        return tuple(Cylinder(p) for p in self._prefixes)

    @property
    def prefixes(self) -> tuple[str, ...]:
        return self._prefixes

    @property
    def measure(self) -> Fraction:
        return sum((Fraction(1, 1 << len(p)) for p in self._prefixes), Fraction(0))

    @property
    def depth(self) -> int:
        return max((len(p) for p in self._prefixes), default=0)

    def contains(self, omega: CantorPoint) -> bool:
        cache: dict[int, str] = {}
        for p in self._prefixes:
            s = cache.get(len(p))
            if s is None:
                s = cache[len(p)] = omega.prefix(len(p))
            if s == p:
                return True
        return False

    def contains_prefix(self, bits: str) -> bool:
        """True when every extension of `bits` lies in the set."""
        return any(bits.startswith(p) for p in self._prefixes)

    def union(self, other: "ClopenSet") -> "ClopenSet":
        return ClopenSet(self._prefixes + other._prefixes)

    def intersection(self, other: "ClopenSet") -> "ClopenSet":
        out = []
        for a in self._prefixes:
            for b in other._prefixes:
                if a.startswith(b):
                    out.append(a)
                elif b.startswith(a):
                    out.append(b)
        return ClopenSet(out)

    def complement(self) -> "ClopenSet":
        members = set(self._prefixes)

        def comp(p: str) -> list[str]:
            if p in members:
                return []
            if not any(q.startswith(p) for q in members):
                return [p]
            return comp(p + "0") + comp(p + "1")

        return ClopenSet(comp(""))

    def __eq__(self, other):
        return isinstance(other, ClopenSet) and self._prefixes == other._prefixes

    def __hash__(self):
        return hash(self._prefixes)

    def __repr__(self):
        return f"ClopenSet({list(self._prefixes)})"


def _normalize(prefixes: set[str]) -> set[str]:
    for p in prefixes:
        if any(c not in "01" for c in p):
            raise ValueError(f"not a bit string: {p!r}")
    ordered = sorted(prefixes, key=len)
    kept: set[str] = set()
    for p in ordered:
        if not any(p[:i] in kept for i in range(len(p) + 1)):
            kept.add(p)
    # merge sibling pairs bottom-up
    changed = True
    while changed:
        changed = False
        for p in sorted(kept, key=len, reverse=True):
            if p and p in kept:
                sib = p[:-1] + ("1" if p[-1] == "0" else "0")
                if sib in kept:
                    kept.discard(p)
                    kept.discard(sib)
                    kept.add(p[:-1])
                    changed = True
    return kept


def cylinder_partition(depth: int) -> list[Cylinder]:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    check_depth(depth)
    if depth == 0:
        return [Cylinder("")]
    return [Cylinder(format(i, f"0{depth}b")) for i in range(1 << depth)]


# ---------------------------------------------------------------------------
# Boxes and open sets in R^d


@dataclass(frozen=True)
class Box:
    """Open box prod (a_i, b_i) with rational faces."""

    sides: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        sides = tuple((as_rational(a), as_rational(b)) for a, b in self.sides)
        for a, b in sides:
            if not a < b:
                raise ValueError(f"degenerate open side ({a}, {b})")
        object.__setattr__(self, "sides", sides)

    @classmethod
    def of(cls, *sides) -> "Box":
        return cls(tuple(sides))

    @classmethod
    def maybe(cls, sides) -> Optional["Box"]:
        sides = tuple((as_rational(a), as_rational(b)) for a, b in sides)
        if all(a < b for a, b in sides):
            return cls(sides)
        return None

    @property
    def dim(self) -> int:
        return len(self.sides)

    def contains_point(self, x: Point) -> bool:
        return all(a < v < b for (a, b), v in zip(self.sides, x))

    def contains_closed(self, sides) -> bool:
        """Does this open box contain the closed box with the given sides?"""
        return all(a < lo and hi < b for (a, b), (lo, hi) in zip(self.sides, sides))

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for (a, b), (c, d) in zip(self.sides, other.sides))

    def intersect(self, other: "Box") -> Optional["Box"]:
        return Box.maybe((max(a, c), min(b, d)) for (a, b), (c, d) in zip(self.sides, other.sides))

    def shrink(self, eps: Fraction) -> Optional["Box"]:
        return Box.maybe((a + eps, b - eps) for a, b in self.sides)

    def volume(self) -> Fraction:
        v = Fraction(1)
        for a, b in self.sides:
            v *= b - a
        return v

    def center(self) -> Point:
        return tuple((a + b) / 2 for a, b in self.sides)

    def __repr__(self):
        return "Box(" + " x ".join(f"({a}, {b})" for a, b in self.sides) + ")"


class OpenSet:
    """Union of a cumulative stage-indexed enumeration of open boxes."""

    def __init__(self, dim: int, stages: Callable[[int], Sequence[Box]], label: str = ""):
        self.dim = dim
        self._stages = stages
        self._cache: dict[int, tuple[Box, ...]] = {}
        self._lock = threading.Lock()
        self.label = label

    def enumerate(self, n: int) -> tuple[Box, ...]:
        got = self._cache.get(n)
        if got is not None:
            return got
        with self._lock:
            got = self._cache.get(n)
            if got is None:
                boxes = list(self._stages(n))
                prev = self._cache.get(n - 1) if n > 0 else None
                if prev is not None:
                    seen = set(boxes)
                    boxes = boxes + [b for b in prev if b not in seen]
                got = self._cache[n] = tuple(boxes)
            return got

    @classmethod
    def from_boxes(cls, boxes: Iterable[Box], dim: Optional[int] = None) -> "OpenSet":
        boxes = tuple(boxes)
        if dim is None:
            if not boxes:
                raise ValueError("dimension needed for an empty box list")
            dim = boxes[0].dim
        return cls(dim, lambda n: boxes, label="boxes")

    @classmethod
    def interval(cls, a, b) -> "OpenSet":
        return cls.from_boxes([Box.of((a, b))])

    @classmethod
    def box(cls, *sides) -> "OpenSet":
        return cls.from_boxes([Box(tuple(sides))])

    @classmethod
    def ball(cls, center, r) -> "OpenSet":
        """Open ball of the max-norm."""
        c, r = as_point(center), as_rational(r)
        return cls.from_boxes([Box(tuple((x - r, x + r) for x in c))])

    @classmethod
    def empty(cls, dim: int = 1) -> "OpenSet":
        return cls(dim, lambda n: (), label="empty")

    @classmethod
    def full(cls, dim: int = 1) -> "OpenSet":
        return cls(dim, lambda n: (Box(((-pow2(n), pow2(n)),) * dim),), label="full")

    def union(self, other: "OpenSet") -> "OpenSet":
        _same_dim(self, other)
        return OpenSet(self.dim, lambda n: self.enumerate(n) + other.enumerate(n))

    def intersection(self, other: "OpenSet") -> "OpenSet":
        _same_dim(self, other)

        def stage(n):
            out = []
            for a in self.enumerate(n):
                for b in other.enumerate(n):
                    c = a.intersect(b)
                    if c is not None:
                        out.append(c)
            return out

        return OpenSet(self.dim, stage)

    __or__ = union
    __and__ = intersection

    def product(self, other: "OpenSet") -> "OpenSet":
        def stage(n):
            return [Box(a.sides + b.sides) for a in self.enumerate(n) for b in other.enumerate(n)]

        return OpenSet(self.dim + other.dim, stage)

    def contains_point(self, x, n: int) -> bool:
        """Membership certified by stage n."""
        x = as_point(x)
        return any(b.contains_point(x) for b in self.enumerate(n))

    def map_boxes(self, fn: Callable[[Box], Optional[Box]]) -> "OpenSet":
        def stage(n):
            return [c for c in (fn(b) for b in self.enumerate(n)) if c is not None]

        return OpenSet(self.dim, stage)

    def __repr__(self):
        return f"OpenSet(dim={self.dim}{', ' + self.label if self.label else ''})"


def _same_dim(a, b):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch {a.dim} vs {b.dim}")


class ClosedSet:
    """Closed subset of R^d, represented by its open complement."""

    def __init__(self, complement: OpenSet):
        self.complement = complement
        self.dim = complement.dim

    @classmethod
    def from_box(cls, *sides) -> "ClosedSet":
        """Closed box prod [a_i, b_i]; degenerate sides give points and faces."""
        sides = tuple((as_rational(a), as_rational(b)) for a, b in sides)
        for a, b in sides:
            if a > b:
                raise ValueError(f"inverted closed side [{a}, {b}]")
        return cls(_closed_box_complement(sides))

    @classmethod
    def point(cls, x) -> "ClosedSet":
        x = as_point(x)
        return cls.from_box(*[(v, v) for v in x])

    @classmethod
    def interval(cls, a, b) -> "ClosedSet":
        return cls.from_box((a, b))

    @classmethod
    def empty(cls, dim: int = 1) -> "ClosedSet":
        return cls(OpenSet.full(dim))

    @classmethod
    def whole(cls, dim: int = 1) -> "ClosedSet":
        return cls(OpenSet.empty(dim))

    def excludes_point(self, x, n: int) -> bool:
        """Non-membership certified by stage n."""
        return self.complement.contains_point(x, n)

    def union(self, other: "ClosedSet") -> "ClosedSet":
        return ClosedSet(self.complement.intersection(other.complement))

    def intersection(self, other: "ClosedSet") -> "ClosedSet":
        return ClosedSet(self.complement.union(other.complement))


def _closed_box_complement(sides) -> OpenSet:
    def stage(n):
        big = pow2(n)
        out = []
        for i, (a, b) in enumerate(sides):
            for lo, hi in ((a - big, a), (b, b + big)):
                full = [(s_lo - big, s_hi + big) for s_lo, s_hi in sides]
                full[i] = (lo, hi)
                out.append(Box(tuple(full)))
        return out

    return OpenSet(len(sides), stage, label="closed-box complement")


def inner_shrink(U: OpenSet, eps) -> OpenSet:
    """Boxes shrunk by eps on every face; boxes that collapse are dropped."""
    eps = as_rational(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return U.map_boxes(lambda b: b.shrink(eps))


def closed_fatten(A: ClosedSet, eps) -> ClosedSet:
    return ClosedSet(inner_shrink(A.complement, eps))


# ---------------------------------------------------------------------------
# Exact box geometry


def _pieces(coords: list[Fraction], lo: Fraction, hi: Fraction):
    """Elementary pieces of (lo, hi) cut at coords: points and open gaps."""
    cuts = sorted({c for c in coords if lo < c < hi})
    pts = [lo] + cuts + [hi]
    out = []
    for i in range(len(pts) - 1):
        out.append(("gap", pts[i], pts[i + 1]))
        if i + 1 < len(pts) - 1:
            out.append(("pt", pts[i + 1], pts[i + 1]))
    return out


def box_covered(box: Box, cover: Sequence[Box]) -> bool:
    """Exact test: is the open box contained in the union of the open boxes?"""
    cover = [c for c in cover if c.intersect(box) is not None]
    if any(c.contains_box(box) for c in cover):
        return True
    if not cover:
        return False
    axes = []
    for i, (lo, hi) in enumerate(box.sides):
        coords = [c.sides[i][0] for c in cover] + [c.sides[i][1] for c in cover]
        axes.append(_pieces(coords, lo, hi))
    for cell in itertools.product(*axes):
        ok = False
        for c in cover:
            inside = True
            for (kind, p, q), (a, b) in zip(cell, c.sides):
                if kind == "pt":
                    if not a < p < b:
                        inside = False
                        break
                elif not (a <= p and q <= b):
                    inside = False
                    break
            if inside:
                ok = True
                break
        if not ok:
            return False
    return True


def open_subset(U: OpenSet, V: OpenSet, n: int) -> bool:
    """Stage-n certificate that U(n) is contained in V(n)."""
    cover = V.enumerate(n)
    return all(box_covered(b, cover) for b in U.enumerate(n))


def union_measure(region, boxes: Sequence[Box]) -> Fraction:
    """Lebesgue measure of region ∩ (∪ boxes), relative to the region.

    `region` is a closed box given as sides [lo, hi]; degenerate sides are
    fixed coordinates which must lie strictly inside a box to count.  The
    result is the covered fraction of the region's non-degenerate volume.
    """
    free = [i for i, (lo, hi) in enumerate(region) if lo < hi]
    fixed = [i for i, (lo, hi) in enumerate(region) if lo == hi]
    clipped = []
    for b in boxes:
        if not all(b.sides[i][0] < region[i][0] < b.sides[i][1] for i in fixed):
            continue
        sides = []
        for i in free:
            a = max(b.sides[i][0], region[i][0])
            c = min(b.sides[i][1], region[i][1])
            if a >= c:
                break
            sides.append((a, c))
        else:
            clipped.append(sides)
    if not clipped:
        return Fraction(0)
    if not free:
        return Fraction(1)
    total = Fraction(1)
    for i in free:
        total *= region[i][1] - region[i][0]
    if len(free) == 1:
        covered = _interval_union_length([s[0] for s in clipped])
    else:
        covered = _grid_union_volume(clipped)
    return covered / total


def _interval_union_length(ivs) -> Fraction:
    ivs = sorted(ivs)
    length = Fraction(0)
    cur_lo, cur_hi = ivs[0]
    for lo, hi in ivs[1:]:
        if lo <= cur_hi:
            if hi > cur_hi:
                cur_hi = hi
        else:
            length += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
    return length + cur_hi - cur_lo


def _grid_union_volume(boxes) -> Fraction:
    d = len(boxes[0])
    grids = [sorted({s[i][0] for s in boxes} | {s[i][1] for s in boxes}) for i in range(d)]
    vol = Fraction(0)
    for cell in itertools.product(*[range(len(g) - 1) for g in grids]):
        lows = [grids[i][cell[i]] for i in range(d)]
        highs = [grids[i][cell[i] + 1] for i in range(d)]
        for s in boxes:
            if all(s[i][0] <= lows[i] and highs[i] <= s[i][1] for i in range(d)):
                v = Fraction(1)
                for i in range(d):
                    v *= highs[i] - lows[i]
                vol += v
                break
    return vol


def subtract_closed_box(box: Box, closed) -> list[Box]:
    """Open box minus a closed box, as a union of open boxes."""
    if not all(c_hi > a and c_lo < b for (a, b), (c_lo, c_hi) in zip(box.sides, closed)):
        return [box]
    out = []
    for i, (c_lo, c_hi) in enumerate(closed):
        a, b = box.sides[i]
        for lo, hi in ((a, min(b, c_lo)), (max(a, c_hi), b)):
            if lo < hi:
                sides = list(box.sides)
                sides[i] = (lo, hi)
                out.append(Box(tuple(sides)))
    return out


# ---------------------------------------------------------------------------
# Boundary-null partitions


@dataclass(frozen=True)
class Piece:
    region: OpenSet
    center: Point
    radius: Fraction
    mass: Fraction


class PartitionStalled(NumericRefusal):
    pass


def dyadic_centers(lo: Point, hi: Point) -> Iterator[Point]:
    """Dense sequence of dyadic points of the box [lo, hi], coarse to fine."""
    level = 0
    seen: set = set()
    while True:
        n = 1 << level
        axes = [[l + (h - l) * Fraction(2 * j + 1, 2 * n) for j in range(n)] for l, h in zip(lo, hi)]
        for p in itertools.product(*axes):
            if p not in seen:
                seen.add(p)
                yield p
        level += 1


def _sphere_complement(center: Point, r: Fraction) -> OpenSet:
    """Complement of the max-norm sphere {x : |x - c| = r}."""
    inner = OpenSet.ball(center, r)
    outer = _closed_box_complement(tuple((c - r, c + r) for c in center))
    return inner.union(outer)


def boundary_null_partition(
    nu,
    eps,
    centers: Optional[Iterable] = None,
    stage: int = 16,
    tolerance=Fraction(1, 100),
    max_centers: int = 512,
    bounding_box=None,
) -> list[Piece]:
    """Disjoint open pieces of diameter < eps covering mass >= 1 - tolerance.

    Each piece is a max-norm ball around the next center, minus the closures
    of earlier balls.  Radii are scanned downward on a 2^-stage grid until
    the bounding sphere certifiably carries mass below a per-piece budget.
    Pieces whose mass lower bound is zero are omitted.
    """
    eps, tolerance = as_rational(eps), as_rational(tolerance)
    total = getattr(nu, "exact_total", None)
    if total is None:
        raise NumericRefusal("boundary_null_partition needs an effectively finite valuation")
    dim = nu.dim
    if centers is None:
        if bounding_box is None:
            bounding_box = nu.bounding_box()
        lo = tuple(a - eps / 2 for a, _ in bounding_box)
        hi = tuple(b + eps / 2 for _, b in bounding_box)
        centers = dyadic_centers(lo, hi)
    step = pow2(-stage)
    r_top = eps / 2 - step
    pieces: list[Piece] = []
    previous: list = []  # closed balls already used
    covered = Fraction(0)
    for count, c in enumerate(centers):
        if count >= max_centers:
            break
        c = as_point(c)
        budget = tolerance * pow2(-(count + 2))
        r = r_top
        chosen = None
        for _ in range(64):
            if r <= 0:
                break
            annulus = total - nu.measure_lower(_sphere_complement(c, r), stage)
            if annulus < budget:
                chosen = r
                break
            r -= step
        if chosen is None:
            continue
        boxes = [Box(tuple((x - chosen, x + chosen) for x in c))]
        for closed in previous:
            boxes = [piece for b in boxes for piece in subtract_closed_box(b, closed)]
        previous.append(tuple((x - chosen, x + chosen) for x in c))
        if not boxes:
            continue
        region = OpenSet.from_boxes(boxes, dim)
        mass = nu.measure_lower(region, stage)
        if mass > 0:
            pieces.append(Piece(region, c, chosen, mass))
            covered += mass
        if covered >= total - tolerance:
            return pieces
    raise PartitionStalled(
        f"partition certified mass {covered} below {total - tolerance}",
        achieved=covered,
        pieces=len(pieces),
    )
