"""Markov kernels on valuations: point measures, push-forwards, joint
(trajectory) distributions, skew products, and random-variable evolution.

Kernels act on closed boxes: `apply(sides)` must return a valuation that is
a valid lower description of F(x) for every x in the box.  Point inputs
give the exact kernel row; boxes give "cloud" atoms that only record where
the mass lies.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, TextIO

from .errors import ContractViolation, NumericRefusal
from .exactnum import DyadicInterval, as_rational, pow2, rational_str
from .space import Box, OpenSet, as_point, global_index, split_index
from .valuation import (
    Atom,
    FunctionValuation,
    LowerFunction,
    Valuation,
    WeightedBoxValuation,
    _sides,
    lower_integral,
    sides_to_intervals,
)
from . import randvar as rv

Sides = tuple


def dirac(x) -> WeightedBoxValuation:
    """Point measure: delta_x(U) = 1 exactly when x is inside U."""
    return WeightedBoxValuation.dirac(x)


def _image_atom(f: Callable, sides: Sides, weight: Fraction) -> Atom:
    ivs = sides_to_intervals(sides)
    out = f(ivs[0]) if len(ivs) == 1 else f(ivs)
    boxes = rv._as_boxes(out)
    kind = "uniform" if all(a == b for a, b in boxes) else "cloud"
    return Atom(boxes, weight, kind)


class Kernel:
    """x -> F(x), a probability valuation, evaluated on closed boxes."""

    def __init__(self, apply: Callable[[Sides], WeightedBoxValuation], dim_in: int = 1, dim_out: Optional[int] = None,
                 modulus: Optional[Callable[[int], int]] = None, label: str = ""):
        self._apply = apply
        self.dim_in = dim_in
        self.dim_out = dim_in if dim_out is None else dim_out
        self.modulus = modulus
        self.label = label

    def apply(self, x) -> WeightedBoxValuation:
        out = self._apply(_sides(x))
        if out.exact_total != 1:
            raise ContractViolation("kernel output is not a probability valuation", total=out.exact_total)
        return out

    __call__ = apply

    @classmethod
    def from_matrix(cls, P: Sequence[Sequence]) -> "Kernel":
        """Finite chain with state i at the point i of the real line."""
        rows = [[as_rational(p) for p in row] for row in P]
        s = len(rows)
        for i, row in enumerate(rows):
            if len(row) != s:
                raise ContractViolation("transition matrix must be square")
            if any(p < 0 for p in row) or sum(row) != 1:
                raise ContractViolation(f"row {i} is not a probability vector", row=row)
        cache = [WeightedBoxValuation.discrete({j: p for j, p in enumerate(row) if p}) for row in rows]

        def apply(sides):
            (lo, hi), = sides
            states = [i for i in range(s) if lo <= i <= hi]
            if len(states) != 1:
                raise NumericRefusal("state enclosure does not single out one state", box=[lo, hi])
            return cache[states[0]]

        k = cls(apply, 1, 1, modulus=lambda k: 1, label="matrix")
        k.matrix = rows
        return k

    @classmethod
    def deterministic(cls, f: Callable, dim_in: int = 1, dim_out: Optional[int] = None, label: str = "") -> "Kernel":
        """delta-lift of a map given by an interval extension."""
        return cls(lambda sides: WeightedBoxValuation([_image_atom(f, sides, 1)]), dim_in, dim_out, label=label or "map")

    @classmethod
    def identity(cls, dim: int = 1) -> "Kernel":
        return cls(lambda sides: WeightedBoxValuation([Atom(sides, 1, "uniform" if all(a == b for a, b in sides) else "cloud")]),
                   dim, dim, modulus=lambda k: k, label="identity")

    def then(self, other: "Kernel") -> "Kernel":
        """Kleisli composition x -> other_*(self(x))."""
        return Kernel(lambda sides: pushforward(other, self.apply(sides)), self.dim_in, other.dim_out, label="composite")

    def check_modulus(self, points: Sequence, k: int) -> bool:
        """Spot check: boxes of width 2^-modulus(k) map to outputs whose
        cloud atoms are no wider than 2^-k."""
        if self.modulus is None:
            return True
        w = pow2(-self.modulus(k))
        for x in points:
            sides = tuple((c - w / 2, c + w / 2) for c in as_point(x))
            try:
                out = self.apply(sides)
            except NumericRefusal:
                return False
            for a in out.atoms:
                if a.kind == "cloud" and max(hi - lo for lo, hi in a.sides) > pow2(-k):
                    return False
        return True


def _split_uniform(atom: Atom, split: int) -> list[Atom]:
    if split <= 0 or atom.kind != "uniform" or atom.is_point:
        return [atom]
    per = 1 << split
    axes = []
    free = 0
    for lo, hi in atom.sides:
        if lo == hi:
            axes.append([(lo, hi)])
        else:
            free += 1
            w = (hi - lo) / per
            axes.append([(lo + w * j, lo + w * (j + 1)) for j in range(per)])
    share = atom.weight / per**free
    return [Atom(cell, share, "uniform") for cell in itertools.product(*axes)]


def _cloud_width(nu: WeightedBoxValuation) -> Fraction:
    return max((hi - lo for a in nu.atoms if a.kind == "cloud" for lo, hi in a.sides), default=Fraction(0))


def pushforward(F: Kernel, mu: Valuation, split: int = 0) -> Valuation:
    """F_* mu.  Atom valuations map atom by atom (exact mass); other valuations
    go through the integral form mu(x -> F(x)(U))."""
    if isinstance(mu, WeightedBoxValuation):
        atoms = []
        for atom in mu.atoms:
            if atom.weight == 0:
                continue
            for piece in _split_uniform(atom, split):
                out = F.apply(piece.sides)
                # the kernel's output on a box already holds for every x in it
                atoms.extend(Atom(b.sides, piece.weight * b.weight, b.kind) for b in out.atoms)
        return WeightedBoxValuation(atoms, F.dim_out).merged()

    def measure(U, n):
        psi = LowerFunction(lambda sides, m: F.apply(sides).measure_lower(U, m))
        return lower_integral(mu, psi, n).approx(n)

    return FunctionValuation(F.dim_out, measure, exact_total=mu.exact_total)


@dataclass
class TrajectoryDistribution:
    """Joint law of (X_0, ..., X_n) as an atom valuation on R^{d(n+1)}."""

    gamma: WeightedBoxValuation
    horizon: int
    dim: int = 1

    def marginal(self, k: int) -> WeightedBoxValuation:
        if not 0 <= k <= self.horizon:
            raise IndexError("marginal index outside the horizon")
        d = self.dim
        atoms = [Atom(a.sides[k * d : (k + 1) * d], a.weight, a.kind) for a in self.gamma.atoms]
        return WeightedBoxValuation(atoms, d).merged()

    def paths(self) -> dict:
        """{path point: weight} for purely atomic trajectories."""
        return self.gamma.point_masses()


def initial_trajectory(mu0: WeightedBoxValuation) -> TrajectoryDistribution:
    return TrajectoryDistribution(mu0.merged(), 0, mu0.dim)


def joint_pushforward(F: Kernel, gamma: TrajectoryDistribution) -> TrajectoryDistribution:
    """(id x| F)_* gamma: extend each path by one step of F from its endpoint."""
    d = gamma.dim
    atoms = []
    for a in gamma.gamma.atoms:
        if a.weight == 0:
            continue
        last = a.sides[-d:]
        out = F.apply(last)
        for b in out.atoms:
            kind = "cloud" if "cloud" in (a.kind, b.kind) else "uniform"
            atoms.append(Atom(a.sides + b.sides, a.weight * b.weight, kind))
    return TrajectoryDistribution(WeightedBoxValuation(atoms, d * (gamma.horizon + 2)).merged(), gamma.horizon + 1, d)


@dataclass
class Propagation:
    marginals: list
    trajectory: TrajectoryDistribution
    widths: list


def propagate(F: Kernel, mu0: WeightedBoxValuation, n: int, width_cap=1, split: int = 0) -> Propagation:
    """mu_k = F_* mu_{k-1} for k <= n together with the joint law gamma_n."""
    if n < 0:
        raise ValueError("horizon must be nonnegative")
    cap = as_rational(width_cap)
    mus = [mu0.merged()]
    widths = [_cloud_width(mus[0])]
    gamma = initial_trajectory(mu0)
    for k in range(n):
        mus.append(pushforward(F, mus[-1], split=split))
        widths.append(_cloud_width(mus[-1]))
        if widths[-1] > cap:
            raise NumericRefusal("enclosure width exceeded the cap", step=k + 1, widths=widths, cap=cap)
        gamma = joint_pushforward(F, gamma)
    return Propagation(mus, gamma, widths)


def marginal_consistent(p: Propagation) -> bool:
    """Exact check mu_k == k-th marginal of gamma_n for atom fixtures."""
    return all(p.trajectory.marginal(k) == mu for k, mu in enumerate(p.marginals))


def stationary_check(F: Kernel, mu: WeightedBoxValuation) -> bool:
    """Fixed-point detection on atoms: F_* mu == mu exactly."""
    return pushforward(F, mu) == mu.merged()


# ---------------------------------------------------------------------------
# Skew products


def _sections(boxes: Sequence[Box], split_at: int, x_sides: Sides):
    """Boxes of U whose x-part contains the closed x-box, cut down to y."""
    out = []
    for b in boxes:
        xs, ys = b.sides[:split_at], b.sides[split_at:]
        if all(lo < xl and xh < hi for (lo, hi), (xl, xh) in zip(xs, x_sides)):
            out.append(Box(ys))
    return out


def _nested_measure(outer: WeightedBoxValuation, inner: WeightedBoxValuation, boxes: Sequence[Box], outer_first: bool) -> Fraction:
    """integral over x ~ outer of inner({y : (x, y) in U}) using the elementary
    pieces of each outer atom cut by the faces of U."""
    d = outer.dim
    if not outer_first:
        boxes = [Box(b.sides[inner.dim :] + b.sides[: inner.dim]) for b in boxes]
    total = Fraction(0)
    for atom in outer.atoms:
        if atom.weight == 0:
            continue
        if atom.kind == "cloud" and not atom.is_point:
            sec = _sections(boxes, d, atom.sides)
            if sec:
                total += atom.weight * inner.measure_lower(OpenSet.from_boxes(sec, inner.dim), 0)
            continue
        axes = []
        for i, (lo, hi) in enumerate(atom.sides):
            if lo == hi:
                axes.append([((lo, lo), Fraction(1))])
                continue
            cuts = sorted({c for b in boxes for c in b.sides[i] if lo < c < hi})
            pts = [lo] + cuts + [hi]
            # open gaps carry all the uniform mass; boundaries are null
            axes.append([((pts[j], pts[j + 1]), (pts[j + 1] - pts[j]) / (hi - lo)) for j in range(len(pts) - 1)])
        for combo in itertools.product(*axes):
            share = atom.weight
            probe = []
            for (a, b), s in combo:
                share *= s
                probe.append(((a + b) / 2,) * 2)
            sec = _sections(boxes, d, tuple(probe))
            if sec:
                total += share * inner.measure_lower(OpenSet.from_boxes(sec, inner.dim), 0)
    return total


@dataclass
class SkewProducts:
    left: Valuation  # F x| G: outer integral over F
    right: Valuation  # F |x G: outer integral over G

    def agree_on(self, U: OpenSet, n: int = 0) -> bool:
        return self.left.measure_lower(U, n) == self.right.measure_lower(U, n)


def skew_products(F: WeightedBoxValuation, G: WeightedBoxValuation) -> SkewProducts:
    """Both nested integral forms of the product of two atom valuations."""
    dim = F.dim + G.dim
    total = F.exact_total * G.exact_total
    left = FunctionValuation(dim, lambda U, n: _nested_measure(F, G, U.enumerate(n), True), exact_total=total)
    right = FunctionValuation(dim, lambda U, n: _nested_measure(G, F, U.enumerate(n), False), exact_total=total)
    return SkewProducts(left, right)


# ---------------------------------------------------------------------------
# Random kernels and sampled trajectories


class RandomKernel:
    """X_{k+1} = update(X_k, xi_k) with noise xi_k drawn from a fresh copy of omega.

    `noise(copy)` builds the noise as a continuous RV reading only bits of
    that copy; `block_of_step(k)` names the copy used at step k (default
    k + 1, copy 0 being reserved for the initial state).
    """

    def __init__(self, update: Callable, noise: Callable[[int], rv.ContinuousRV], dim: int = 1,
                 block_of_step: Callable[[int], int] = lambda k: k + 1, lipschitz=None, label: str = ""):
        self.update, self.noise, self.dim = update, noise, dim
        self.block_of_step = block_of_step
        self.lipschitz = lipschitz
        self.label = label

    def to_kernel(self, precision: int = 12) -> Kernel:
        """The induced kernel: the law of update(x, xi) from the noise table."""
        xi = self.noise(1)
        t = xi.table(precision)
        enc = t.encls[0]
        rows = [(enc.intervals(i), t.mass(i)) for i in range(t.size)]

        def apply(sides):
            xs = sides_to_intervals(sides)
            atoms = []
            for ivs, w in rows:
                x = xs[0] if len(xs) == 1 else xs
                e = ivs[0] if len(ivs) == 1 else ivs
                out = rv._as_boxes(self.update(x, e))
                kind = "uniform" if all(a == b for a, b in out) else "cloud"
                atoms.append(Atom(out, w, kind))
            return WeightedBoxValuation(atoms, self.dim).merged()

        return Kernel(apply, self.dim, self.dim, label=self.label or "random kernel")


def _copies_used(X: rv.ContinuousRV, k: int) -> set[int]:
    return {split_index(g)[0] for g in X.support(k)}


def sample_trajectory(F: RandomKernel, X0: rv.MeasurableRV, n: int, check_precisions: Sequence[int] = (0, 4, 8)) -> rv.MeasurableRV:
    """(X_0, ..., X_n) as one random variable on R^{d(n+1)}."""
    blocks = [F.block_of_step(k) for k in range(n)]
    if len(set(blocks)) != len(blocks) or 0 in blocks:
        raise ContractViolation("noise blocks must be distinct and avoid copy 0", blocks=blocks)
    for p in check_precisions:
        used = _copies_used(X0.approx(0), p)
        if used - {0}:
            raise ContractViolation("initial state reads bits outside copy 0", copies=sorted(used))
    noises = []
    for k, c in enumerate(blocks):
        xi = F.noise(c)
        for p in check_precisions:
            if _copies_used(xi, p) - {c}:
                raise ContractViolation("noise reads bits outside its block", step=k, block=c)
        noises.append(rv.MeasurableRV.from_continuous(xi))
    d = F.dim
    xi_dim = noises[0].dim if noises else 0
    Z = X0
    for N in noises:
        Z = rv.rv_product(Z, N)

    def path(ivs):
        ivs = ivs if isinstance(ivs, tuple) else (ivs,)
        x = ivs[:d]
        out = list(x)
        pos = d
        for _ in range(n):
            e = ivs[pos : pos + xi_dim]
            xv = x[0] if d == 1 else x
            ev = e[0] if xi_dim == 1 else e
            nxt = F.update(xv, ev)
            x = nxt if isinstance(nxt, tuple) else (nxt,)
            x = tuple(v if isinstance(v, DyadicInterval) else DyadicInterval.point(v) for v in x)
            out.extend(x)
            pos += xi_dim
        return tuple(out)

    return rv.rv_image(path, Z, lipschitz=F.lipschitz)


def coin_step_kernel(scale=1) -> RandomKernel:
    """X_{k+1} = X_k + scale * (2b - 1) for a fresh fair bit b."""
    s = as_rational(scale)
    return RandomKernel(lambda x, b: x + (b * 2 - 1) * s, lambda c: rv.BitRV(global_index(c, 0)),
                        lipschitz=1 + 2 * s, label="coin step")


# ---------------------------------------------------------------------------
# Output


def write_csv(marginals: Sequence[WeightedBoxValuation], fp: TextIO) -> None:
    """One row per atom: step, lo/hi per coordinate, weight."""
    d = marginals[0].dim if marginals else 1
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["step"] + [f"{s}{i}" for i in range(d) for s in ("lo", "hi")] + ["weight"])
    for k, mu in enumerate(marginals):
        for a in mu.merged().atoms:
            w.writerow([k] + [rational_str(v) for lo, hi in a.sides for v in (lo, hi)] + [rational_str(a.weight)])
