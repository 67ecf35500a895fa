"""Certified Wiener paths on [0,1] from a Levy-Ciesielski expansion.

A point of Cantor space is decoded in two parts: copy 0 chooses a stratum
(the number of leading ones, offset by 6) and copy 1 supplies one 64-bit
word per Gaussian coefficient.  Within stratum j every coefficient of level
n is drawn from N(0,1) truncated to |A| < beta(j, n), which makes the
remainder after level m uniformly bounded.  Path values are float
enclosures, outward rounded, on the grid j / 2^(m+1).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import ContractViolation, NumericRefusal
from .exactnum import DyadicInterval, as_rational, sqrt_lower, sqrt_upper
from .space import CantorPoint, SeededPoint
from .validated import (
    float_bounds,
    phi_bounds,
    phi_enclosure,
    quantile_bounds,
    scale_iv,
    add_iv,
    down,
    up,
)

MIN_STRATUM = 6
DEFAULT_TOL = Fraction(1, 2 ** 30)
STRATUM_COPY = 0
COEFF_COPY = 1
MAX_LEADING_ONES = 4096
# 2^-1/2 rounded up; every tail bound below is increasing in this ratio
R_UP = sqrt_upper(Fraction(1, 2), 64)


# ---------------------------------------------------------------------------
# exact basis functions

@dataclass(frozen=True)
class HaarIndex:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.k < 2 ** self.n:
            raise ContractViolation("Haar index out of range", n=self.n, k=self.k)

    @property
    def flat(self) -> int:
        """Position in the coefficient stream; 0 is the linear term."""
        return 2 ** self.n + self.k


@dataclass(frozen=True)
class ScaledRoot:
    """The exact number coeff * sqrt(2)^root with root in {0, 1}."""

    coeff: Fraction
    root: int = 0

    @classmethod
    def of(cls, coeff, half_exp: int = 0) -> "ScaledRoot":
        """coeff * 2^(half_exp/2), normalized."""
        c = as_rational(coeff) * Fraction(2) ** (half_exp // 2)
        r = half_exp % 2
        if c == 0:
            r = 0
        return cls(c, r)

    def square(self) -> Fraction:
        return self.coeff * self.coeff * (2 if self.root else 1)

    def sign(self) -> int:
        return (self.coeff > 0) - (self.coeff < 0)

    def enclosure(self, bits: int = 64) -> DyadicInterval:
        if not self.root:
            return DyadicInterval.point(self.coeff)
        lo = sqrt_lower(Fraction(2), bits) * self.coeff
        hi = sqrt_upper(Fraction(2), bits) * self.coeff
        return DyadicInterval(min(lo, hi), max(lo, hi))

    def __float__(self):
        return float(self.coeff) * (math.sqrt(2.0) if self.root else 1.0)

    def __eq__(self, other):
        if isinstance(other, ScaledRoot):
            return self.coeff == other.coeff and self.root == other.root
        if self.root:
            return False
        return self.coeff == as_rational(other)

    def __hash__(self):
        return hash((self.coeff, self.root))

    def __lt__(self, other):
        other = other if isinstance(other, ScaledRoot) else ScaledRoot(as_rational(other))
        a, b = self.sign(), other.sign()
        if a != b:
            return a < b
        x, y = self.square(), other.square()
        return x > y if a < 0 else x < y


def _check_t(t) -> Fraction:
    t = as_rational(t)
    if not 0 <= t <= 1:
        raise NumericRefusal("time outside [0,1]", t=t)
    return t


def haar(idx: HaarIndex, t) -> ScaledRoot:
    """h_{n,k}(t): +2^(n/2) on the left half, -2^(n/2) on the right half."""
    t = _check_t(t)
    a = Fraction(idx.k, 2 ** idx.n)
    w = Fraction(1, 2 ** idx.n)
    mid, b = a + w / 2, a + w
    last = idx.k == 2 ** idx.n - 1
    if a <= t < mid:
        return ScaledRoot.of(1, idx.n)
    if mid <= t < b or (last and t == 1):
        return ScaledRoot.of(-1, idx.n)
    return ScaledRoot(Fraction(0))


def schauder(idx: HaarIndex, t) -> ScaledRoot:
    """s_{n,k}(t), the integral of h_{n,k} from 0 to t (a tent)."""
    t = _check_t(t)
    a = Fraction(idx.k, 2 ** idx.n)
    w = Fraction(1, 2 ** idx.n)
    mid, b = a + w / 2, a + w
    if a <= t <= mid:
        return ScaledRoot.of(t - a, idx.n)
    if mid < t <= b:
        return ScaledRoot.of(b - t, idx.n)
    return ScaledRoot(Fraction(0))


def schauder_peak(n: int) -> ScaledRoot:
    """Maximum of s_{n,k}, attained at the midpoint: 2^(-n/2-1)."""
    return ScaledRoot.of(Fraction(1, 2), -n)


def _peak_floats(n: int) -> tuple[float, float]:
    if n % 2 == 0:
        v = float(Fraction(1, 2 ** (n // 2 + 1)))
        return v, v
    q = Fraction(1, 2 ** (n + 2))
    return float_bounds(sqrt_lower(q, 80))[0], float_bounds(sqrt_upper(q, 80))[1]


# ---------------------------------------------------------------------------
# tail bounds and strata

def _sum_n_rn(start: int, r: Fraction) -> Fraction:
    """sum_{n >= start} n r^n in closed form."""
    return r ** start * (start - (start - 1) * r) / (1 - r) ** 2


def _sum_rn(a: int, b: int, r: Fraction) -> Fraction:
    """sum_{n=a}^{b} r^n."""
    if b < a:
        return Fraction(0)
    return (r ** a - r ** (b + 1)) / (1 - r)


def tail_radius(m: int) -> Fraction:
    """Exact rational upper bound of sum_{n>m} n 2^(-n/2)."""
    if m < 1:
        raise ContractViolation("tail_radius needs m >= 1", m=m)
    return _sum_n_rn(m + 1, R_UP)


def beta(j: int, n: int) -> int:
    """Truncation level of a level-n coefficient inside stratum j."""
    return n if n > j else j


def stratum_tail(j: int, m: int) -> Fraction:
    """Upper bound of the sup-norm of levels > m inside stratum j.

    Level n contributes at most beta(j, n) times the tent peak 2^(-n/2-1)
    since the tents of one level have disjoint supports.
    """
    top = max(m, j)
    head = j * _sum_rn(m + 1, j, R_UP)
    return (head + _sum_n_rn(top + 1, R_UP)) / 2


def stratum_probability(m: int) -> Fraction:
    """Lower bound 1 - 2^-m for the event |A_{n,k}| < n for all n >= m."""
    if m < MIN_STRATUM:
        raise NumericRefusal("the tail estimate needs m >= 6", m=m)
    return 1 - Fraction(1, 2 ** m)


def stratum_mass(j: int) -> Fraction:
    """Probability that the decoder picks stratum j."""
    if j < MIN_STRATUM:
        return Fraction(0)
    return Fraction(1, 2 ** (j - MIN_STRATUM + 1))


# ---------------------------------------------------------------------------
# bit decoding

def _copy_words(omega: CantorPoint, copy: int, count: int) -> np.ndarray:
    if isinstance(omega, SeededPoint):
        return omega.words(copy, np.arange(count, dtype=np.uint64))
    c = omega.copy(copy)
    out = np.zeros(count, dtype=np.uint64)
    for i in range(count):
        w = 0
        for b in range(64):
            w = (w << 1) | c.bit(64 * i + b)
        out[i] = w
    return out


def decode_stratum(omega: CantorPoint) -> int:
    """MIN_STRATUM plus the number of leading ones of copy 0."""
    ones = 0
    if isinstance(omega, SeededPoint):
        i = 0
        while ones < MAX_LEADING_ONES:
            w = int(omega.words(STRATUM_COPY, [i])[0])
            if w != 0xFFFFFFFFFFFFFFFF:
                ones += 64 - w.bit_length()
                break
            ones += 64
            i += 1
    else:
        c = omega.copy(STRATUM_COPY)
        while ones < MAX_LEADING_ONES and c.bit(ones) == 1:
            ones += 1
    if ones >= MAX_LEADING_ONES:
        raise NumericRefusal("stratum bits exhausted", ones=ones)
    return MIN_STRATUM + ones


def _levels(m: int) -> np.ndarray:
    """Level of each coefficient slot 0 .. 2^(m+1)-1 (slot 0, the linear term, is level 0)."""
    lev = np.zeros(2 ** (m + 1), dtype=np.int64)
    for n in range(m + 1):
        lev[2 ** n: 2 ** (n + 1)] = n
    return lev


def decode_coefficients(words: np.ndarray, betas: np.ndarray, tol: float):
    """Enclosures of truncated-normal coefficients from 64-bit words.

    words and betas broadcast together; beta = inf means no truncation.
    The top 53 bits give u in [w, w+1] / 2^53, which is pushed through the
    quantile of N(0,1) restricted to (-beta, beta) in lower-tail form.
    """
    w = (words >> np.uint64(11)).astype(np.float64)
    scale = 2.0 ** -53
    u_lo, u_hi = w * scale, (w + 1.0) * scale
    upper = w >= 2.0 ** 52
    # reflect the upper half: x = -Q(1 - u)
    v_lo = np.where(upper, 1.0 - u_hi, u_lo)
    v_hi = np.where(upper, 1.0 - u_lo, u_hi)
    betas = np.broadcast_to(betas, w.shape)
    finite = np.isfinite(betas)
    c_lo, c_hi = phi_bounds(np.where(finite, -betas, -np.inf))
    m_lo = np.where(finite, down(1.0 - 2.0 * c_hi), 1.0)
    m_hi = np.where(finite, up(1.0 - 2.0 * c_lo), 1.0)
    p_lo = np.maximum(down(c_lo + down(v_lo * m_lo)), 0.0)
    p_hi = np.minimum(up(c_hi + up(v_hi * m_hi)), 1.0)
    p_lo = np.where(finite, p_lo, v_lo)
    p_hi = np.where(finite, p_hi, v_hi)
    q_lo, q_hi = quantile_bounds(p_lo.ravel(), p_hi.ravel(), tol)
    q_lo = np.maximum(q_lo.reshape(w.shape), -betas)
    q_hi = np.minimum(q_hi.reshape(w.shape), betas)
    if not np.isfinite(q_lo).all():
        raise NumericRefusal("bit exhaustion: a coefficient word decodes to an infinite quantile")
    x_lo = np.where(upper, -q_hi, q_lo)
    x_hi = np.where(upper, -q_lo, q_hi)
    return x_lo, x_hi


# ---------------------------------------------------------------------------
# samples and paths

@dataclass
class WienerSample:
    """Coefficient enclosures up to level m for one point of Cantor space.

    lo/hi hold slot 0 (the linear term) and slot 2^n + k for (n, k).
    """

    level: int
    mode: str
    stratum: int
    tol: Fraction
    lo: np.ndarray
    hi: np.ndarray
    tail_radius: Fraction
    flagged: bool = False

    def coeff(self, idx: Optional[HaarIndex]) -> DyadicInterval:
        """Enclosure of A_{n,k}; None selects the linear coefficient."""
        i = 0 if idx is None else idx.flat
        if idx is not None and idx.n > self.level:
            raise ContractViolation("coefficient above the sampled level", n=idx.n, level=self.level)
        return DyadicInterval(Fraction(float(self.lo[i])), Fraction(float(self.hi[i])))

    def beta(self, n: int) -> float:
        return math.inf if self.mode == "statistical" else float(beta(self.stratum, n))


@dataclass
class WienerPath:
    """Partial-sum enclosure on the grid j / 2^(level+1).

    `lo`/`hi` enclose the level-m partial sum; the Wiener path itself is
    within `tail` of it everywhere.  `uniform_slack` adds the largest
    breakpoint width.
    """

    level: int
    lo: np.ndarray
    hi: np.ndarray
    tail: Fraction
    uniform_slack: Fraction
    stratum: int
    mode: str = "stratified"
    flagged: bool = False
    seed: Optional[int] = None
    tol: Fraction = DEFAULT_TOL
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, level: int, lo, hi=None, tail=0) -> "WienerPath":
        """Build a path from given breakpoint enclosures (used for fixtures)."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = lo.copy() if hi is None else np.asarray(hi, dtype=np.float64)
        if lo.shape != (2 ** (level + 1) + 1,):
            raise ContractViolation("value count does not match the grid", level=level)
        tail = as_rational(tail)
        slack = tail + Fraction(float((hi - lo).max()))
        return cls(level, lo, hi, tail, slack, stratum=0, mode="fixture")

    @property
    def grid_size(self) -> int:
        return 2 ** (self.level + 1)

    @property
    def breakpoints(self) -> list:
        g = self.grid_size
        return [Fraction(j, g) for j in range(g + 1)]

    @property
    def values(self) -> list:
        return [DyadicInterval(Fraction(float(a)), Fraction(float(b))) for a, b in zip(self.lo, self.hi)]

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def index_of(self, t) -> int:
        t = _check_t(t)
        j = t * self.grid_size
        if j.denominator != 1:
            raise ContractViolation("time is not a breakpoint", t=t, level=self.level)
        return int(j)

    def value_at(self, t) -> DyadicInterval:
        """Enclosure of the partial sum at any t in [0,1] (it is linear between breakpoints)."""
        t = _check_t(t)
        g = self.grid_size
        j = min(int(t * g), g - 1)
        s = t * g - j
        a, b = Fraction(float(self.lo[j])), Fraction(float(self.hi[j]))
        c, d = Fraction(float(self.lo[j + 1])), Fraction(float(self.hi[j + 1]))
        return DyadicInterval((1 - s) * a + s * c, (1 - s) * b + s * d)

    def enclosure(self, t) -> DyadicInterval:
        """Enclosure of the Wiener path itself at t."""
        v = self.value_at(t)
        return DyadicInterval(v.lower - self.tail, v.upper + self.tail)

    def endpoint(self) -> DyadicInterval:
        return self.value_at(1)

    def max_bounds(self) -> tuple[float, float]:
        """Bounds on the maximum of the partial sum over [0,1]."""
        return float(self.lo.max()), float(self.hi.max())

    def coarsen(self, level: int) -> "WienerPath":
        """The same partial sum sampled on a coarser grid (values only)."""
        if level > self.level:
            raise ContractViolation("cannot refine a path", level=level)
        step = 2 ** (self.level - level)
        return WienerPath(level, self.lo[::step].copy(), self.hi[::step].copy(), self.tail,
                          self.uniform_slack, self.stratum, self.mode, self.flagged,
                          self.seed, self.tol, dict(self.meta))

    def rows(self):
        slack = str(self.uniform_slack)
        g = self.grid_size
        for j in range(g + 1):
            yield (str(Fraction(j, g)), repr(float(self.lo[j])), repr(float(self.hi[j])), slack)

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "level": self.level,
            "mode": self.mode,
            "stratum": self.stratum,
            "tol": str(self.tol),
            "tail": str(self.tail),
            "flagged": self.flagged,
            "layout": {"stratum_copy": STRATUM_COPY, "coefficient_copy": COEFF_COPY,
                       "slot": "0 linear, 2^n+k for (n,k)", "word_bits": 53},
            "version": __version__,
            **self.meta,
        }

    def write_csv(self, filename: str, sidecar: bool = True) -> None:
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lower", "upper", "uniform_slack"])
            w.writerows(self.rows())
        if sidecar:
            with open(filename + ".json", "w") as fh:
                json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
                fh.write("\n")


def _check_mode(mode: str) -> None:
    if mode not in ("stratified", "statistical"):
        raise ContractViolation("unknown sampling mode", mode=mode)


def _beta_table(mode: str, stratum: int, m: int) -> np.ndarray:
    lev = _levels(m)
    if mode == "statistical":
        return np.full(lev.shape, np.inf)
    return np.where(lev > stratum, lev, stratum).astype(np.float64)


def sample_coefficients(omega: CantorPoint, m: int, mode: str = "stratified",
                        tol=DEFAULT_TOL) -> WienerSample:
    return _sample_batch([omega], m, mode, tol)[0]


def _sample_batch(omegas: Sequence[CantorPoint], m: int, mode: str, tol) -> list:
    _check_mode(mode)
    if m < MIN_STRATUM:
        raise ContractViolation("level cap must be at least 6", m=m)
    tol = as_rational(tol)
    if tol <= 0:
        raise ContractViolation("tolerance must be positive")
    size = 2 ** (m + 1)
    words = np.stack([_copy_words(om, COEFF_COPY, size) for om in omegas])
    if mode == "statistical":
        strata = [m] * len(omegas)
    else:
        strata = [decode_stratum(om) for om in omegas]
    betas = np.stack([_beta_table(mode, j, m) for j in strata])
    lo, hi = decode_coefficients(words, betas, float(tol))
    lev = _levels(m)
    out = []
    for i, j in enumerate(strata):
        if mode == "statistical":
            big = np.maximum(np.abs(lo[i]), np.abs(hi[i]))
            flagged = bool(((lev >= MIN_STRATUM) & (big >= lev) & (np.arange(size) > 0)).any())
            tail = tail_radius(m)
        else:
            flagged = False
            tail = stratum_tail(j, m)
        out.append(WienerSample(m, mode, j, tol, lo[i], hi[i], tail, flagged))
    return out


def _partial_sums(lo: np.ndarray, hi: np.ndarray, m: int):
    """Midpoint recursion for rows of coefficient slots; returns grid enclosures."""
    rows = lo.shape[0]
    v_lo = np.zeros((rows, 2))
    v_hi = np.zeros((rows, 2))
    # linear term: W(1) = A_lin at level -1
    v_lo[:, 1], v_hi[:, 1] = lo[:, 0], hi[:, 0]
    for n in range(m + 1):
        c_lo, c_hi = _peak_floats(n)
        a_lo, a_hi = lo[:, 2 ** n: 2 ** (n + 1)], hi[:, 2 ** n: 2 ** (n + 1)]
        t_lo, t_hi = scale_iv(a_lo, a_hi, c_lo, c_hi)
        s_lo, s_hi = add_iv(v_lo[:, :-1], v_hi[:, :-1], v_lo[:, 1:], v_hi[:, 1:])
        mid_lo, mid_hi = add_iv(0.5 * s_lo, 0.5 * s_hi, t_lo, t_hi)
        n_lo = np.empty((rows, 2 ** (n + 1) + 1))
        n_hi = np.empty_like(n_lo)
        n_lo[:, 0::2], n_hi[:, 0::2] = v_lo, v_hi
        n_lo[:, 1::2], n_hi[:, 1::2] = mid_lo, mid_hi
        v_lo, v_hi = n_lo, n_hi
    return v_lo, v_hi


def paths_from_samples(samples: Sequence[WienerSample], seeds=None) -> list:
    if not samples:
        return []
    m = samples[0].level
    lo = np.stack([s.lo for s in samples])
    hi = np.stack([s.hi for s in samples])
    v_lo, v_hi = _partial_sums(lo, hi, m)
    out = []
    for i, s in enumerate(samples):
        width = Fraction(float((v_hi[i] - v_lo[i]).max()))
        seed = None if seeds is None else seeds[i]
        out.append(WienerPath(m, v_lo[i], v_hi[i], s.tail_radius, s.tail_radius + width,
                              s.stratum, s.mode, s.flagged, seed, s.tol))
    return out


def sample_wiener(omega: CantorPoint, m: int, mode: str = "stratified", tol=DEFAULT_TOL) -> WienerPath:
    """Certified path enclosure at level m for one point of Cantor space."""
    seed = omega.seed if isinstance(omega, SeededPoint) else None
    return paths_from_samples([sample_coefficients(omega, m, mode, tol)], [seed])[0]


def unit_seed(seed: int, unit: int) -> int:
    """Seed of the unit-interval path covering [unit, unit + 1] in a concatenation."""
    if unit == 0:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), int(unit)]).generate_state(1, np.uint64)[0] >> 1)


def sample_ensemble(seeds: Sequence[int], m: int, mode: str = "stratified", tol=DEFAULT_TOL,
                    batch: int = 256, threads: int = 1) -> list:
    """Paths for many seeds; output is independent of batch size and thread count."""
    seeds = [int(s) for s in seeds]
    chunks = [seeds[i:i + batch] for i in range(0, len(seeds), batch)]

    def run(chunk):
        pts = [SeededPoint(s) for s in chunk]
        return paths_from_samples(_sample_batch(pts, m, mode, tol), chunk)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return [p for part in parts for p in part]


def ensemble_values(paths: Sequence[WienerPath], t) -> np.ndarray:
    """Midpoints of the partial sums at breakpoint t, one per path."""
    return np.array([p.mid[p.index_of(t)] for p in paths])


# ---------------------------------------------------------------------------
# diagnostics

@dataclass
class ReflectionReport:
    x: Fraction
    n: int
    max_hits: int
    max_indeterminate: int
    end_hits: int
    end_indeterminate: int
    reference: DyadicInterval
    p_max: float
    p_end_twice: float
    band_max: float
    band_end: float
    verdict: bool

    @property
    def indeterminate_fraction(self) -> float:
        return max(self.max_indeterminate, self.end_indeterminate) / self.n

    def to_json(self) -> dict:
        return {
            "statistic": "reflection",
            "x": str(self.x),
            "estimate": {"max_at_least_x": self.p_max, "twice_end_above_x": self.p_end_twice},
            "reference": [float(self.reference.lower), float(self.reference.upper)],
            "band": {"max": self.band_max, "end": self.band_end},
            "indeterminate": {"max": self.max_indeterminate, "end": self.end_indeterminate},
            "verdict": "pass" if self.verdict else "fail",
        }


def reflection_check(ensemble: Sequence[WienerPath], x, use_tail: bool = False) -> ReflectionReport:
    """Compare Pr(max W >= x) with 2 Pr(W(1) > x) on an ensemble.

    A path counts as a hit only when its enclosure decides the event;
    straddling paths are tallied as indeterminate and split evenly.  By
    default the enclosure is that of the level-m partial sum; use_tail
    widens it by the certified remainder bound.
    """
    if not ensemble:
        raise ContractViolation("empty ensemble")
    levels = {p.level for p in ensemble}
    if len(levels) != 1:
        raise ContractViolation("ensemble mixes levels", levels=sorted(levels))
    x = as_rational(x)
    xf_lo, xf_hi = float_bounds(x)
    n = len(ensemble)
    mh = mi = eh = ei = 0
    for p in ensemble:
        r = float(p.tail) if use_tail else 0.0
        lo_max, hi_max = p.max_bounds()
        if lo_max - r >= xf_hi:
            mh += 1
        elif hi_max + r >= xf_lo:
            mi += 1
        e_lo, e_hi = p.lo[-1] - r, p.hi[-1] + r
        if e_lo > xf_hi:
            eh += 1
        elif e_hi > xf_lo:
            ei += 1
    ref = phi_enclosure(-x)
    ref = DyadicInterval(2 * ref.lower, 2 * ref.upper)
    p_ref = float(ref.mid)
    p_max = (mh + 0.5 * mi) / n
    p_end = 2 * (eh + 0.5 * ei) / n
    band_max = 3 * math.sqrt(max(p_ref * (1 - p_ref), 1.0 / n) / n) + mi / (2 * n)
    q = p_ref / 2
    band_end = 6 * math.sqrt(max(q * (1 - q), 1.0 / n) / n) + ei / n
    verdict = abs(p_max - p_ref) <= band_max and abs(p_end - p_ref) <= band_end
    return ReflectionReport(x, n, mh, mi, eh, ei, ref, p_max, p_end, band_max, band_end, verdict)


def holder_estimate(path: WienerPath, alpha) -> Fraction:
    """max over grid pairs of |W(t)-W(s)| / |t-s|^alpha using midpoints."""
    alpha = as_rational(alpha)
    if not 0 < alpha < 1:
        raise ContractViolation("alpha must lie in (0,1)", alpha=alpha)
    v = path.mid
    g = path.grid_size
    a = float(alpha)
    best = 0.0
    for lag in range(1, g + 1):
        d = np.abs(v[lag:] - v[:-lag]).max()
        best = max(best, d / (lag / g) ** a)
    return Fraction(best)
