"""Step processes, the Ito integral and martingale inequalities.

The Ito integral of a step process against a certified Wiener path is
evaluated at the path's breakpoints.  There the level-m partial sum equals
the Wiener path exactly (all finer tents vanish on the grid), so the
breakpoint enclosures are enclosures of the true stochastic integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import randvar as rv
from .errors import ContractViolation, NumericRefusal
from .exactnum import DyadicInterval, as_rational, sqrt_lower, sqrt_upper
from .space import CantorPoint, SeededPoint, split_index
from .validated import add_iv, mul_iv, sub_iv, down, up
from .wiener import COEFF_COPY, STRATUM_COPY, WienerPath, sample_ensemble

WIENER_CERT_C = Fraction(3, 2)
WIENER_COPIES = frozenset({STRATUM_COPY, COEFF_COPY})
DEFAULT_PRECISION = 24


@dataclass(frozen=True)
class Tag:
    """Declared dependence of a step value.

    copies: bit blocks (copies of Cantor space) read besides the Wiener
    process; wiener_until: the value reads W only on [0, wiener_until].
    """

    copies: frozenset = frozenset()
    wiener_until: Optional[Fraction] = None


# ---------------------------------------------------------------------------
# step values

class StepValue:
    """Value X_i of a step process on one interval."""

    tag: Tag = Tag()

    def bounds(self, omega: CantorPoint, path: WienerPath) -> tuple[float, float]:
        raise NotImplementedError

    def bounds_many(self, omegas, paths) -> tuple[np.ndarray, np.ndarray]:
        lo = np.empty(len(paths))
        hi = np.empty(len(paths))
        for i, (om, p) in enumerate(zip(omegas, paths)):
            lo[i], hi[i] = self.bounds(om, p)
        return lo, hi

    def second_moment(self) -> Optional[DyadicInterval]:
        """Enclosure of E X_i^2 when it is known exactly."""
        return None


@dataclass
class ConstStep(StepValue):
    value: Fraction

    def __post_init__(self):
        self.value = as_rational(self.value)
        self.tag = Tag()
        self._f = _float_pair(self.value)

    def bounds(self, omega, path):
        return self._f

    def bounds_many(self, omegas, paths):
        n = len(paths)
        return np.full(n, self._f[0]), np.full(n, self._f[1])

    def second_moment(self):
        return DyadicInterval.point(self.value ** 2)


def _float_pair(q: Fraction) -> tuple[float, float]:
    from .validated import float_bounds

    return float_bounds(q)


class RVStep(StepValue):
    """A real random variable read from bit blocks independent of W."""

    def __init__(self, X, precision: int = DEFAULT_PRECISION):
        if isinstance(X, rv.SimpleRV):
            self.simple = X
            X = X.to_continuous()
        else:
            self.simple = None
        if isinstance(X, rv.MeasurableRV):
            X = X.continuous
        if X.dim != 1:
            raise ContractViolation("step values must be real")
        self.X, self.k = X, precision
        self.tag = Tag(frozenset(split_index(g)[0] for g in X.support(precision)))

    def bounds(self, omega, path):
        iv = self.X.evaluate(omega, self.k)[0]
        return _float_pair(iv.lower)[0], _float_pair(iv.upper)[1]

    def second_moment(self):
        if self.simple is not None:
            return DyadicInterval.point(self.simple.moment(2))
        t = self.X.table(self.k)
        lo = hi = Fraction(0)
        for i in range(t.size):
            iv = t.encls[0].intervals(i)[0]
            a, b = iv.lower, iv.upper
            sq_hi = max(a * a, b * b)
            sq_lo = Fraction(0) if a <= 0 <= b else min(a * a, b * b)
            w = t.mass(i)
            lo += w * sq_lo
            hi += w * sq_hi
        return DyadicInterval(lo, hi)


class PathStep(StepValue):
    """A value computed from the Wiener path on [0, until].

    fn receives the breakpoint times up to `until` and the matching lower
    and upper arrays of one path and returns float bounds.
    """

    def __init__(self, fn: Callable, until, moment2=None, label: str = ""):
        self.fn, self.until = fn, as_rational(until)
        self.tag = Tag(wiener_until=self.until)
        self._m2 = None if moment2 is None else as_rational(moment2)
        self.label = label

    @classmethod
    def wiener_value(cls, s) -> "WienerValue":
        return WienerValue(s)

    def bounds(self, omega, path):
        j = path.index_of(self.until)
        return self.fn(path.breakpoints[: j + 1], path.lo[: j + 1], path.hi[: j + 1])

    def second_moment(self):
        return None if self._m2 is None else DyadicInterval.point(self._m2)


class WienerValue(PathStep):
    """X = W(s), with E W(s)^2 = s."""

    def __init__(self, s):
        s = as_rational(s)
        super().__init__(lambda t, lo, hi: (lo[-1], hi[-1]), s, moment2=s, label=f"W({s})")

    def bounds_many(self, omegas, paths):
        j = paths[0].index_of(self.until)
        return np.array([p.lo[j] for p in paths]), np.array([p.hi[j] for p in paths])


def as_step_value(v) -> StepValue:
    if isinstance(v, StepValue):
        return v
    if isinstance(v, (rv.SimpleRV, rv.MeasurableRV, rv.ContinuousRV)):
        return RVStep(v)
    return ConstStep(as_rational(v))


# ---------------------------------------------------------------------------
# step processes

@dataclass
class StepProcess:
    """X(t) = X_i on [t_i, t_{i+1}) with t_0 = 0 < ... < t_n = T."""

    times: list
    values: list

    def __post_init__(self):
        self.times = [as_rational(t) for t in self.times]
        self.values = [as_step_value(v) for v in self.values]
        if len(self.times) < 2 or self.times[0] != 0:
            raise ContractViolation("step times must start at 0 and have at least one interval")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ContractViolation("step times must be strictly increasing")
        if len(self.values) != len(self.times) - 1:
            raise ContractViolation("one value per step interval is required")
        self.check_tags()

    @property
    def horizon(self) -> Fraction:
        return self.times[-1]

    def check_tags(self) -> None:
        for i, v in enumerate(self.values):
            tag = v.tag
            if tag.copies & WIENER_COPIES:
                raise ContractViolation("step value reads the Wiener bit blocks directly", step=i,
                                        copies=sorted(tag.copies & WIENER_COPIES))
            if tag.wiener_until is not None and tag.wiener_until > self.times[i]:
                raise ContractViolation("step value anticipates the Wiener path", step=i,
                                        reads_until=tag.wiener_until, starts=self.times[i])

    def l2_norm_squared(self) -> Optional[DyadicInterval]:
        """E int_0^T X(t)^2 dt when every step has a known second moment."""
        lo = hi = Fraction(0)
        for (a, b), v in zip(zip(self.times, self.times[1:]), self.values):
            m = v.second_moment()
            if m is None:
                return None
            lo += m.lower * (b - a)
            hi += m.upper * (b - a)
        return DyadicInterval(lo, hi)

    def sup_norm_squared(self) -> Optional[DyadicInterval]:
        """sup_t E X(t)^2."""
        ms = [v.second_moment() for v in self.values]
        if any(m is None for m in ms):
            return None
        return DyadicInterval(max(m.lower for m in ms), max(m.upper for m in ms))

    def __sub__(self, other: "StepProcess") -> "StepProcess":
        """Difference on the common refinement (constant and path values only)."""
        times = sorted(set(self.times) | set(other.times))
        vals = []
        for a in times[:-1]:
            u, v = self.value_at(a), other.value_at(a)
            vals.append(_DiffStep(u, v))
        return StepProcess(times, vals)

    def value_at(self, t) -> StepValue:
        t = as_rational(t)
        for i in range(len(self.values)):
            if self.times[i] <= t < self.times[i + 1]:
                return self.values[i]
        return self.values[-1]


class _DiffStep(StepValue):
    def __init__(self, u: StepValue, v: StepValue):
        self.u, self.v = u, v
        a, b = u.tag, v.tag
        until = [w for w in (a.wiener_until, b.wiener_until) if w is not None]
        self.tag = Tag(a.copies | b.copies, max(until) if until else None)

    def bounds(self, omega, path):
        a = self.u.bounds(omega, path)
        b = self.v.bounds(omega, path)
        return float(down(a[0] - b[1])), float(up(a[1] - b[0]))

    def bounds_many(self, omegas, paths):
        a = self.u.bounds_many(omegas, paths)
        b = self.v.bounds_many(omegas, paths)
        return sub_iv(*a, *b)


def constant_process(c, T=1) -> StepProcess:
    return StepProcess([0, T], [c])


def indicator_after(s, T=1) -> StepProcess:
    """I[t >= s] on [0, T]."""
    return StepProcess([0, s, T], [0, 1])


def uniform_grid(T, n: int) -> list:
    T = as_rational(T)
    return [T * i / n for i in range(n + 1)]


def dyadic_grid(T, level: int) -> list:
    return uniform_grid(T, 2 ** level)


# ---------------------------------------------------------------------------
# step approximation of deterministic paths

@dataclass
class StepApproximation:
    process: StepProcess
    l2_error: DyadicInterval
    error_squared: Fraction
    exact: bool


def _poly_eval(coeffs, t):
    return sum((c * t ** i for i, c in enumerate(coeffs)), Fraction(0))


def _poly_sq_int(coeffs, a, b) -> Fraction:
    """int_a^b (p(t) - p(a))^2 dt exactly."""
    c0 = _poly_eval(coeffs, a)
    q = [c - (c0 if i == 0 else 0) for i, c in enumerate(coeffs)]
    sq = [Fraction(0)] * (2 * len(q) - 1)
    for i, x in enumerate(q):
        for j, y in enumerate(q):
            sq[i + j] += x * y
    return sum((c * (b ** (k + 1) - a ** (k + 1)) / (k + 1) for k, c in enumerate(sq)), Fraction(0))


def step_approximate(xi, grid: Sequence, lipschitz=None) -> StepApproximation:
    """Left-endpoint step approximation eta(t) = xi(t_i) on [t_i, t_{i+1}).

    xi is either a list of polynomial coefficients (exact L2 error) or a
    callable t -> rational with a Lipschitz constant (error bound
    L * sqrt(sum dt^3 / 3)).
    """
    grid = [as_rational(t) for t in grid]
    if isinstance(xi, (list, tuple)):
        coeffs = [as_rational(c) for c in xi]
        vals = [_poly_eval(coeffs, t) for t in grid[:-1]]
        err2 = sum((_poly_sq_int(coeffs, a, b) for a, b in zip(grid, grid[1:])), Fraction(0))
        return StepApproximation(StepProcess(grid, vals), _sqrt_iv(err2), err2, True)
    if lipschitz is None:
        raise ContractViolation("a callable path needs a Lipschitz constant")
    L = as_rational(lipschitz)
    vals = [as_rational(xi(t)) for t in grid[:-1]]
    err2 = L * L * sum(((b - a) ** 3 / 3 for a, b in zip(grid, grid[1:])), Fraction(0))
    return StepApproximation(StepProcess(grid, vals), DyadicInterval(0, sqrt_upper(err2)), err2, False)


def _sqrt_iv(q: Fraction) -> DyadicInterval:
    return DyadicInterval(sqrt_lower(q), sqrt_upper(q))


def wiener_steps(grid: Sequence) -> StepProcess:
    """The step approximation X_i = W(t_i) of the Wiener path itself."""
    grid = [as_rational(t) for t in grid]
    return StepProcess(grid, [PathStep.wiener_value(t) for t in grid[:-1]])


# ---------------------------------------------------------------------------
# the integral

@dataclass
class PathEnclosure:
    """Enclosures of a process at the breakpoints j / 2^(level+1) up to `horizon`."""

    level: int
    lo: np.ndarray
    hi: np.ndarray
    horizon: Fraction = Fraction(1)

    @property
    def times(self) -> list:
        g = 2 ** (self.level + 1)
        return [Fraction(j, g) for j in range(len(self.lo))]

    def value_at(self, t) -> DyadicInterval:
        t = as_rational(t)
        j = t * 2 ** (self.level + 1)
        if j.denominator != 1 or not 0 <= j < len(self.lo):
            raise ContractViolation("time is not a breakpoint of this enclosure", t=t)
        j = int(j)
        return DyadicInterval(Fraction(float(self.lo[j])), Fraction(float(self.hi[j])))

    def endpoint(self) -> DyadicInterval:
        return self.value_at(self.horizon)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


def _cumsum_iv(lo: np.ndarray, hi: np.ndarray):
    """Cumulative sums along the last axis with a rigorous rounding pad."""
    n = lo.shape[-1]
    k = np.arange(1, n + 1)
    pad = 2.0 * k * np.finfo(np.float64).eps * np.cumsum(np.maximum(np.abs(lo), np.abs(hi)), axis=-1)
    pad = up(pad + np.finfo(np.float64).smallest_subnormal)
    return down(np.cumsum(lo, axis=-1) - pad), up(np.cumsum(hi, axis=-1) + pad)


def _grid_positions(X: StepProcess, path: WienerPath) -> np.ndarray:
    try:
        return np.array([path.index_of(t) for t in X.times])
    except ContractViolation as exc:
        raise ContractViolation("Wiener grid does not refine the step times",
                                level=path.level) from exc


def ito_step_many(X: StepProcess, paths: Sequence[WienerPath], omegas=None) -> list:
    """Indefinite integrals of X against each path (all at one level)."""
    if not paths:
        return []
    level = paths[0].level
    if any(p.level != level for p in paths):
        raise ContractViolation("paths must share one level")
    if omegas is None:
        omegas = [SeededPoint(p.seed) if p.seed is not None else None for p in paths]
    pos = _grid_positions(X, paths[0])
    end = pos[-1]
    W_lo = np.stack([p.lo[: end + 1] for p in paths])
    W_hi = np.stack([p.hi[: end + 1] for p in paths])
    # step index of every grid point (the last point belongs to the last step)
    step_of = np.searchsorted(pos, np.arange(end + 1), side="right") - 1
    step_of = np.minimum(step_of, len(X.values) - 1)
    xs = [v.bounds_many(omegas, paths) for v in X.values]
    x_lo = np.stack([a for a, _ in xs], axis=1)
    x_hi = np.stack([b for _, b in xs], axis=1)
    # completed steps: X_i (W(t_{i+1}) - W(t_i))
    d_lo, d_hi = sub_iv(W_lo[:, pos[1:]], W_hi[:, pos[1:]], W_lo[:, pos[:-1]], W_hi[:, pos[:-1]])
    c_lo, c_hi = mul_iv(x_lo, x_hi, d_lo, d_hi)
    s_lo, s_hi = _cumsum_iv(c_lo, c_hi)
    s_lo = np.concatenate([np.zeros((len(paths), 1)), s_lo], axis=1)
    s_hi = np.concatenate([np.zeros((len(paths), 1)), s_hi], axis=1)
    # partial last increment X_j (W(t) - W(t_j))
    start = pos[step_of]
    p_lo, p_hi = sub_iv(W_lo, W_hi, W_lo[:, start], W_hi[:, start])
    q_lo, q_hi = mul_iv(x_lo[:, step_of], x_hi[:, step_of], p_lo, p_hi)
    i_lo, i_hi = add_iv(s_lo[:, step_of], s_hi[:, step_of], q_lo, q_hi)
    i_lo[:, 0] = i_hi[:, 0] = 0.0
    return [PathEnclosure(level, i_lo[r], i_hi[r], X.horizon) for r in range(len(paths))]


def ito_step(X: StepProcess, W: WienerPath, omega: Optional[CantorPoint] = None) -> PathEnclosure:
    """Indefinite Ito integral of a step process along one certified path."""
    return ito_step_many(X, [W], None if omega is None else [omega])[0]


# ---------------------------------------------------------------------------
# reports

@dataclass
class CheckReport:
    statistic: str
    estimate: float
    band: tuple
    reference: Optional[DyadicInterval]
    verdict: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        ref = None if self.reference is None else [float(self.reference.lower), float(self.reference.upper)]
        return {
            "statistic": self.statistic,
            "estimate": self.estimate,
            "band": list(self.band),
            "reference": ref,
            "verdict": "pass" if self.verdict else "fail",
            **{k: _plain(v) for k, v in self.details.items()},
        }


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _mc(values: np.ndarray, sigmas: float = 3.0):
    n = len(values)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if n > 1 else 0.0
    half = sigmas * sd / math.sqrt(n)
    return mean, (mean - half, mean + half)


def _within(ref: DyadicInterval, band: tuple) -> bool:
    return float(ref.lower) <= band[1] and band[0] <= float(ref.upper)


def _ensemble(n: int, level: int, seed0: int, paths) -> list:
    if paths is not None:
        return list(paths)
    return sample_ensemble(range(seed0, seed0 + n), level)


def ito_isometry_check(X: StepProcess, n: int = 4096, level: int = 10, seed0: int = 0,
                       paths=None, sigmas: float = 3.0) -> CheckReport:
    """Monte Carlo E(int X dW)^2 against E int X^2 dt."""
    paths = _ensemble(n, level, seed0, paths)
    ints = ito_step_many(X, paths)
    sq = np.array([float(I.mid[-1]) ** 2 for I in ints])
    est, band = _mc(sq, sigmas)
    rhs = X.l2_norm_squared()
    if rhs is None:
        # fall back to a Monte Carlo right-hand side on the same ensemble
        rhs_mc = _mc_l2(X, paths)
        return CheckReport("ito_isometry", est, band, None, band[0] <= rhs_mc <= band[1],
                           {"n": len(paths), "rhs_estimate": rhs_mc})
    return CheckReport("ito_isometry", est, band, rhs, _within(rhs, band), {"n": len(paths)})


def _mc_l2(X: StepProcess, paths) -> float:
    omegas = [SeededPoint(p.seed) if p.seed is not None else None for p in paths]
    total = 0.0
    for (a, b), v in zip(zip(X.times, X.times[1:]), X.values):
        lo, hi = v.bounds_many(omegas, paths)
        total += float(np.mean((0.5 * (lo + hi)) ** 2)) * float(b - a)
    return total


def martingale_mean_check(X: StepProcess, n: int = 4096, level: int = 10, seed0: int = 0,
                          paths=None, sigmas: float = 3.0) -> CheckReport:
    """Ensemble mean of the integral at every step time is within the band of 0."""
    paths = _ensemble(n, level, seed0, paths)
    ints = ito_step_many(X, paths)
    worst, worst_band, ok = 0.0, (0.0, 0.0), True
    for t in X.times[1:]:
        vals = np.array([float(0.5 * (I.value_at(t).lower + I.value_at(t).upper)) for I in ints])
        est, band = _mc(vals, sigmas)
        if not band[0] <= 0 <= band[1]:
            ok = False
        if abs(est) >= abs(worst):
            worst, worst_band = est, band
    return CheckReport("martingale_mean", worst, worst_band, DyadicInterval.point(0), ok,
                       {"n": len(paths), "times": [str(t) for t in X.times[1:]]})


def norm_inequality_check(X: StepProcess, n: int = 4096, level: int = 10, seed0: int = 0,
                          paths=None, sigmas: float = 5.0) -> CheckReport:
    """||int X dW||_{inf,2} <= 2 sqrt(T) ||X||_{inf,2} with a 5 sigma alarm."""
    paths = _ensemble(n, level, seed0, paths)
    ints = ito_step_many(X, paths)
    mids = np.stack([I.mid for I in ints])
    ms = (mids ** 2).mean(axis=0)
    j = int(ms.argmax())
    est, band = _mc(mids[:, j] ** 2, sigmas)
    sup2 = X.sup_norm_squared()
    if sup2 is None:
        raise NumericRefusal("the norm inequality check needs exact second moments")
    T = X.horizon
    rhs = 4 * T * sup2.upper
    return CheckReport("norm_inequality", est, band, DyadicInterval(0, rhs), band[0] <= float(rhs),
                       {"n": len(paths), "rhs_squared": rhs})


# ---------------------------------------------------------------------------
# exact martingale inequalities

def random_walk(n: int, absolute: bool = False) -> list:
    """S_0 .. S_n of the simple random walk on global bits 0 .. n-1, as simple RVs."""
    out = []
    for k in range(n + 1):
        groups: dict = {}
        for w in range(2 ** k):
            bits = format(w, f"0{k}b") if k else ""
            s = sum(1 if b == "1" else -1 for b in bits)
            groups.setdefault(abs(s) if absolute else s, []).append(bits)
        from .space import ClopenSet

        out.append(rv.SimpleRV([(ClopenSet(ps), v) for v, ps in groups.items()]))
    return out


def _joint_rows(Xs: Sequence, k: int):
    """Rows (mass, lower bounds, upper bounds) of the joint table of Xs."""
    conts = [X.to_continuous() if isinstance(X, rv.SimpleRV) else
             (X.continuous if isinstance(X, rv.MeasurableRV) else X) for X in Xs]
    if any(c.dim != 1 for c in conts):
        raise ContractViolation("martingale inequalities need real random variables")
    t = rv.joint_table(conts, k)
    rows = []
    for i in range(t.size):
        ivs = [t.encls[j].intervals(i)[0] for j in range(len(conts))]
        rows.append((t.mass(i), [iv.lower for iv in ivs], [iv.upper for iv in ivs]))
    return rows


@dataclass
class InequalityReport:
    name: str
    lhs_upper: Fraction
    rhs_lower: Fraction
    holds: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "statistic": self.name,
            "estimate": str(self.lhs_upper),
            "band": [str(self.lhs_upper), str(self.rhs_lower)],
            "verdict": "pass" if self.holds else "fail",
            **{k: _plain(v) for k, v in self.details.items()},
        }


def submartingale_bound(Xs: Sequence, lam, k: int = 16) -> InequalityReport:
    """lambda Pr(max_k X_k >= lambda) <= E(X_n I[max >= lambda]) <= E X_n.

    The indicator is handled through its envelopes: rows whose enclosure
    may reach lambda count toward the probability's upper bound, and only
    rows that certainly reach it count toward the middle term's lower bound.
    """
    lam = as_rational(lam)
    rows = _joint_rows(Xs, k)
    if any(lo[i] < 0 for _, lo, _ in rows for i in range(len(lo))):
        raise ContractViolation("submartingale inequality needs a positive process")
    p_up = sum((m for m, _, hi in rows if max(hi) >= lam), Fraction(0))
    mid_lo = sum((m * lo[-1] for m, lo, _ in rows if max(lo) >= lam), Fraction(0))
    mid_hi = sum((m * hi[-1] for m, _, hi in rows if max(hi) >= lam), Fraction(0))
    e_lo = sum((m * lo[-1] for m, lo, _ in rows), Fraction(0))
    lhs = lam * p_up
    return InequalityReport("submartingale_maximal", lhs, e_lo, lhs <= e_lo,
                            {"lambda": lam, "prob_upper": p_up, "middle": [mid_lo, mid_hi]})


@dataclass
class L2BoundReport(InequalityReport):
    bound: Fraction = Fraction(0)


def martingale_l2_bound(Xs: Sequence, k: int = 16) -> L2BoundReport:
    """E max_k |X_k|^2 <= 4 E X_n^2; exports 4 E X_n^2 (upper) as the a-priori bound."""
    rows = _joint_rows(Xs, k)
    max_up = Fraction(0)
    end_lo = end_hi = Fraction(0)
    for m, lo, hi in rows:
        max_up += m * max(max(a * a, b * b) for a, b in zip(lo, hi))
        a, b = lo[-1], hi[-1]
        end_hi += m * max(a * a, b * b)
        end_lo += m * (Fraction(0) if a <= 0 <= b else min(a * a, b * b))
    holds = max_up <= 4 * end_lo
    return L2BoundReport("martingale_l2", max_up, 4 * end_lo, holds,
                         {"expect_end_sq": [end_lo, end_hi]}, bound=4 * end_hi)


# ---------------------------------------------------------------------------
# extension to limits of step processes

@dataclass
class ProcessNorm:
    kind: str
    value: DyadicInterval

    def __post_init__(self):
        if self.kind not in ("sup-time-L2-omega", "L2-time-L2-omega"):
            raise ContractViolation("unknown norm kind", kind=self.kind)
        if self.value.lower < 0:
            raise ContractViolation("norms are nonnegative")


@dataclass
class PathProcess:
    """Per-sample evaluator with an error certificate in ||.||_{inf,2}.

    evaluate(paths, omegas) returns PathEnclosures of the approximant; the
    limit process is within `error` of it in the sup-time L2-omega norm.
    """

    evaluate: Callable
    error: Fraction
    norm: Optional[ProcessNorm] = None
    details: dict = field(default_factory=dict)


@dataclass
class ExtendedIntegral:
    sequence: Callable[[int], StepProcess]
    c: Fraction
    horizon: Fraction
    norm: Optional[ProcessNorm] = None

    def error(self, n: int) -> Fraction:
        """||int X_n dW - int X dW||_{inf,2} <= 2 c 2^-n."""
        return 2 * self.c / 2 ** n

    def index_for(self, tol) -> int:
        tol = as_rational(tol)
        n = 0
        while self.error(n) > tol:
            n += 1
        return n

    def at(self, n: int) -> PathProcess:
        X = self.sequence(n)
        return PathProcess(lambda paths, omegas=None: ito_step_many(X, paths, omegas),
                           self.error(n), details={"index": n})

    def spot_check(self, m: int, n: int, paths, sigmas: float = 5.0) -> CheckReport:
        """Monte Carlo ||X_m - X_n||_{2,2} against the certificate c 2^-min(m,n)."""
        D = self.sequence(m) - self.sequence(n)
        omegas = [SeededPoint(p.seed) if p.seed is not None else None for p in paths]
        per_path = np.zeros(len(paths))
        for (a, b), v in zip(zip(D.times, D.times[1:]), D.values):
            lo, hi = v.bounds_many(omegas, paths)
            per_path += np.maximum(lo * lo, hi * hi) * float(b - a)
        est, band = _mc(per_path, sigmas)
        cert = (self.c / 2 ** min(m, n)) ** 2
        return CheckReport("cauchy_certificate", est, band, DyadicInterval(0, cert),
                           band[0] <= float(cert), {"m": m, "n": n})


def ito_extend(sequence: Callable[[int], StepProcess], c, horizon=1, sup_norm=None) -> ExtendedIntegral:
    """Integral of the limit of a certified Cauchy sequence of step processes.

    The certificate ||X_m - X_n||_{2,2} <= c 2^-min(m,n) carries over to
    the integrals with constant 2c.  If sup_norm bounds ||X||_{inf,2} the
    a-priori bound ||int X dW||_{inf,2} <= 2 sqrt(T) sup_norm is attached.
    """
    ext = ExtendedIntegral(sequence, as_rational(c), as_rational(horizon))
    if sup_norm is not None:
        s = as_rational(sup_norm)
        ext.norm = ProcessNorm("sup-time-L2-omega",
                               DyadicInterval(0, 2 * sqrt_upper(ext.horizon) * s))
    return ext


def wiener_integrand_sequence(horizon=1) -> Callable[[int], StepProcess]:
    """X_n = W sampled at mesh T 2^-2n, a certified Cauchy sequence with c = 3/2.

    ||W - X_n||_{2,2}^2 = T^2 2^-2n / 2, so for T <= 1 the triangle
    inequality gives ||X_m - X_n||_{2,2} <= sqrt(2) 2^-min(m,n).
    """
    if as_rational(horizon) > 1:
        raise ContractViolation("the certificate assumes a horizon of at most 1")
    T = as_rational(horizon)
    return lambda n: wiener_steps(dyadic_grid(T, 2 * n))
