"""Picard iteration for dX = f(X) dt + g(X) dW with contraction certificates.

The horizon is cut into segments of length T where the Picard operator
J[X](t) = X(kT) + int f(X) ds + int g(X) dW contracts in the sup-time,
L2-omega distance with factor kappa = K T + 2 L sqrt(T).  Each segment
starts from the constant process at the previous endpoint and runs a
certified number of iterations.

Per path, iterates are represented by their values on a dyadic grid
(linear in between).  The drift integral over a grid cell is
h times f evaluated on the hull of the two endpoint enclosures; the diffusion integral is the Ito integral of
the left-endpoint step process of g(X), exact on the Wiener grid.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import randvar as rv
from .errors import ContractViolation, NumericRefusal
from .exactnum import DyadicInterval, as_rational, rational_str, sqrt_upper
from .expr import Expr, eval_exact, eval_iv, lipschitz_check, parse_expr, to_source
from .ito import RVStep, WIENER_COPIES, _cumsum_iv
from .space import SeededPoint
from .validated import add_iv, exp_point, float_bounds, mul_iv, up
from .wiener import MIN_STRATUM, sample_ensemble, unit_seed

MAX_GRID_LEVEL = 10
MAX_ITERATIONS = 200
WIDTH_CAP = 1e6


@dataclass
class SdeProblem:
    drift: Expr
    diffusion: Expr
    K: Fraction
    L: Fraction
    x0: object
    horizon: Fraction = Fraction(1)
    x0_l2: Optional[Fraction] = None
    box: Optional[tuple] = None

    def __post_init__(self):
        if isinstance(self.drift, str):
            self.drift = parse_expr(self.drift)
        if isinstance(self.diffusion, str):
            self.diffusion = parse_expr(self.diffusion)
        self.K, self.L = as_rational(self.K), as_rational(self.L)
        self.horizon = as_rational(self.horizon)
        if self.K < 0 or self.L < 0:
            raise ContractViolation("Lipschitz constants must be nonnegative", K=self.K, L=self.L)
        if self.horizon <= 0:
            raise ContractViolation("horizon must be positive")
        if isinstance(self.x0, (rv.MeasurableRV, rv.ContinuousRV, rv.SimpleRV)):
            if self.x0_l2 is None:
                raise ContractViolation("a random initial value needs an L2 bound x0_l2")
            self.x0_l2 = as_rational(self.x0_l2)
            self._x0_step = RVStep(self.x0)
            if self._x0_step.tag.copies & WIENER_COPIES:
                raise ContractViolation("the initial value reads the Wiener bit blocks")
        else:
            self.x0 = as_rational(self.x0)
            self._x0_step = None
        if self.box is not None:
            self.box = tuple(as_rational(v) for v in self.box)

    @property
    def random_start(self) -> bool:
        return self._x0_step is not None

    @classmethod
    def from_mapping(cls, data: dict) -> "SdeProblem":
        box = data.get("box")
        return cls(
            drift=str(data["drift"]),
            diffusion=str(data["diffusion"]),
            K=as_rational(str(data["K"])),
            L=as_rational(str(data["L"])),
            x0=as_rational(str(data.get("x0", "0"))),
            horizon=as_rational(str(data.get("horizon", "1"))),
            box=None if box is None else tuple(as_rational(str(v)) for v in box),
        )

    def to_mapping(self) -> dict:
        out = {
            "drift": to_source(self.drift),
            "diffusion": to_source(self.diffusion),
            "K": rational_str(self.K),
            "L": rational_str(self.L),
            "horizon": rational_str(self.horizon),
        }
        if not self.random_start:
            out["x0"] = rational_str(self.x0)
        if self.box is not None:
            out["box"] = [rational_str(v) for v in self.box]
        return out

    def verify_lipschitz(self, box=None) -> dict:
        box = box or self.box
        if box is None:
            raise ContractViolation("a box is needed to verify Lipschitz constants")
        return {"drift": lipschitz_check(self.drift, box, self.K),
                "diffusion": lipschitz_check(self.diffusion, box, self.L)}

    def _abs_at(self, e: Expr, x) -> Fraction:
        iv = eval_exact(e, x)
        return max(abs(iv.lower), abs(iv.upper))


# ---------------------------------------------------------------------------
# contraction certificates

def kappa(K, L, T) -> Fraction:
    """K T + 2 L sqrt(T), with sqrt(T) rounded up."""
    K, L, T = as_rational(K), as_rational(L), as_rational(T)
    return K * T + 2 * L * sqrt_upper(T)


@dataclass(frozen=True)
class ContractionStep:
    T: Fraction
    kappa: Fraction
    threshold: Fraction


def contraction_step(K, L) -> ContractionStep:
    """Largest dyadic T <= min(1/(2K), 1/(16 L^2)) / 2."""
    K, L = as_rational(K), as_rational(L)
    if K < 0 or L < 0:
        raise ContractViolation("Lipschitz constants must be nonnegative")
    bounds = []
    if K > 0:
        bounds.append(1 / (2 * K))
    if L > 0:
        bounds.append(1 / (16 * L * L))
    thr = min(bounds) if bounds else Fraction(2)
    half = thr / 2
    e = math.floor(math.log2(half))
    T = Fraction(2) ** e
    while T * 2 <= half:
        T *= 2
    while T > half:
        T /= 2
    k = kappa(K, L, T)
    if k >= 1:
        raise NumericRefusal("contraction factor is not below 1", kappa=k)
    return ContractionStep(T, k, thr)


@dataclass
class PicardCertificate:
    T: Fraction
    kappa: Fraction
    iterations: list
    initial_gap: list
    final_gap_bound: Fraction
    fixed_point_bound: Fraction
    global_error: Fraction
    discretization_bound: Fraction
    grid_level: int
    segments: int
    discretization_within_budget: bool
    tol: Fraction

    def to_json(self) -> dict:
        return {
            "T": rational_str(self.T),
            "kappa": rational_str(self.kappa),
            "iterations": max(self.iterations),
            "iterations_per_segment": self.iterations,
            "initial_gap": [_short(g) for g in self.initial_gap],
            "final_gap_bound": _short(self.final_gap_bound),
            "fixed_point_bound": _short(self.fixed_point_bound),
            "global_error": _short(self.global_error),
            "discretization_bound": _short(self.discretization_bound),
            "discretization_within_budget": self.discretization_within_budget,
            "grid_level": self.grid_level,
            "segments": self.segments,
            "tol": rational_str(self.tol),
        }


def _short(q: Fraction) -> str:
    """Upward-rounded 20-digit decimal rendering of a nonnegative bound."""
    q = as_rational(q)
    if q == 0:
        return "0"
    e = math.floor(math.log10(q)) - 19
    s = Fraction(10) ** e
    m = math.ceil(q / s)
    return f"{m}e{e}"


def moment_bound(problem: SdeProblem, t) -> Fraction:
    """Upper bound on (E X_t^2)^(1/2) for the exact solution.

    From d E X^2 <= E[2 X f(X) + g(X)^2] dt with |f(x)| <= f0 + K|x| and
    |g(x)| <= g0 + L|x|: E X_t^2 <= (E X_0^2 + a t) e^(c t), where
    a = f0 + 2 g0^2 and c = f0 + 2K + 2L^2.
    """
    t = as_rational(t)
    f0 = problem._abs_at(problem.drift, 0)
    g0 = problem._abs_at(problem.diffusion, 0)
    m0 = problem.x0_l2 if problem.random_start else abs(problem.x0)
    a = f0 + 2 * g0 * g0
    c = f0 + 2 * problem.K + 2 * problem.L ** 2
    return sqrt_upper((m0 * m0 + a * t) * exp_point(c * t).upper)


def stability_factor(K, L, T) -> Fraction:
    """exp((K + L^2/2) T) rounded up: L2 growth of a start-value error over time T."""
    K, L, T = as_rational(K), as_rational(L), as_rational(T)
    return exp_point((K + L * L / 2) * T).upper


def plan(problem: SdeProblem, tol) -> PicardCertificate:
    """Segment length, grid level and iteration counts for a tolerance.

    The tolerance is split in thirds: Picard contraction, grid
    discretization and Wiener truncation (zero here, since the Wiener
    enclosures are exact at grid points).  Errors carried from one segment
    into the next grow by the L2 stability factor of the exact flow.
    """
    tol = as_rational(tol)
    if tol <= 0:
        raise ContractViolation("tolerance must be positive")
    cs = contraction_step(problem.K, problem.L)
    T, k = cs.T, cs.kappa
    H = problem.horizon
    S = math.ceil(H / T)
    A = 1 / (1 - k)
    rho = stability_factor(problem.K, problem.L, T)
    f0 = problem._abs_at(problem.drift, 0)
    g0 = problem._abs_at(problem.diffusion, 0)
    rT = sqrt_upper(T)
    budget = tol / 3 / sum((rho ** j for j in range(S)), Fraction(0))
    iters, gaps, finals, norms = [], [], [], []
    for s in range(S):
        t_end = min(H, (s + 1) * T)
        B = moment_bound(problem, t_end)
        norms.append(B)
        if s == 0 and not problem.random_start:
            G = T * problem._abs_at(problem.drift, problem.x0) + 2 * rT * problem._abs_at(problem.diffusion, problem.x0)
        else:
            M = moment_bound(problem, s * T)
            G = T * (f0 + problem.K * M) + 2 * rT * (g0 + problem.L * M)
        n = 0
        while k ** n * G * A > budget and n <= MAX_ITERATIONS:
            n += 1
        iters.append(n)
        gaps.append(G)
        finals.append(k ** n * G)
    fp = max(e * A for e in finals)
    glob = Fraction(0)
    for e in finals:
        glob = glob * rho + e * A
    # discretization: left-endpoint data moves by omega(h) inside a cell
    level, disc = None, None
    for q in range(1, MAX_GRID_LEVEL + 1):
        h = Fraction(1, 2 ** q)
        if h > T or (H / h).denominator != 1:
            continue
        rh = sqrt_upper(h)
        d = Fraction(0)
        for B in norms:
            omega = h * (f0 + problem.K * B) + rh * (g0 + problem.L * B)
            d = d * rho + (problem.K * T + 2 * problem.L * rT) * omega * A
        level, disc = q, d
        if d <= tol / 3:
            break
    if level is None:
        raise NumericRefusal("horizon and segment length do not fit a dyadic grid", horizon=H, T=T)
    return PicardCertificate(T, k, iters, gaps, max(finals), fp, glob, disc, level, S,
                             disc <= tol / 3, tol)


# ---------------------------------------------------------------------------
# the Picard operator on grids

def picard_apply_many(X_lo, X_hi, x_lo, x_hi, problem: SdeProblem, dW_lo, dW_hi, h: Fraction):
    """One application of the operator on a segment, for all paths at once.

    X_*: (P, N+1) grid enclosures; x_*: (P,) start values; dW_*: (P, N)
    Wiener increments; h: grid mesh.
    """
    hf = float(h)
    # f over the hull of each cell encloses the drift of every linear
    # interpolant through the grid enclosures
    c_lo = np.minimum(X_lo[:, :-1], X_lo[:, 1:])
    c_hi = np.maximum(X_hi[:, :-1], X_hi[:, 1:])
    f_lo, f_hi = eval_iv(problem.drift, c_lo, c_hi)
    g_lo, g_hi = eval_iv(problem.diffusion, X_lo[:, :-1], X_hi[:, :-1])
    # h is a power of two, so scaling is exact
    d_lo, d_hi = f_lo * hf, f_hi * hf
    w_lo, w_hi = mul_iv(g_lo, g_hi, dW_lo, dW_hi)
    t_lo, t_hi = add_iv(d_lo, d_hi, w_lo, w_hi)
    c_lo, c_hi = _cumsum_iv(t_lo, t_hi)
    j_lo, j_hi = add_iv(x_lo[:, None], x_hi[:, None], c_lo, c_hi)
    return (np.concatenate([x_lo[:, None], j_lo], axis=1),
            np.concatenate([x_hi[:, None], j_hi], axis=1))


def picard_apply(X, problem: SdeProblem, W, level: int, x_start=None):
    """J[X] on [0, T] for one path; X is a PathEnclosure-like object on mesh 2^-level."""
    from .ito import PathEnclosure

    h = Fraction(1, 2 ** level)
    step = 2 ** (W.level + 1 - level)
    if step < 1:
        raise ContractViolation("grid is finer than the Wiener breakpoints", level=level, wiener=W.level)
    N = len(X.lo) - 1
    w_lo, w_hi = W.lo[: N * step + 1: step], W.hi[: N * step + 1: step]
    dW = (np.array([w_lo[1:] - w_hi[:-1]]), np.array([w_hi[1:] - w_lo[:-1]]))
    dW = (np.nextafter(dW[0], -np.inf), np.nextafter(dW[1], np.inf))
    if x_start is None:
        x_start = (X.lo[0], X.hi[0])
    lo, hi = picard_apply_many(X.lo[None, :], X.hi[None, :], np.array([x_start[0]]),
                               np.array([x_start[1]]), problem, dW[0], dW[1], h)
    return PathEnclosure(level - 1, lo[0], hi[0], h * N)


def constant_enclosure(x, level: int, T) -> "PathEnclosure":
    from .ito import PathEnclosure

    T = as_rational(T)
    N = int(T * 2 ** level)
    a, b = float_bounds(as_rational(x))
    return PathEnclosure(level - 1, np.full(N + 1, a), np.full(N + 1, b), T)


# ---------------------------------------------------------------------------
# solving

@dataclass
class SolutionProcess:
    problem: SdeProblem
    certificate: PicardCertificate
    seeds: list
    grid_level: int
    lo: np.ndarray
    hi: np.ndarray
    endpoints: list
    gaps: list
    breach: bool
    diagnostics: list = field(default_factory=list)

    @property
    def times(self) -> list:
        h = Fraction(1, 2 ** self.grid_level)
        return [h * j for j in range(self.lo.shape[1])]

    def index_of(self, t) -> int:
        j = as_rational(t) * 2 ** self.grid_level
        if j.denominator != 1 or not 0 <= j < self.lo.shape[1]:
            raise ContractViolation("time is not a grid point", t=t)
        return int(j)

    def values_at(self, t) -> np.ndarray:
        j = self.index_of(t)
        return 0.5 * (self.lo[:, j] + self.hi[:, j])

    def enclosure(self, path: int, t) -> DyadicInterval:
        j = self.index_of(t)
        return DyadicInterval(Fraction(float(self.lo[path, j])), Fraction(float(self.hi[path, j])))

    def certificate_json(self) -> dict:
        out = self.certificate.to_json()
        out["breach"] = self.breach
        out["diagnostics"] = list(self.diagnostics)
        out["problem"] = self.problem.to_mapping()
        out["version"] = __version__
        return out

    def write(self, outdir: str, paths: Optional[int] = None) -> None:
        """certificate.json plus paths/path_<seed>.csv for the first `paths` seeds (all when None)."""
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "certificate.json"), "w") as fh:
            json.dump(self.certificate_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        keep = len(self.seeds) if paths is None else min(paths, len(self.seeds))
        if keep <= 0:
            return
        pdir = os.path.join(outdir, "paths")
        os.makedirs(pdir, exist_ok=True)
        times = [rational_str(t) for t in self.times]
        for i in range(keep):
            with open(os.path.join(pdir, f"path_{self.seeds[i]}.csv"), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t", "lower", "upper"])
                for t, a, b in zip(times, self.lo[i], self.hi[i]):
                    w.writerow([t, repr(float(a)), repr(float(b))])


def _increments(seeds: Sequence[int], units: int, level: int, q: int, threads: int = 1):
    """Wiener increments on mesh 2^-q over [0, units], concatenating unit paths."""
    parts_lo, parts_hi = [], []
    step = 2 ** (level + 1 - q)
    for u in range(units):
        useeds = [unit_seed(s, u) for s in seeds]
        paths = sample_ensemble(useeds, level, threads=threads)
        W_lo = np.stack([p.lo[::step] for p in paths])
        W_hi = np.stack([p.hi[::step] for p in paths])
        parts_lo.append(np.nextafter(W_lo[:, 1:] - W_hi[:, :-1], -np.inf))
        parts_hi.append(np.nextafter(W_hi[:, 1:] - W_lo[:, :-1], np.inf))
    return np.concatenate(parts_lo, axis=1), np.concatenate(parts_hi, axis=1)


def picard_solve(problem: SdeProblem, tol, seeds: Sequence[int], threads: int = 1,
                 record_gaps: bool = True) -> SolutionProcess:
    cert = plan(problem, tol)
    seeds = [int(s) for s in seeds]
    q = cert.grid_level
    h = Fraction(1, 2 ** q)
    H = problem.horizon
    units = math.ceil(H)
    wlevel = max(MIN_STRATUM, q - 1)
    diagnostics = []
    if not cert.discretization_within_budget:
        diagnostics.append("grid level capped: discretization bound exceeds a third of the tolerance")
    if max(cert.iterations) > MAX_ITERATIONS:
        diagnostics.append("iteration cap reached: contraction tolerance not met")
    dW_lo, dW_hi = _increments(seeds, units, wlevel, q, threads)
    total = int(H / h)
    P = len(seeds)
    if problem.random_start:
        omegas = [SeededPoint(s) for s in seeds]
        x_lo, x_hi = problem._x0_step.bounds_many(omegas, [None] * P)
    else:
        a, b = float_bounds(problem.x0)
        x_lo, x_hi = np.full(P, a), np.full(P, b)
    out_lo = np.empty((P, total + 1))
    out_hi = np.empty((P, total + 1))
    out_lo[:, 0], out_hi[:, 0] = x_lo, x_hi
    pos = 0
    endpoints, gaps = [], []
    breach = False
    for s in range(cert.segments):
        seg_len = min(cert.T, H - s * cert.T)
        N = int(seg_len / h)
        dl, dh = dW_lo[:, pos:pos + N], dW_hi[:, pos:pos + N]
        X_lo = np.repeat(x_lo[:, None], N + 1, axis=1)
        X_hi = np.repeat(x_hi[:, None], N + 1, axis=1)
        seg_gaps = []
        for _ in range(min(cert.iterations[s], MAX_ITERATIONS)):
            # overflow shows up as non-finite bounds, which are refused below
            with np.errstate(over="ignore", invalid="ignore"):
                n_lo, n_hi = picard_apply_many(X_lo, X_hi, x_lo, x_hi, problem, dl, dh, h)
                if record_gaps:
                    diff = 0.5 * (n_lo + n_hi) - 0.5 * (X_lo + X_hi)
                    seg_gaps.append(float(np.sqrt((diff ** 2).mean(axis=0).max())))
            X_lo, X_hi = n_lo, n_hi
            if not np.isfinite(X_lo).all() or float((X_hi - X_lo).max()) > WIDTH_CAP:
                raise NumericRefusal("enclosure blowup over the width cap", segment=s)
        if problem.box is not None:
            lo_b, hi_b = float(problem.box[0]), float(problem.box[1])
            if (X_lo < lo_b).any() or (X_hi > hi_b).any():
                breach = True
        out_lo[:, pos + 1:pos + N + 1] = X_lo[:, 1:]
        out_hi[:, pos + 1:pos + N + 1] = X_hi[:, 1:]
        x_lo, x_hi = X_lo[:, -1].copy(), X_hi[:, -1].copy()
        endpoints.append((s * cert.T + seg_len, x_lo.copy(), x_hi.copy()))
        gaps.append(seg_gaps)
        pos += N
    if breach:
        diagnostics.append("path enclosure left the declared box")
    return SolutionProcess(problem, cert, seeds, q, out_lo, out_hi, endpoints, gaps, breach, diagnostics)
