"""Validated elementary functions.

Two flavours live here.  Scalar routines work on exact rationals and return
`DyadicInterval` enclosures from truncated Taylor series with explicit
remainders.  Vector routines work on float64 arrays of lower/upper bounds
and pad every rounded operation outward with `nextafter`; transcendental
calls carry an a-priori relative error budget on top of that.

The Gaussian CDF uses the all-positive series
    erf(z) = 2/sqrt(pi) * exp(-z^2) * sum_n (2 z^2)^n z / (2n+1)!!
for |x| <= 3 and continued-fraction brackets of the Mills ratio beyond.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import ndtri

from .errors import NumericRefusal
from .exactnum import DyadicInterval, as_rational, dyadic_ceil, dyadic_floor

EPS = np.finfo(np.float64).eps
TINY = np.finfo(np.float64).smallest_subnormal

# pi to 40 digits, rounded down and up
PI_LO = Fraction("3.141592653589793238462643383279502884197")
PI_HI = Fraction("3.141592653589793238462643383279502884198")

SERIES_TERMS = 40
CF_DEPTH = 60
SERIES_CUT = 3.0
# smallest quantile tolerance the float enclosures can honour
MIN_TOL = 2.0 ** -40


# ---------------------------------------------------------------------------
# outward rounding helpers

def down(x):
    return np.nextafter(x, -np.inf)


def up(x):
    return np.nextafter(x, np.inf)


def add_iv(alo, ahi, blo, bhi):
    return down(alo + blo), up(ahi + bhi)


def sub_iv(alo, ahi, blo, bhi):
    return down(alo - bhi), up(ahi - blo)


def mul_iv(alo, ahi, blo, bhi):
    c = np.stack([alo * blo, alo * bhi, ahi * blo, ahi * bhi])
    return down(c.min(axis=0)), up(c.max(axis=0))


def scale_iv(alo, ahi, clo, chi):
    """Multiply an interval by a positive interval [clo, chi]."""
    lo = np.where(alo >= 0, alo * clo, alo * chi)
    hi = np.where(ahi >= 0, ahi * chi, ahi * clo)
    return down(lo), up(hi)


def float_bounds(q) -> tuple[float, float]:
    """Floats f_lo <= q <= f_hi for an exact rational q."""
    q = as_rational(q)
    f = float(q)
    if Fraction(f) > q:
        return float(down(f)), f
    if Fraction(f) < q:
        return f, float(up(f))
    return f, f


def to_interval(lo: float, hi: float) -> DyadicInterval:
    return DyadicInterval(Fraction(float(lo)), Fraction(float(hi)))


# ---------------------------------------------------------------------------
# Gaussian CDF

def _phi_series(x):
    """Enclosure of Phi(x) for |x| <= SERIES_CUT."""
    z = x / math.sqrt(2.0)
    z2 = z * z
    term = np.abs(z)
    total = term.copy()
    for n in range(SERIES_TERMS):
        term = term * (2.0 * z2) / (2 * n + 3)
        total = total + term
    rho = 2.0 * z2 / (2 * SERIES_TERMS + 3)
    rem = term * rho / (1.0 - rho)
    erf_abs = (2.0 / math.sqrt(math.pi)) * np.exp(-z2) * total
    # series recurrences, exp and the constants stay within 4N+16 ulps
    pad = (4 * SERIES_TERMS + 16 + z2) * EPS * erf_abs + 2.0 * rem + TINY
    e_lo, e_hi = erf_abs - pad, erf_abs + pad
    sgn = np.sign(x)
    lo = np.where(sgn >= 0, 0.5 + 0.5 * e_lo, 0.5 - 0.5 * e_hi)
    hi = np.where(sgn >= 0, 0.5 + 0.5 * e_hi, 0.5 - 0.5 * e_lo)
    return np.clip(down(lo), 0.0, 1.0), np.clip(up(hi), 0.0, 1.0)


def _mills_cf(z, depth):
    t = z.copy()
    for k in range(depth, 0, -1):
        t = z + k / t
    return 1.0 / t


def _phi_lower_tail(x):
    """Enclosure of Phi(x) for x <= -SERIES_CUT."""
    z = -x
    a, b = _mills_cf(z, CF_DEPTH), _mills_cf(z, CF_DEPTH + 1)
    r_lo, r_hi = np.minimum(a, b), np.maximum(a, b)
    dens = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    rel = (4 * CF_DEPTH + 16 + 0.5 * z * z) * EPS
    lo = dens * r_lo * (1.0 - rel)
    hi = dens * r_hi * (1.0 + rel) + TINY
    return np.maximum(down(lo), 0.0), up(hi)


def phi_bounds(x) -> tuple[np.ndarray, np.ndarray]:
    """Certified lower and upper bounds of the standard normal CDF at float x."""
    x = np.asarray(x, dtype=np.float64)
    lo = np.empty_like(x)
    hi = np.empty_like(x)
    mid = np.abs(x) <= SERIES_CUT
    if mid.any():
        lo[mid], hi[mid] = _phi_series(x[mid])
    left = (x < -SERIES_CUT) & np.isfinite(x)
    if left.any():
        lo[left], hi[left] = _phi_lower_tail(x[left])
    right = (x > SERIES_CUT) & np.isfinite(x)
    if right.any():
        tl, th = _phi_lower_tail(-x[right])
        lo[right], hi[right] = down(1.0 - th), up(1.0 - tl)
    lo = np.where(x == -np.inf, 0.0, np.where(x == np.inf, 1.0, lo))
    hi = np.where(x == -np.inf, 0.0, np.where(x == np.inf, 1.0, hi))
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def phi_enclosure(x) -> DyadicInterval:
    """Phi over a rational point or a DyadicInterval (Phi is increasing)."""
    if isinstance(x, DyadicInterval):
        a, b = x.lower, x.upper
    else:
        a = b = as_rational(x)
    lo = phi_bounds(np.array([float_bounds(a)[0]]))[0][0]
    hi = phi_bounds(np.array([float_bounds(b)[1]]))[1][0]
    return to_interval(lo, hi)


# ---------------------------------------------------------------------------
# Gaussian quantile

def quantile_bounds(p_lo, p_hi, tol: float, clamp: float = math.inf):
    """Arrays (x_lo, x_hi) with Phi(x_lo) <= p_lo and Phi(x_hi) >= p_hi.

    Requires 0 <= p_lo <= p_hi <= 1/2 elementwise (lower-tail form).  Each
    side is a scipy guess pushed outward by tol/4, doubled until the
    validated CDF certifies it.  Results are clamped to [-clamp, clamp]:
    callers pass the truncation level when the true value is known to lie
    inside.
    """
    p_lo = np.asarray(p_lo, dtype=np.float64)
    p_hi = np.asarray(p_hi, dtype=np.float64)
    if tol < MIN_TOL:
        raise NumericRefusal("quantile tolerance below the float validation floor",
                             tol=tol, floor=MIN_TOL)
    with np.errstate(divide="ignore"):
        g_lo = ndtri(p_lo)
        g_hi = ndtri(p_hi)
    x_lo = _push(g_lo, p_lo, -tol / 4, lambda v: phi_bounds(v)[1] <= p_lo)
    x_hi = _push(g_hi, p_hi, tol / 4, lambda v: phi_bounds(v)[0] >= p_hi)
    return np.maximum(x_lo, -clamp), np.minimum(x_hi, clamp)


def _push(guess, p, step, ok):
    x = np.where(np.isfinite(guess), guess + step, guess)
    good = ~np.isfinite(x) | ok(np.where(np.isfinite(x), x, 0.0))
    delta = step
    for _ in range(60):
        if good.all():
            return x
        delta *= 2.0
        x = np.where(good, x, guess + delta)
        good = good | ok(x)
    raise NumericRefusal("quantile bracket could not be certified",
                         count=int((~good).sum()))


def gaussian_quantile(u: DyadicInterval, tol) -> DyadicInterval:
    """Enclosure of the standard normal quantile over u, strictly inside (0,1)."""
    tol = as_rational(tol)
    if tol <= 0:
        raise NumericRefusal("tolerance must be positive")
    if not isinstance(u, DyadicInterval):
        u = DyadicInterval.point(u)
    if u.lower <= 0 or u.upper >= 1:
        raise NumericRefusal("quantile argument touches {0,1}", lower=u.lower, upper=u.upper)
    t = float(tol)
    lo = _quantile_side(u.lower, t, lower=True)
    hi = _quantile_side(u.upper, t, lower=False)
    return DyadicInterval(lo, hi)


def _quantile_side(p: Fraction, tol: float, lower: bool) -> Fraction:
    # reflect into the lower tail so tiny probabilities keep relative accuracy
    flip = p > Fraction(1, 2)
    q = 1 - p if flip else p
    want_lower = lower != flip
    if want_lower:
        f = float_bounds(q)[0]
        x = quantile_bounds(np.array([f]), np.array([f]), tol)[0][0]
    else:
        f = float_bounds(q)[1]
        x = quantile_bounds(np.array([f]), np.array([f]), tol)[1][0]
    x = Fraction(float(x))
    return -x if flip else x


# ---------------------------------------------------------------------------
# exact scalar elementary functions

def _round_out(lo: Fraction, hi: Fraction, bits: int) -> DyadicInterval:
    return DyadicInterval(dyadic_floor(lo, bits), dyadic_ceil(hi, bits))


def exp_point(q, bits: int = 64) -> DyadicInterval:
    """Enclosure of exp(q) for rational q, width about 2^-bits relative."""
    q = as_rational(q)
    s = 0
    while abs(q) > Fraction(1, 2) * 2 ** s:
        s += 1
    r = q / 2 ** s
    work = bits + 2 * s + 8
    total, term, n = Fraction(1), Fraction(1), 0
    while True:
        n += 1
        term = term * r / n
        total += term
        # |tail| <= 2|next term| since |r| <= 1/2
        bound = 2 * abs(term * r) / (n + 1)
        if bound < Fraction(1, 2 ** work):
            break
    iv = _round_out(total - bound, total + bound, work)
    lo, hi = iv.lower, iv.upper
    for _ in range(s):
        lo, hi = dyadic_floor(lo * lo, work), dyadic_ceil(hi * hi, work)
    return _round_out(lo, hi, work)


def exp_interval(x: DyadicInterval, bits: int = 64) -> DyadicInterval:
    return DyadicInterval(exp_point(x.lower, bits).lower, exp_point(x.upper, bits).upper)


def _sin_cos_point(q: Fraction, bits: int) -> tuple[DyadicInterval, DyadicInterval]:
    """Taylor enclosures of sin and cos at q after reduction by 2*pi."""
    k = math.floor(q / (2 * PI_LO) + Fraction(1, 2))
    # q - 2*pi*k is known up to 2|k|*(PI_HI-PI_LO)
    r = q - 2 * k * PI_LO
    slop = abs(2 * k) * (PI_HI - PI_LO)
    work = bits + 8
    s_tot, c_tot = Fraction(0), Fraction(1)
    term, n = Fraction(1), 0
    while True:
        n += 1
        term = term * r / n
        if n % 4 == 1:
            s_tot += term
        elif n % 4 == 2:
            c_tot -= term
        elif n % 4 == 3:
            s_tot -= term
        else:
            c_tot += term
        nxt = abs(term * r) / (n + 1)
        if nxt < Fraction(1, 2 ** work) and n > abs(r):
            break
    err = nxt + slop
    s = _round_out(max(s_tot - err, Fraction(-1)), min(s_tot + err, Fraction(1)), bits)
    c = _round_out(max(c_tot - err, Fraction(-1)), min(c_tot + err, Fraction(1)), bits)
    return s, c


def _trig_interval(x: DyadicInterval, bits: int, phase: Fraction) -> DyadicInterval:
    """sin over x when phase = 0; cos is sin shifted by phase = 1/2 (times pi)."""
    a, b = x.lower, x.upper
    if b - a >= 2 * PI_HI:
        return DyadicInterval(-1, 1)
    which = 0 if phase == 0 else 1
    ea = _sin_cos_point(a, bits)[which]
    eb = _sin_cos_point(b, bits)[which]
    lo, hi = min(ea.lower, eb.lower), max(ea.upper, eb.upper)
    # extrema of sin(t + phase*pi) sit at t = (1/2 - phase + j) * pi
    base = Fraction(1, 2) - phase
    j0 = math.floor(a / PI_HI - base) - 1
    for j in range(j0, j0 + 6):
        c = base + j
        lo_t, hi_t = sorted((c * PI_LO, c * PI_HI))
        if hi_t < a or lo_t > b:
            continue
        if j % 2 == 0:
            hi = Fraction(1)
        else:
            lo = Fraction(-1)
    return DyadicInterval(lo, hi)


def sin_interval(x: DyadicInterval, bits: int = 64) -> DyadicInterval:
    return _trig_interval(x, bits, Fraction(0))


def cos_interval(x: DyadicInterval, bits: int = 64) -> DyadicInterval:
    return _trig_interval(x, bits, Fraction(1, 2))


# ---------------------------------------------------------------------------
# vector elementary functions (float enclosures)

LIBM_ULPS = 4


def _pad_rel(v, ulps=LIBM_ULPS):
    return np.abs(v) * ulps * EPS + TINY


def exp_iv(lo, hi):
    a, b = np.exp(lo), np.exp(hi)
    return np.maximum(down(a - _pad_rel(a)), 0.0), up(b + _pad_rel(b))


def _trig_iv(lo, hi, phase):
    f = np.sin if phase == 0 else np.cos
    a, b = f(lo), f(hi)
    out_lo = down(np.minimum(a, b) - _pad_rel(1.0))
    out_hi = up(np.maximum(a, b) + _pad_rel(1.0))
    # extrema of sin(t + phase*pi) at t = (1/2 - phase + j) * pi
    pi_lo, pi_hi = float(down(math.pi)), float(up(math.pi))
    base = 0.5 - phase
    j = np.floor(lo / pi_lo - base) - 1
    for step in range(6):
        c = base + j + step
        t_lo = np.minimum(c * pi_lo, c * pi_hi)
        t_hi = np.maximum(c * pi_lo, c * pi_hi)
        hit = (t_hi >= down(lo)) & (t_lo <= up(hi))
        even = np.mod(j + step, 2) == 0
        out_hi = np.where(hit & even, 1.0, out_hi)
        out_lo = np.where(hit & ~even, -1.0, out_lo)
    wide = (hi - lo) >= 2 * pi_hi
    out_lo = np.where(wide, -1.0, out_lo)
    out_hi = np.where(wide, 1.0, out_hi)
    return np.maximum(out_lo, -1.0), np.minimum(out_hi, 1.0)


def sin_iv(lo, hi):
    return _trig_iv(lo, hi, 0.0)


def cos_iv(lo, hi):
    return _trig_iv(lo, hi, 0.5)
