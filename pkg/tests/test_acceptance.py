"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v`; the verdicts are repeated in
the terminal summary under "acceptance criteria".
"""

import hashlib
import itertools
import math
import os
import time
from fractions import Fraction as F


from rigorstoch import randvar as rv
from rigorstoch.cli import main
from rigorstoch.exactnum import pow2
from rigorstoch.ito import (
    indicator_after,
    ito_isometry_check,
    martingale_l2_bound,
    random_walk,
    submartingale_bound,
)
from rigorstoch.markov import Kernel, dirac, marginal_consistent, propagate
from rigorstoch.sde import SdeProblem, contraction_step, kappa, picard_solve, plan
from rigorstoch.space import OpenSet, SeededPoint
from rigorstoch.validated import phi_enclosure
from rigorstoch.valuation import LowerFunction, WeightedBoxValuation as W, lower_integral
from rigorstoch.wiener import (
    ensemble_values,
    reflection_check,
    sample_ensemble,
    sample_wiener,
    tail_radius,
)

I = OpenSet.interval
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
N = 4096


def test_criterion_1_lower_integral_identities(criterion):
    t0 = time.perf_counter()
    ok = True
    # indicator integrals equal the measure exactly on atom fixtures
    atoms = [
        W.discrete({F(1, 8): F(1, 4), F(1, 2): F(1, 2), 2: F(1, 4)}),
        W.discrete({0: F(1, 3), 1: F(2, 3)}),
        dirac(F(5, 7)),
    ]
    sets = [I(0, 1), I(F(1, 4), 3), OpenSet.empty(), I(-5, 5), I(F(1, 2), F(3, 4))]
    for nu in atoms:
        for U in sets:
            ok &= lower_integral(nu, LowerFunction.indicator(U)).approx(16) == nu.measure_lower(U, 16)
    # linearity and step identities at stage 16
    n = 16
    # two interval atoms and a point atom
    boxes = [W([(((F(0), F(1, 4)),), F(1, 2)), (((F(1, 2), F(1, 2)),), F(1, 4)), (((F(3, 4), F(1)),), F(1, 4))])]
    psi1 = LowerFunction.from_interval(lambda x: x)
    psi2 = LowerFunction.from_interval(lambda x: x * x)
    for nu in boxes:
        i1 = lower_integral(nu, psi1, n).approx(n)
        i2 = lower_integral(nu, psi2, n).approx(n)
        for a1, a2 in [(2, 3)]:
            lhs = lower_integral(nu, psi1.scale(a1) + psi2.scale(a2), n).approx(n)
            ok &= abs(lhs - (a1 * i1 + a2 * i2)) <= pow2(-8)
        parts = [(I(0, F(1, 4)), 1), (I(F(1, 4), F(1, 2)), 2), (I(F(3, 4), 1), 3)]
        psi = LowerFunction.constant(0)
        for U, c in parts:
            psi = psi + LowerFunction.indicator(U).scale(c)
        got = lower_integral(nu, psi, n).approx(n)
        want = sum((c * nu.measure_lower(U, n) for U, c in parts), F(0))
        ok &= got <= want and want - got <= pow2(-8)
    dt = time.perf_counter() - t0
    ok &= dt < 10
    criterion(1, ok, f"{dt:.1f}s")
    assert ok


def _library_rvs():
    R = rv.rv_realize(W.uniform((0, 1)))
    A = rv.rv_realize(W.discrete({0: F(1, 3), 1: F(2, 3)}))
    return {
        "realize uniform": R,
        "realize atoms": A,
        "image lipschitz": rv.rv_image(lambda iv: iv * iv, R, lipschitz=2),
        "image searched": rv.rv_image(lambda iv: iv * iv, R),
        "product": rv.rv_product(R, A),
        "simple": rv.SimpleRV([(["0"], 1), (["1"], F(1, 3))]).to_measurable(),
        "binary expansion": rv.binary_expansion(),
    }


def test_criterion_2_cauchy_certificates(criterion, monkeypatch):
    monkeypatch.setenv("RIGORSTOCH_ORACLE_DEPTH", "14")
    t0 = time.perf_counter()
    bad = []
    for name, X in _library_rvs().items():
        bad += [(name, r) for r in rv.audit_certificate(X, 8, 12) if not r[3]]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 60
    criterion(2, ok, f"{len(bad)} failing pairs, {dt:.1f}s")
    assert ok


def test_criterion_3_distribution_round_trip(criterion):
    t0 = time.perf_counter()
    R = rv.rv_realize(W.uniform((0, 1)))
    worst = F(0)
    for a, b in itertools.combinations(range(17), 2):
        p = rv.rv_distribution(R, I(F(a, 16), F(b, 16))).approx(16)
        worst = max(worst, abs(p - F(b - a, 16)))
    dt = time.perf_counter() - t0
    ok = worst <= pow2(-6) and dt < 60
    criterion(3, ok, f"max error {float(worst):.2e}, {dt:.1f}s")
    assert ok


def test_criterion_4_markov_exactness(criterion):
    t0 = time.perf_counter()
    P = [[F(1, 2), F(1, 2)], [F(1, 4), F(3, 4)]]
    prop = propagate(Kernel.from_matrix(P), dirac(0), 10)
    v = [F(1), F(0)]
    ok = True
    for mu in prop.marginals:
        m = {x[0]: w for x, w in mu.point_masses().items()}
        ok &= [m.get(0, 0), m.get(1, 0)] == v
        v = [v[0] * P[0][j] + v[1] * P[1][j] for j in range(2)]
    ok &= marginal_consistent(prop)
    dt = time.perf_counter() - t0
    ok &= dt < 1
    criterion(4, ok, f"{dt:.2f}s")
    assert ok


def test_criterion_5_wiener_moments_and_tail(criterion):
    t0 = time.perf_counter()
    paths = sample_ensemble(range(N), 10)
    w1 = ensemble_values(paths, 1)
    ok_mean = abs(w1.mean()) <= 3 / math.sqrt(N)
    ok_var = 0.85 <= w1.var(ddof=1) <= 1.15
    ok_cov = True
    grid = [F(k, 4) for k in range(1, 5)]
    for s, t in itertools.combinations_with_replacement(grid, 2):
        prod = ensemble_values(paths, s) * ensemble_values(paths, t)
        sigma = math.sqrt(float(s * t + s * s) / N)
        ok_cov &= abs(prod.mean() - float(min(s, t))) <= 3 * sigma
    r = float(tail_radius(10))
    violations = 0
    for seed in range(100):
        coarse = sample_wiener(SeededPoint(seed), 10)
        fine = sample_wiener(SeededPoint(seed), 15)
        # level-10 grid points sit at every 32nd level-15 breakpoint
        violations += int((fine.lo[::32] < coarse.lo - r).sum() + (fine.hi[::32] > coarse.hi + r).sum())
    dt = time.perf_counter() - t0
    ok = ok_mean and ok_var and ok_cov and violations == 0 and dt < 120
    criterion(5, ok, f"mean {w1.mean():+.4f} var {w1.var(ddof=1):.4f} cov {ok_cov} "
                     f"tail violations {violations}, {dt:.1f}s")
    assert ok


def test_criterion_6_reflection_principle(criterion, ensemble):
    t0 = time.perf_counter()
    rep = reflection_check(ensemble, 1)
    ref = phi_enclosure(-1)
    p_ref = 2 * float(ref.mid)
    sigma_max = math.sqrt(p_ref * (1 - p_ref) / N)
    q = p_ref / 2
    # 2 Pr(W(1) > 1) is twice a binomial proportion
    sigma_end = 2 * math.sqrt(q * (1 - q) / N)
    ok_max = abs(rep.p_max - p_ref) <= 3 * sigma_max
    ok_end = abs(rep.p_end_twice - p_ref) <= 3 * sigma_end
    indeterminate = max(rep.max_indeterminate, rep.end_indeterminate) / N
    dt = time.perf_counter() - t0
    ok = ok_max and ok_end and indeterminate < 0.02 and abs(p_ref - 0.3173) < 1e-4 and dt < 120
    criterion(6, ok, f"p_max {rep.p_max:.4f} 2p_end {rep.p_end_twice:.4f} ref {p_ref:.4f} "
                     f"indeterminate {indeterminate:.2%}, {dt:.1f}s")
    assert ok


def test_criterion_7_ito_isometry(criterion, ensemble):
    t0 = time.perf_counter()
    rep = ito_isometry_check(indicator_after(F(1, 2)), paths=ensemble)
    dt = time.perf_counter() - t0
    ok = rep.reference.contains(F(1, 2)) and rep.reference.width == 0
    ok &= rep.band[0] <= 0.5 <= rep.band[1] and rep.verdict and dt < 60
    criterion(7, ok, f"estimate {rep.estimate:.4f} band [{rep.band[0]:.4f}, {rep.band[1]:.4f}], {dt:.1f}s")
    assert ok


def _walk_oracle(n, lam):
    """Exact lambda Pr(max|S| >= lambda), E|S_n|, E max S^2, E S_n^2 by enumeration."""
    hit = e_abs = emax2 = e2 = F(0)
    for signs in itertools.product((-1, 1), repeat=n):
        s = list(itertools.accumulate(signs, initial=0))
        hit += max(abs(v) for v in s) >= lam
        e_abs += abs(s[-1])
        emax2 += max(v * v for v in s)
        e2 += s[-1] ** 2
    M = 2 ** n
    return lam * hit / M, e_abs / M, emax2 / M, e2 / M


def test_criterion_8_martingale_inequalities(criterion):
    t0 = time.perf_counter()
    ok = True
    for n in range(1, 11):
        walk_abs, walk = random_walk(n, absolute=True), random_walk(n)
        l2 = martingale_l2_bound(walk)
        _, _, emax2, e2 = _walk_oracle(n, 1)
        ok &= l2.holds and l2.lhs_upper == emax2 and l2.rhs_lower == 4 * e2 and emax2 <= 4 * e2
        for lam in (F(j, 4) for j in range(1, 4 * n + 5)):
            rep = submartingale_bound(walk_abs, lam)
            lhs, e_abs, _, _ = _walk_oracle(n, lam) if n <= 6 else (rep.lhs_upper, rep.rhs_lower, 0, 0)
            ok &= rep.holds and rep.lhs_upper == lhs and rep.rhs_lower == e_abs and lhs <= e_abs
    dt = time.perf_counter() - t0
    ok &= dt < 10
    criterion(8, ok, f"{dt:.1f}s")
    assert ok


def test_criterion_9_sde_certificates(criterion):
    t0 = time.perf_counter()
    cs = contraction_step(1, 1)
    cert = plan(SdeProblem("-1*x", "1", 1, 1, 1), F(1, 64))
    dt = time.perf_counter() - t0
    ok = kappa(1, 1, F(1, 16)) <= F(9, 16) and cs.T <= F(1, 16) and cs.kappa <= F(9, 16)
    ok &= cert.final_gap_bound <= F(1, 64) and cert.kappa < 1 and dt < 1
    criterion(9, ok, f"T {cs.T} kappa {float(cs.kappa):.4f} final gap {float(cert.final_gap_bound):.2e}, {dt:.2f}s")
    assert ok


def test_criterion_10_sde_accuracy(criterion):
    t0 = time.perf_counter()
    ou = picard_solve(SdeProblem("-1*x", "1", 1, 1, 1), F(1, 64), range(N))
    v = ou.values_at(1)
    m_ref, v_ref = math.exp(-1), (1 - math.exp(-2)) / 2
    ok_ou_mean = abs(v.mean() - m_ref) <= 3 * math.sqrt(v_ref / N)
    # standard deviation of the sample variance of a normal sample
    ok_ou_var = abs(v.var(ddof=1) - v_ref) <= 3 * v_ref * math.sqrt(2 / (N - 1))
    gbm = picard_solve(SdeProblem("0.1*x", "0.2*x", F(1, 10), F(1, 5), 1, box=(F(1, 8), 8)), F(1, 64), range(N))
    g = gbm.values_at(1)
    g_sd = math.sqrt(math.exp(0.2) * (math.exp(0.04) - 1))
    ok_gbm = abs(g.mean() - math.exp(0.1)) <= 3 * g_sd / math.sqrt(N) and not gbm.breach
    ode = picard_solve(SdeProblem("-1*x", "0", 1, 0, 1), F(1, 64), [0])
    e = ode.enclosure(0, 1)
    ok_ode = float(e.lower) <= math.exp(-1) <= float(e.upper)
    dt = time.perf_counter() - t0
    ok = ok_ou_mean and ok_ou_var and ok_gbm and ok_ode and dt < 600
    criterion(10, ok, f"OU mean {v.mean():.4f} var {v.var(ddof=1):.4f}; GBM mean {g.mean():.4f}; "
                      f"ODE [{float(e.lower):.5f}, {float(e.upper):.5f}], {dt:.1f}s")
    assert ok


def _digest(path):
    out = {}
    for dirpath, _, files in os.walk(path):
        for f in sorted(files):
            full = os.path.join(dirpath, f)
            with open(full, "rb") as fh:
                out[os.path.relpath(full, path)] = hashlib.sha256(fh.read()).hexdigest()
    return out


def test_criterion_11_reproducibility(criterion, tmp_path):
    t0 = time.perf_counter()
    cfg = os.path.join(ROOT, "configs")
    matrix = {
        "wiener": ["wiener", "--level", "8", "--seeds", "16"],
        "markov": ["markov", "--chain", os.path.join(cfg, "twostate.json"), "--steps", "10"],
        "sde": ["sde", "--problem", os.path.join(cfg, "ou.toml"), "--seeds", "64"],
        "check": ["check", "--n", "256", "--level", "8"],
    }
    same = {}
    for name, argv in matrix.items():
        runs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}"
            main(argv + ["--out", str(out)])
            runs.append(_digest(out))
        same[name] = runs[0] == runs[1] and bool(runs[0])
    dt = time.perf_counter() - t0
    ok = all(same.values()) and dt < 60
    criterion(11, ok, f"{sum(same.values())}/{len(same)} subcommands identical, {dt:.1f}s")
    assert ok
