"""Command line: `rigorstoch {wiener,markov,sde,check}`.

Every run writes its artifacts into --out together with run.json, which
records the subcommand, the resolved configuration, its SHA-256 and the
package version.  Nothing time-dependent is written, so identical inputs
give byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 numeric refusal,
4 resource limit.  Errors are printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from fractions import Fraction

from . import __version__
from .errors import ConfigError, RigorError
from .exactnum import as_rational, rational_str
from .expr import eval_exact, parse_expr

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", path=path) from exc
    try:
        if path.endswith(".toml"):
            return tomllib.loads(raw.decode("utf-8"))
        return json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", path=path) from exc


def _rational(value, name: str) -> Fraction:
    try:
        return as_rational(str(value).replace("−", "-"))
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ConfigError(f"{name} is not a rational number", value=str(value)) from exc


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_run_record(out: str, subcommand: str, config: dict) -> None:
    os.makedirs(out, exist_ok=True)
    record = {
        "subcommand": subcommand,
        "config": config,
        "config_sha256": config_hash(config),
        "seed0": config.get("seed0"),
        "version": __version__,
    }
    _write_json(os.path.join(out, "run.json"), record)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# wiener

def cmd_wiener(args) -> int:
    from .wiener import sample_ensemble

    if args.level < 0 or args.seeds < 1:
        raise ConfigError("level must be nonnegative and seeds positive")
    tol = _rational(args.tol, "tol")
    config = {"level": args.level, "seeds": args.seeds, "seed0": args.seed0,
              "mode": args.mode, "tol": rational_str(tol)}
    seeds = range(args.seed0, args.seed0 + args.seeds)
    paths = sample_ensemble(seeds, args.level, args.mode, tol, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    for p in paths:
        p.write_csv(os.path.join(args.out, f"path_{p.seed}.csv"))
    write_run_record(args.out, "wiener", config)
    return 0


# ---------------------------------------------------------------------------
# markov

def kernel_from_config(data: dict):
    """Kernel and initial valuation from a chain file.

    Either {"matrix": [[...]], "initial": [p0, p1, ...]} or
    {"drift": "expr", "noise": [[offset, weight], ...], "initial": {"x": p}}.
    """
    from .markov import Kernel, _image_atom
    from .valuation import WeightedBoxValuation

    init = data.get("initial")
    if init is None:
        raise ConfigError("chain file needs an 'initial' distribution")
    if "matrix" in data:
        P = [[_rational(p, "matrix entry") for p in row] for row in data["matrix"]]
        K = Kernel.from_matrix(P)
        if not isinstance(init, list):
            raise ConfigError("'initial' must be a list of state probabilities")
        mu0 = {i: _rational(p, "initial") for i, p in enumerate(init)}
    elif "drift" in data:
        f = parse_expr(str(data["drift"]))
        noise = [(_rational(v, "noise offset"), _rational(w, "noise weight"))
                 for v, w in data.get("noise", [[0, 1]])]

        def apply(sides):
            return WeightedBoxValuation([_image_atom(lambda iv, v=v: eval_exact(f, iv) + v, sides, w)
                                         for v, w in noise])

        K = Kernel(apply, 1, 1, label="expression")
        if isinstance(init, dict):
            mu0 = {_rational(x, "initial point"): _rational(p, "initial") for x, p in init.items()}
        else:
            mu0 = {_rational(init, "initial point"): Fraction(1)}
    else:
        raise ConfigError("chain file needs 'matrix' or 'drift'")
    mu0 = {x: p for x, p in mu0.items() if p}
    if sum(mu0.values()) != 1:
        raise ConfigError("initial distribution does not sum to 1")
    return K, WeightedBoxValuation.discrete(mu0)


def cmd_markov(args) -> int:
    from .markov import propagate, write_csv

    if args.steps < 0:
        raise ConfigError("steps must be nonnegative")
    data = load_config(args.chain)
    K, mu0 = kernel_from_config(data)
    prop = propagate(K, mu0, args.steps)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "marginals.csv"), "w", newline="") as fh:
        write_csv(prop.marginals, fh)
    write_run_record(args.out, "markov", {"chain": data, "steps": args.steps})
    return 0


# ---------------------------------------------------------------------------
# sde

def cmd_sde(args) -> int:
    from .sde import SdeProblem, picard_solve

    data = load_config(args.problem)
    for key in ("drift", "diffusion", "K", "L"):
        if key not in data:
            raise ConfigError(f"problem file is missing '{key}'")
    problem = SdeProblem(
        drift=str(data["drift"]),
        diffusion=str(data["diffusion"]),
        K=_rational(data["K"], "K"),
        L=_rational(data["L"], "L"),
        x0=_rational(data.get("x0", 0), "x0"),
        horizon=_rational(data.get("horizon", 1), "horizon"),
        box=None if data.get("box") is None else tuple(_rational(v, "box") for v in data["box"]),
    )
    tol = _rational(args.tol if args.tol is not None else data.get("tol", "1/64"), "tol")
    nseeds = int(args.seeds if args.seeds is not None else data.get("seeds", 16))
    seed0 = int(args.seed0 if args.seed0 is not None else data.get("seed0", 0))
    if nseeds < 1:
        raise ConfigError("seeds must be positive")
    config = {"problem": problem.to_mapping(), "tol": rational_str(tol), "seeds": nseeds, "seed0": seed0}
    sol = picard_solve(problem, tol, range(seed0, seed0 + nseeds), threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    sol.write(args.out, paths=None if args.write_paths < 0 else args.write_paths)
    with open(os.path.join(args.out, "endpoints.csv"), "w") as fh:
        fh.write("seed,lower,upper\n")
        for s, a, b in zip(sol.seeds, sol.lo[:, -1], sol.hi[:, -1]):
            fh.write(f"{s},{float(a)!r},{float(b)!r}\n")
    mids = 0.5 * (sol.lo[:, -1] + sol.hi[:, -1])
    _write_json(os.path.join(args.out, "summary.json"), {
        "n": nseeds,
        "mean": float(mids.mean()),
        "variance": float(mids.var(ddof=1)) if nseeds > 1 else 0.0,
        "max_width": float((sol.hi - sol.lo).max()),
    })
    write_run_record(args.out, "sde", config)
    return 0


# ---------------------------------------------------------------------------
# check

SUITES = ("isometry", "reflection", "martingale")


def cmd_check(args) -> int:
    from .ito import (indicator_after, ito_isometry_check, martingale_l2_bound,
                      martingale_mean_check, random_walk, submartingale_bound)
    from .wiener import reflection_check, sample_ensemble

    suites = SUITES if args.suite == "all" else (args.suite,)
    if args.n < 2:
        raise ConfigError("n must be at least 2")
    x = _rational(args.x, "x")
    config = {"suite": args.suite, "n": args.n, "level": args.level, "seed0": args.seed0, "x": rational_str(x)}
    paths = sample_ensemble(range(args.seed0, args.seed0 + args.n), args.level, threads=args.threads)
    reports = {}
    if "isometry" in suites:
        reports["isometry"] = ito_isometry_check(indicator_after(Fraction(1, 2)), paths=paths).to_json()
    if "reflection" in suites:
        reports["reflection"] = reflection_check(paths, x).to_json()
    if "martingale" in suites:
        reports["martingale_mean"] = martingale_mean_check(indicator_after(Fraction(1, 2)), paths=paths).to_json()
        reports["submartingale"] = submartingale_bound(random_walk(4, absolute=True), 2).to_json()
        reports["martingale_l2"] = martingale_l2_bound(random_walk(10)).to_json()
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "check.json"), reports)
    write_run_record(args.out, "check", config)
    failed = [k for k, r in reports.items() if r.get("verdict") != "pass"]
    for k in reports:
        print(f"{k}: {'FAIL' if k in failed else 'PASS'}")
    return 1 if failed else 0


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "ConfigError", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rigorstoch", description="Validated stochastic computations.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    w = sub.add_parser("wiener", help="sample certified Wiener path enclosures")
    w.add_argument("--level", type=int, default=8)
    w.add_argument("--seeds", type=int, default=16)
    w.add_argument("--seed0", type=int, default=0)
    w.add_argument("--mode", choices=("stratified", "statistical"), default="stratified")
    w.add_argument("--tol", default="1/1073741824", help="quantile tolerance (rational)")
    w.add_argument("--out", default="out")
    w.add_argument("--threads", type=int, default=1)
    w.set_defaults(func=cmd_wiener)

    m = sub.add_parser("markov", help="propagate a chain from a kernel file")
    m.add_argument("--chain", required=True)
    m.add_argument("--steps", type=int, default=1)
    m.add_argument("--out", default="out")
    m.set_defaults(func=cmd_markov)

    s = sub.add_parser("sde", help="solve an SDE by certified Picard iteration")
    s.add_argument("--problem", required=True)
    s.add_argument("--tol", default=None)
    s.add_argument("--seeds", type=int, default=None)
    s.add_argument("--seed0", type=int, default=None)
    s.add_argument("--write-paths", type=int, default=16,
                   help="number of per-seed path CSVs to write (-1 for all)")
    s.add_argument("--out", default="out")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_sde)

    c = sub.add_parser("check", help="run invariant suites")
    c.add_argument("--suite", choices=SUITES + ("all",), default="all")
    c.add_argument("--n", type=int, default=4096)
    c.add_argument("--level", type=int, default=10)
    c.add_argument("--seed0", type=int, default=0)
    c.add_argument("--x", default="1", help="reflection threshold")
    c.add_argument("--out", default="out")
    c.add_argument("--threads", type=int, default=1)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RigorError as exc:
        print(json.dumps(exc.to_json(), sort_keys=True), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
