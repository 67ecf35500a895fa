"""Arithmetic expressions in one variable x.

Grammar (unary binds tighter than *, which binds tighter than + and -):

    expr    := term (('+' | '-') term)*
    term    := unary ('*' unary)*
    unary   := '-' unary | primary
    primary := NUMBER | 'x' | FUNC '(' expr ')' | '(' expr ')'

NUMBER is an integer, a decimal ("0.2") or a rational "p/q", always read
exactly.  A minus sign directly in front of a number folds into the
constant, so "-1*x" parses as Mul(Const(-1), Var()).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from . import validated as vd
from .errors import ConfigError, NumericRefusal
from .exactnum import DyadicInterval, as_rational, rational_str
from .valuation import UnsupportedOperation

FUNCS = ("sin", "cos", "exp")


class ExprSyntaxError(ConfigError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}", offset=offset)
        self.offset = offset


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expr"


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Neg, Func, Add, Sub, Mul]

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:/\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*()\u2212]))")


def _tokens(src: bytes):
    pos = 0
    text = src.decode("utf-8")
    # offsets are reported in bytes of the UTF-8 source
    offs = [len(text[:i].encode("utf-8")) for i in range(len(text) + 1)]
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            yield ("end", "", offs[pos])
            return
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", offs[pos])
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        tok = m.group(kind)
        if kind == "num" and "/" in tok and int(tok.split("/")[1]) == 0:
            raise ExprSyntaxError("zero denominator", offs[start])
        if tok == "\u2212":
            tok = "-"
        yield (kind, tok, offs[start])
        pos = m.end()


class _Parser:
    def __init__(self, src: str):
        self.toks = list(_tokens(src.encode("utf-8")))
        self.i = 0

    @property
    def cur(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, op: str):
        kind, tok, off = self.cur
        if kind != "op" or tok != op:
            what = "end of input" if kind == "end" else repr(tok)
            raise ExprSyntaxError(f"expected {op!r} but found {what}", off)
        self.take()

    def parse(self) -> Expr:
        e = self.expr()
        kind, tok, off = self.cur
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {tok!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.cur[0] == "op" and self.cur[1] in "+-":
            op = self.take()[1]
            r = self.term()
            e = Add(e, r) if op == "+" else Sub(e, r)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.cur[0] == "op" and self.cur[1] == "*":
            self.take()
            e = Mul(e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.cur[0] == "op" and self.cur[1] == "-":
            self.take()
            if self.cur[0] == "num":
                return Const(-Fraction(self.take()[1]))
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        kind, tok, off = self.cur
        if kind == "num":
            self.take()
            return Const(Fraction(tok))
        if kind == "name":
            self.take()
            if tok == "x":
                return Var()
            if tok in FUNCS:
                self.expect("(")
                e = self.expr()
                self.expect(")")
                return Func(tok, e)
            raise ExprSyntaxError(f"unknown identifier {tok!r}", off)
        if kind == "op" and tok == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(tok)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse_expr(src: str) -> Expr:
    return _Parser(src).parse()


_PREC = {Add: 1, Sub: 1, Mul: 2}


def to_source(e: Expr) -> str:
    """Pretty-print so that parse_expr(to_source(e)) == e."""
    if isinstance(e, Const):
        return rational_str(e.value)
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Func):
        return f"{e.name}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        # a bare constant after '-' would fold, so keep its parentheses
        if isinstance(e.arg, (Add, Sub, Mul, Const)):
            inner = f"({inner})"
        return "-" + inner
    p = _PREC[type(e)]
    op = {Add: " + ", Sub: " - ", Mul: "*"}[type(e)]
    left = to_source(e.left)
    if type(e.left) in _PREC and _PREC[type(e.left)] < p:
        left = f"({left})"
    right = to_source(e.right)
    if type(e.right) in _PREC and _PREC[type(e.right)] <= p:
        right = f"({right})"
    return left + op + right


# ---------------------------------------------------------------------------
# evaluation

def eval_exact(e: Expr, x) -> DyadicInterval:
    """Enclosure over a rational point or DyadicInterval."""
    if not isinstance(x, DyadicInterval):
        x = DyadicInterval.point(x)
    if isinstance(e, Const):
        return DyadicInterval.point(e.value)
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -eval_exact(e.arg, x)
    if isinstance(e, Add):
        return eval_exact(e.left, x) + eval_exact(e.right, x)
    if isinstance(e, Sub):
        return eval_exact(e.left, x) - eval_exact(e.right, x)
    if isinstance(e, Mul):
        return eval_exact(e.left, x) * eval_exact(e.right, x)
    if isinstance(e, Func):
        a = eval_exact(e.arg, x)
        return {"sin": vd.sin_interval, "cos": vd.cos_interval, "exp": vd.exp_interval}[e.name](a)
    raise UnsupportedOperation(f"unknown node {e!r}")


def eval_iv(e: Expr, lo, hi):
    """Outward-rounded float enclosure over arrays [lo, hi]."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if isinstance(e, Const):
        a, b = vd.float_bounds(e.value)
        return np.full(lo.shape, a), np.full(lo.shape, b)
    if isinstance(e, Var):
        return lo, hi
    if isinstance(e, Neg):
        a, b = eval_iv(e.arg, lo, hi)
        return -b, -a
    if isinstance(e, (Add, Sub, Mul)):
        a = eval_iv(e.left, lo, hi)
        b = eval_iv(e.right, lo, hi)
        fn = {Add: vd.add_iv, Sub: vd.sub_iv, Mul: vd.mul_iv}[type(e)]
        return fn(*a, *b)
    if isinstance(e, Func):
        a, b = eval_iv(e.arg, lo, hi)
        return {"sin": vd.sin_iv, "cos": vd.cos_iv, "exp": vd.exp_iv}[e.name](a, b)
    raise UnsupportedOperation(f"unknown node {e!r}")


def eval_float(e: Expr, x):
    """Plain floating-point evaluation (no enclosure)."""
    return 0.5 * sum(eval_iv(e, x, x))


# ---------------------------------------------------------------------------
# symbolic derivative

def _simplify(e: Expr) -> Expr:
    if isinstance(e, (Add, Sub, Mul)):
        a, b = _simplify(e.left), _simplify(e.right)
        ca = a.value if isinstance(a, Const) else None
        cb = b.value if isinstance(b, Const) else None
        if isinstance(e, Mul):
            if ca == 0 or cb == 0:
                return Const(Fraction(0))
            if ca == 1:
                return b
            if cb == 1:
                return a
            if ca is not None and cb is not None:
                return Const(ca * cb)
            return Mul(a, b)
        if isinstance(e, Add):
            if ca == 0:
                return b
            if cb == 0:
                return a
            if ca is not None and cb is not None:
                return Const(ca + cb)
            return Add(a, b)
        if cb == 0:
            return a
        if ca is not None and cb is not None:
            return Const(ca - cb)
        if ca == 0:
            return Neg(b)
        return Sub(a, b)
    if isinstance(e, Neg):
        a = _simplify(e.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        return Neg(a)
    if isinstance(e, Func):
        return Func(e.name, _simplify(e.arg))
    return e


def derivative(e: Expr) -> Expr:
    return _simplify(_diff(e))


def _diff(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(Fraction(0))
    if isinstance(e, Var):
        return Const(Fraction(1))
    if isinstance(e, Neg):
        return Neg(_diff(e.arg))
    if isinstance(e, Add):
        return Add(_diff(e.left), _diff(e.right))
    if isinstance(e, Sub):
        return Sub(_diff(e.left), _diff(e.right))
    if isinstance(e, Mul):
        return Add(Mul(_diff(e.left), e.right), Mul(e.left, _diff(e.right)))
    if isinstance(e, Func):
        inner = _diff(e.arg)
        outer = {
            "sin": Func("cos", e.arg),
            "cos": Neg(Func("sin", e.arg)),
            "exp": Func("exp", e.arg),
        }.get(e.name)
        if outer is None:
            raise UnsupportedOperation(f"no derivative rule for {e.name}")
        return Mul(outer, inner)
    raise UnsupportedOperation(f"no derivative rule for {e!r}")


# ---------------------------------------------------------------------------
# Lipschitz verification

@dataclass
class LipschitzVerdict:
    passed: bool
    bound: Fraction
    witness: tuple | None
    claimed: Fraction

    def to_json(self) -> dict:
        return {
            "verdict": "pass" if self.passed else "fail",
            "bound": str(self.bound),
            "claimed": str(self.claimed),
            "witness": None if self.witness is None else [str(v) for v in self.witness],
        }


def _abs_bounds(iv: DyadicInterval) -> tuple[Fraction, Fraction]:
    hi = max(abs(iv.lower), abs(iv.upper))
    lo = Fraction(0) if iv.lower <= 0 <= iv.upper else min(abs(iv.lower), abs(iv.upper))
    return lo, hi


def lipschitz_check(e: Expr, box, claimed, max_depth: int = 12) -> LipschitzVerdict:
    """Check sup |e'| <= claimed over box by interval bisection.

    Fails with a witness subbox as soon as |e'| provably exceeds the claim
    on a subbox; passes once every subbox has an upper bound within it.
    """
    claimed = as_rational(claimed)
    a, b = (as_rational(v) for v in box)
    if a > b:
        raise NumericRefusal("empty box", box=(a, b))
    d = derivative(e)
    work = [(a, b, 0)]
    bound = Fraction(0)
    undecided = None
    while work:
        lo, hi, depth = work.pop()
        low, up = _abs_bounds(eval_exact(d, DyadicInterval(lo, hi)))
        if low > claimed:
            return LipschitzVerdict(False, up, (lo, hi), claimed)
        if up <= claimed:
            bound = max(bound, up)
            continue
        if depth >= max_depth:
            bound = max(bound, up)
            undecided = undecided or (lo, hi)
            continue
        m = (lo + hi) / 2
        work.append((m, hi, depth + 1))
        work.append((lo, m, depth + 1))
    if undecided is not None:
        return LipschitzVerdict(False, bound, undecided, claimed)
    return LipschitzVerdict(True, bound, None, claimed)
