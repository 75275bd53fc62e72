"""A small expression language for vital rates.

Grammar (EBNF, whitespace ignored)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = primary [ "^" unary ] ;          (* right associative *)
    primary = number | name | name "(" expr { "," expr } ")" | "(" expr ")" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;

Variables are ``s``, ``P``, ``Q``, ``tau`` and ``delta``; ``pi`` and ``e`` are
predefined constants. Functions: ``sin cos exp ln sqrt abs max min sign``.
``sign`` exists so that derivatives of ``abs``/``max``/``min`` stay inside the
language; ``sign(0) = 0``.

Evaluation broadcasts over numpy arrays. Domain violations raise
:class:`DomainError` instead of producing NaN.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

VARIABLES = ("s", "P", "Q", "tau", "delta")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "ln": 1,
    "sqrt": 1,
    "abs": 1,
    "sign": 1,
    "max": None,
    "min": None,
}


class DSLError(Exception):
    """Base class for expression language errors."""


class ParseError(DSLError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at offset {position}")


class UnboundVariableError(DSLError):
    pass


class DomainError(DSLError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


def variables(e: Expr) -> frozenset:
    """Names of the variables referenced by ``e``."""
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    out = frozenset()
    for a in e.args:
        out |= variables(a)
    return out


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[start]!r}", start, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] != "op":
            raise self.error(f"expected {value!r}")
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            tok = self.peek()
            raise self.error("unexpected ')'" if tok[1] == ")" else f"unexpected token {tok[1]!r}")
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.peek()
        kind, value, pos = tok
        if kind == "num":
            self.advance()
            return Num(float(value))
        if kind == "name":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if value not in FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", pos, self.text)
                self.advance()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[value]
                if arity is not None and len(args) != arity:
                    raise ParseError(f"{value} takes {arity} argument(s), got {len(args)}", pos, self.text)
                if arity is None and len(args) < 2:
                    raise ParseError(f"{value} takes at least 2 arguments", pos, self.text)
                return Call(value, tuple(args))
            if value in VARIABLES:
                return Var(value)
            if value in CONSTANTS:
                return Num(CONSTANTS[value])
            if value in FUNCTIONS:
                raise ParseError(f"function {value!r} needs an argument list", pos, self.text)
            raise ParseError(f"unknown identifier {value!r}", pos, self.text)
        if kind == "op" and value == "(":
            self.advance()
            e = self.expr()
            if self.peek()[1] != ")":
                raise ParseError("unbalanced '('", pos, self.text)
            self.advance()
            return e
        if kind == "end":
            raise self.error("unexpected end of expression (dangling operator?)")
        raise self.error(f"unexpected token {value!r}")


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an immutable expression tree."""
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0, text if isinstance(text, str) else "")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _NEG_PREC
    return _ATOM_PREC


def _fmt_num(v: float) -> str:
    if v == math.pi:
        return "pi"
    if v == math.e:
        return "e"
    if math.isinf(v) or math.isnan(v):
        raise DSLError(f"cannot print non-finite literal {v}")
    if v < 0 or math.copysign(1.0, v) < 0:
        return "-" + _fmt_num(-v)
    return repr(float(v))


def to_text(e: Expr) -> str:
    """Canonical text form; ``parse_expr(to_text(e)) == e`` for parsed trees."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_text(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        bare = isinstance(e.arg, (Var, Call, Neg)) or (
            isinstance(e.arg, BinOp) and e.arg.op == "^"
        ) or (isinstance(e.arg, Num) and _prec(e.arg) == _ATOM_PREC)
        return "-" + (inner if bare else f"({inner})")
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < p and not isinstance(e.right, Neg):
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# evaluation


def _is_integral(x) -> np.ndarray:
    return np.equal(np.mod(x, 1.0), 0.0)


def _ev(e: Expr, b: Mapping[str, object]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return b[e.name]
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -_ev(e.arg, b)
    if isinstance(e, BinOp):
        x = _ev(e.left, b)
        y = _ev(e.right, b)
        if e.op == "+":
            return x + y
        if e.op == "-":
            return x - y
        if e.op == "*":
            return x * y
        if e.op == "/":
            if np.any(np.equal(y, 0.0)):
                raise DomainError("division by zero")
            return np.divide(x, y)
        # ^
        xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if np.any((xa < 0) & ~_is_integral(ya)):
            raise DomainError("negative base with non-integer exponent")
        if np.any((xa == 0) & (ya < 0)):
            raise DomainError("zero raised to a negative power")
        with np.errstate(over="ignore"):
            out = np.power(xa, ya)
        return out if out.ndim else float(out)
    args = [_ev(a, b) for a in e.args]
    fn = e.fn
    if fn == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        return out
    if fn == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    (x,) = args
    if fn == "ln":
        if np.any(np.less_equal(x, 0.0)):
            raise DomainError("ln of a non-positive argument")
        return np.log(x)
    if fn == "sqrt":
        if np.any(np.less(x, 0.0)):
            raise DomainError("sqrt of a negative argument")
        return np.sqrt(x)
    if fn == "exp":
        with np.errstate(over="ignore"):
            return np.exp(x)
    return {"sin": np.sin, "cos": np.cos, "abs": np.abs, "sign": np.sign}[fn](x)


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate ``e`` with numpy broadcasting over the bound values."""
    return _ev(e, bindings)


def eval_expr(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` at a single point and return a Python float."""
    return float(np.asarray(_ev(e, bindings), dtype=float))


def evaluate_on(e: Expr, shape: tuple, bindings: Mapping[str, object]) -> np.ndarray:
    """Evaluate and broadcast the result to ``shape`` (constants become arrays)."""
    out = np.asarray(_ev(e, bindings), dtype=np.float64)
    return np.array(np.broadcast_to(out, shape), dtype=np.float64)


# ---------------------------------------------------------------------------
# differentiation

ZERO = Num(0.0)
ONE = Num(1.0)


def _num(e) -> bool:
    return isinstance(e, Num)


def _neg(a):
    if _num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a, b):
    if _num(a) and _num(b):
        return Num(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _num(a) and _num(b):
        return Num(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _num(a) and _num(b):
        return Num(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _num(a) and _num(b) and b.value != 0.0:
        return Num(a.value / b.value)
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return BinOp("/", a, b)


def _pow(a, b):
    if b == ONE:
        return a
    if b == ZERO:
        return ONE
    return BinOp("^", a, b)


def _call(fn, *args):
    return Call(fn, tuple(args))


def _step(x, y):
    """Indicator-ish weight (1 + sign(x - y)) / 2, equal to 1/2 on ties."""
    return _div(_add(ONE, _call("sign", _sub(x, y))), Num(2.0))


def diff_expr(e: Expr, v: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to variable ``v``.

    Only literal subtrees are folded. ``abs'`` is ``sign`` with ``sign(0)=0``;
    ``max``/``min`` use the branch selected by ``sign`` and average the two
    branch derivatives on ties.
    """
    if v not in VARIABLES:
        raise DSLError(f"cannot differentiate with respect to {v!r}")
    return _d(e, v)


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, Neg):
        return _neg(_d(e.arg, v))
    if isinstance(e, BinOp):
        f, g = e.left, e.right
        if e.op == "+":
            return _add(_d(f, v), _d(g, v))
        if e.op == "-":
            return _sub(_d(f, v), _d(g, v))
        if e.op == "*":
            return _add(_mul(_d(f, v), g), _mul(f, _d(g, v)))
        if e.op == "/":
            return _div(_sub(_mul(_d(f, v), g), _mul(f, _d(g, v))), _pow(g, Num(2.0)))
        # ^
        dg = _d(g, v)
        df = _d(f, v)
        if dg == ZERO:
            return _mul(_mul(g, _pow(f, _sub(g, ONE))), df)
        if df == ZERO:
            return _mul(_mul(e, _call("ln", f)), dg)
        return _mul(e, _add(_mul(dg, _call("ln", f)), _div(_mul(g, df), f)))
    fn, args = e.fn, e.args
    if fn in ("max", "min"):
        acc = args[0]
        dacc = _d(acc, v)
        for nxt in args[1:]:
            dn = _d(nxt, v)
            if fn == "max":
                w_acc = _step(acc, nxt)
            else:
                w_acc = _step(nxt, acc)
            if dacc == ZERO and dn == ZERO:
                dacc = ZERO
            else:
                dacc = _add(_mul(w_acc, dacc), _mul(_sub(ONE, w_acc), dn))
            acc = _call(fn, acc, nxt)
        return dacc
    (u,) = args
    du = _d(u, v)
    if du == ZERO:
        return ZERO
    if fn == "sin":
        outer = _call("cos", u)
    elif fn == "cos":
        outer = _neg(_call("sin", u))
    elif fn == "exp":
        outer = e
    elif fn == "ln":
        return _div(du, u)
    elif fn == "sqrt":
        return _div(du, _mul(Num(2.0), e))
    elif fn == "abs":
        outer = _call("sign", u)
    else:  # sign: derivative zero away from the jump
        return ZERO
    return _mul(outer, du)
