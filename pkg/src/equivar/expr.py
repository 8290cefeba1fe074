"""Closed-form scalar expressions in one variable ``x`` plus named parameters.

The grammar is the usual calculator one::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

It is parsed with a Pratt loop, so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is
``2^(3^2)``.  There is no implicit multiplication; ``2x`` is a syntax error.

Parsed trees compile to plain closures, either over :mod:`math` (fast scalar
calls from the ODE integrator) or over :mod:`numpy` (vectorised quadrature).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "Expr",
    "ExprError",
    "ExprSyntaxError",
    "UnknownFunctionError",
    "UnboundIdentifierError",
    "DomainError",
    "NonFiniteWarning",
    "FUNCTIONS",
    "parse",
    "evaluate",
]

VARIABLE = "x"
FUNCTIONS = ("sin", "cos", "tan", "arctan", "exp", "log", "sqrt", "abs")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        text = f"{message} at offset {offset}"
        if expected:
            text += f" (expected {expected})"
        super().__init__(text)


class UnknownFunctionError(ExprSyntaxError):
    def __init__(self, name: str, offset: int):
        self.name = name
        super().__init__(f"unknown function {name!r}", offset,
                         expected="one of " + ", ".join(FUNCTIONS))


class UnboundIdentifierError(ExprError):
    def __init__(self, names):
        self.names = tuple(sorted(names))
        super().__init__("unbound identifier(s): " + ", ".join(self.names))


class DomainError(ExprError, ArithmeticError):
    """Raised for log of a non-positive number, sqrt of a negative, etc."""


class NonFiniteWarning(RuntimeWarning):
    pass


# --------------------------------------------------------------------------
# syntax tree

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Name, Neg, BinOp, Call]


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num' | 'name' | 'op' | 'end'
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}",
                                  _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(text, len(text))))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


# --------------------------------------------------------------------------
# Pratt parser

_INFIX_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25  # above * and /, below ^


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind == "end":
            raise ExprSyntaxError(self._found(), self.tok.offset, expected=repr(text))
        self.advance()

    def _found(self) -> str:
        if self.tok.kind == "end":
            return "unexpected end of input"
        return f"unexpected token {self.tok.text!r}"

    def parse(self) -> Node:
        node = self.expression(0)
        if self.tok.kind != "end":
            raise ExprSyntaxError(self._found(), self.tok.offset,
                                  expected="operator or end of input")
        return node

    def expression(self, rbp: int) -> Node:
        left = self.prefix()
        while self.tok.kind == "op" and _INFIX_BP.get(self.tok.text, -1) > rbp:
            op = self.advance().text
            bp = _INFIX_BP[op]
            if op == "^":
                # right operand may itself start with a unary minus: 2^-3
                right = self.expression(bp - 1)
            else:
                right = self.expression(bp)
            left = BinOp(op, left, right)
        return left

    def prefix(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.tok.text == "(" and self.tok.kind == "op":
                if tok.text not in FUNCTIONS:
                    raise UnknownFunctionError(tok.text, tok.offset)
                self.advance()
                arg = self.expression(0)
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ExprSyntaxError(self._found(), self.tok.offset, expected="'('")
            return Name(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expression(0)
            self.expect(")")
            return node
        if tok.kind == "op" and tok.text in "-+":
            self.advance()
            operand = self.expression(_UNARY_BP)
            return Neg(operand) if tok.text == "-" else operand
        raise ExprSyntaxError(self._found(), tok.offset, expected="number, name or '('")


# --------------------------------------------------------------------------
# evaluation backends

def _m_div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a == 0.0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _m_pow(a, b):
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf
    except ValueError:
        if a == 0.0:
            return math.inf
        raise DomainError(f"negative base {a!r} raised to non-integer power {b!r}")


def _m_exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def _m_log(a):
    if a <= 0.0:
        raise DomainError(f"log of non-positive value {a!r}")
    return math.log(a)


def _m_sqrt(a):
    if a < 0.0:
        raise DomainError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


_MATH_FUNCS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "arctan": math.atan,
    "exp": _m_exp, "log": _m_log, "sqrt": _m_sqrt, "abs": abs,
}


def _np_log(a):
    if np.any(np.asarray(a) <= 0.0):
        raise DomainError("log of non-positive value")
    return np.log(a)


def _np_sqrt(a):
    if np.any(np.asarray(a) < 0.0):
        raise DomainError("sqrt of negative value")
    return np.sqrt(a)


def _np_pow(a, b):
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    bad = (a_arr < 0.0) & (b_arr != np.round(b_arr))
    if np.any(bad):
        raise DomainError("negative base raised to non-integer power")
    with np.errstate(divide="ignore", over="ignore"):
        return np.power(a_arr, b_arr)


def _np_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.divide(a, b)


def _np_exp(a):
    with np.errstate(over="ignore"):
        return np.exp(a)


_NUMPY_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "arctan": np.arctan,
    "exp": _np_exp, "log": _np_log, "sqrt": _np_sqrt, "abs": np.abs,
}

_BACKENDS = {
    "math": (_MATH_FUNCS, _m_div, _m_pow),
    "numpy": (_NUMPY_FUNCS, _np_div, _np_pow),
}


def _compile(node: Node, env: Mapping[str, float], backend: str) -> Callable:
    funcs, div, pow_ = _BACKENDS[backend]

    def build(n: Node) -> Callable:
        if isinstance(n, Num):
            v = n.value
            return lambda x: v
        if isinstance(n, Name):
            if n.name == VARIABLE:
                return lambda x: x
            v = float(env[n.name])
            return lambda x: v
        if isinstance(n, Neg):
            f = build(n.operand)
            return lambda x: -f(x)
        if isinstance(n, Call):
            f, fn = build(n.arg), funcs[n.func]
            return lambda x: fn(f(x))
        lf, rf = build(n.left), build(n.right)
        if n.op == "+":
            return lambda x: lf(x) + rf(x)
        if n.op == "-":
            return lambda x: lf(x) - rf(x)
        if n.op == "*":
            return lambda x: lf(x) * rf(x)
        if n.op == "/":
            return lambda x: div(lf(x), rf(x))
        return lambda x: pow_(lf(x), rf(x))

    return build(node)


def _to_text(n: Node) -> str:
    if isinstance(n, Num):
        return repr(n.value)
    if isinstance(n, Name):
        return n.name
    if isinstance(n, Neg):
        return f"(-{_to_text(n.operand)})"
    if isinstance(n, Call):
        return f"{n.func}({_to_text(n.arg)})"
    return f"({_to_text(n.left)} {n.op} {_to_text(n.right)})"


def _names(n: Node, acc: set) -> set:
    if isinstance(n, Name):
        acc.add(n.name)
    elif isinstance(n, Neg):
        _names(n.operand, acc)
    elif isinstance(n, Call):
        _names(n.arg, acc)
    elif isinstance(n, BinOp):
        _names(n.left, acc)
        _names(n.right, acc)
    return acc


# --------------------------------------------------------------------------
# public surface

@dataclass(frozen=True)
class Expr:
    """An immutable parsed expression."""

    root: Node
    source: str = ""

    @property
    def identifiers(self) -> frozenset[str]:
        return frozenset(_names(self.root, set()))

    @property
    def parameters(self) -> frozenset[str]:
        """Free identifiers other than the variable ``x``."""
        return self.identifiers - {VARIABLE}

    def compile(self, params: Mapping[str, float] | None = None,
                vectorized: bool = False) -> Callable:
        """Return ``f(x)`` with *params* bound.

        The scalar version raises :class:`DomainError` rather than returning
        NaN; the vectorised one does the same if any element is out of domain.
        """
        params = dict(params or {})
        missing = self.parameters - params.keys()
        if missing:
            raise UnboundIdentifierError(missing)
        return _compile(self.root, params, "numpy" if vectorized else "math")

    def evaluate(self, x, params: Mapping[str, float] | None = None):
        value = self.compile(params, vectorized=not np.isscalar(x))(x)
        if not np.all(np.isfinite(value)):
            warnings.warn(f"non-finite result evaluating {self.source or str(self)!r}",
                          NonFiniteWarning, stacklevel=2)
        return value

    def __str__(self) -> str:
        return _to_text(self.root)


def parse(text: str) -> Expr:
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, expected="an expression")
    return Expr(_Parser(text).parse(), text)


def evaluate(e: Expr, x, params: Mapping[str, float] | None = None):
    return e.evaluate(x, params)
