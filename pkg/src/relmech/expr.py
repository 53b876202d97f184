"""Scenario expression language: tokenizer, parser, printer and evaluator.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'

so ``^`` binds tighter than unary minus (``-x^2 == -(x^2)``) and is
right-associative, while ``* / + -`` associate to the left.  Identifiers are
``t``, ``q1..qm``, ``v1..vm`` (``v`` is the velocity slot), ``pi``, and any
named constant bound when parsing.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import ad

__all__ = [
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "VariableIndexError",
    "EvaluationError",
    "Node",
    "Num",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "Expression",
    "parse_expression",
    "to_source",
    "eval_ad",
    "FUNCTIONS",
]

FUNCTIONS = {
    "sin": ad.sin,
    "cos": ad.cos,
    "exp": ad.exp,
    "log": ad.log,
    "sqrt": ad.sqrt,
}

BUILTIN_CONSTANTS = {"pi": math.pi}


class ExpressionError(ValueError):
    """Base class for problems with a scenario expression."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ExprSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class VariableIndexError(ExpressionError):
    pass


class EvaluationError(ArithmeticError):
    """Evaluation left the domain of an elementary function."""

    def __init__(self, message: str, subexpression: str):
        self.subexpression = subexpression
        super().__init__(f"{message} in '{subexpression}'")


# -- AST --------------------------------------------------------------------


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Const(Node):
    name: str
    value: float


@dataclass(frozen=True)
class Var(Node):
    kind: str  # 't', 'q' or 'v'
    index: int = 0  # 1-based for q/v, 0 for t

    @property
    def name(self) -> str:
        return "t" if self.kind == "t" else f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    left: Node
    right: Node


class Add(BinOp):
    pass


class Sub(BinOp):
    pass


class Mul(BinOp):
    pass


class Div(BinOp):
    pass


class Pow(BinOp):
    pass


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _line_col(src: str, pos: int) -> tuple[int, int]:
    line = src.count("\n", 0, pos) + 1
    col = pos - (src.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            line, col = _line_col(src, pos)
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if text == "**":
                text = "^"
            toks.append(_Tok(kind, text, pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


_VAR = re.compile(r"([qv])([0-9]+)$")


class _Parser:
    def __init__(self, src: str, m: int, constants: Mapping[str, float]):
        self.src = src
        self.m = m
        self.constants = constants
        self.toks = _tokenize(src)
        self.i = 0

    def error(self, cls, msg, tok=None):
        tok = tok or self.toks[self.i]
        line, col = _line_col(self.src, tok.pos)
        return cls(msg, line, col)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(ExprSyntaxError, f"expected {text!r}, found {found!r}")

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(ExprSyntaxError, f"unexpected {self.tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            if self.accept("+"):
                node = Add(node, self.term())
            elif self.accept("-"):
                node = Sub(node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            if self.accept("*"):
                node = Mul(node, self.factor())
            elif self.accept("/"):
                node = Div(node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        if self.accept("-"):
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return Pow(base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            return self.identifier(tok)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.error(ExprSyntaxError, f"unexpected {found!r}")

    def identifier(self, tok: _Tok) -> Node:
        name = tok.text
        if name in FUNCTIONS:
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Call(name, arg)
        if name == "t":
            return Var("t")
        m = _VAR.match(name)
        if m:
            index = int(m.group(2))
            if not 1 <= index <= self.m:
                raise self.error(
                    VariableIndexError,
                    f"variable index out of range: {name} (dimension {self.m})",
                    tok,
                )
            return Var(m.group(1), index)
        if name in self.constants:
            return Const(name, float(self.constants[name]))
        if name in BUILTIN_CONSTANTS:
            return Const(name, BUILTIN_CONSTANTS[name])
        raise self.error(UnknownIdentifierError, f"unknown identifier {name!r}", tok)


# -- printing ---------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_SYMBOL = {Add: " + ", Sub: " - ", Mul: "*", Div: "/", Pow: "^"}


def _prec(node: Node) -> int:
    return _PREC.get(type(node), 5)


def _fmt_num(x: float) -> str:
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def to_source(node: Node) -> str:
    """Print ``node`` with the minimal parentheses that re-parse to the same tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        return "-" + (f"({inner})" if _prec(node.arg) < 3 else inner)
    if isinstance(node, BinOp):
        p = _prec(node)
        left, right = to_source(node.left), to_source(node.right)
        if isinstance(node, Pow):
            if _prec(node.left) <= 4:
                left = f"({left})"
            if _prec(node.right) < 3:
                right = f"({right})"
        else:
            if _prec(node.left) < p:
                left = f"({left})"
            if _prec(node.right) <= p:
                right = f"({right})"
        return left + _SYMBOL[type(node)] + right
    raise TypeError(f"not an expression node: {node!r}")


# -- evaluation -------------------------------------------------------------


def _compile(node: Node):
    """Turn the tree into nested closures ``f(t, q, v)``; generic over jets."""
    if isinstance(node, Num) or isinstance(node, Const):
        c = node.value
        return lambda t, q, v: c
    if isinstance(node, Var):
        if node.kind == "t":
            return lambda t, q, v: t
        k = node.index - 1
        if node.kind == "q":
            return lambda t, q, v: q[k]
        return lambda t, q, v: v[k]
    if isinstance(node, Neg):
        f = _compile(node.arg)
        return lambda t, q, v: -f(t, q, v)
    if isinstance(node, Call):
        f = _compile(node.arg)
        fn = FUNCTIONS[node.func]
        text = to_source(node)

        def call(t, q, v):
            x = f(t, q, v)
            try:
                return fn(x)
            except ad.DomainError as exc:
                raise EvaluationError(str(exc), text) from None

        return call
    if isinstance(node, BinOp):
        a, b = _compile(node.left), _compile(node.right)
        if isinstance(node, Add):
            return lambda t, q, v: a(t, q, v) + b(t, q, v)
        if isinstance(node, Sub):
            return lambda t, q, v: a(t, q, v) - b(t, q, v)
        if isinstance(node, Mul):
            return lambda t, q, v: a(t, q, v) * b(t, q, v)
        text = to_source(node)
        if isinstance(node, Div):
            def div(t, q, v):
                x, y = a(t, q, v), b(t, q, v)
                if np.any(ad.primal(y) == 0):
                    raise EvaluationError("division by zero", text)
                return x / y

            return div

        def pw(t, q, v):
            try:
                return ad.power(a(t, q, v), b(t, q, v))
            except ad.DomainError as exc:
                raise EvaluationError(str(exc), text) from None

        return pw
    raise TypeError(f"not an expression node: {node!r}")


@dataclass(frozen=True)
class Expression:
    """A parsed scalar expression over ``t``, ``q1..qm`` and ``v1..vm``."""

    ast: Node
    m: int
    source: str = ""
    _fn: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_fn", _compile(self.ast))

    def __call__(self, t, q: Sequence, v: Sequence = ()):
        return self._fn(t, q, v)

    def __str__(self) -> str:
        return to_source(self.ast)

    @property
    def variables(self) -> set[str]:
        found = set()

        def walk(node):
            if isinstance(node, Var):
                found.add(node.name)
            elif isinstance(node, (Neg, Call)):
                walk(node.arg)
            elif isinstance(node, BinOp):
                walk(node.left)
                walk(node.right)

        walk(self.ast)
        return found

    def uses_velocity(self) -> bool:
        return any(name.startswith("v") for name in self.variables)


def parse_expression(src: str, m: int, constants: Mapping[str, float] | None = None) -> Expression:
    if m < 1:
        raise ValueError("dimension must be positive")
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 1, 1)
    node = _Parser(src, m, constants or {}).parse()
    return Expression(node, m, src)


def eval_ad(e: Expression, p, seeds: Sequence[str] = (), order: int = 2) -> ad.Taylor2:
    """Evaluate ``e`` at jet point ``p`` differentiating w.r.t. the named ``seeds``.

    The gradient is ordered as ``seeds``.
    """
    if len(p.q) != e.m:
        raise ValueError(f"point has dimension {len(p.q)}, expression expects {e.m}")
    t, q, v = p.t, list(p.q), list(p.v)
    slots = []
    for name in seeds:
        if name == "t":
            slots.append(("t", 0))
            continue
        m = _VAR.match(name)
        if not m or not 1 <= int(m.group(2)) <= e.m:
            raise VariableIndexError(f"cannot seed unknown variable {name!r}")
        slots.append((m.group(1), int(m.group(2)) - 1))
    base = [t if k == "t" else (q if k == "q" else v)[i] for k, i in slots]
    xs = ad.seed(base, order=order)
    for (k, i), x in zip(slots, xs):
        if k == "t":
            t = x
        elif k == "q":
            q[i] = x
        else:
            v[i] = x
    y = e(t, q, v)
    if xs and isinstance(y, ad.Taylor2) and y.tag == xs[0].tag:
        return y
    n = len(xs)
    tag = xs[0].tag if xs else 0
    return ad.Taylor2(tag, y, (0.0,) * n, (0.0,) * (n * (n + 1) // 2) if order == 2 else None)
