"""Coefficient expressions: a small arithmetic language evaluated as jets.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | atom ("^" ["-"] integer)?
    atom   := number | ident | "(" expr ")" | func "(" expr ")"

``ident`` is ``x`` followed by digits (``x0``, ``x1``, ...) and ``func`` is one
of ``sin``, ``cos``, ``exp``.  Numbers are decimal literals with an optional
exponent.  Every node remembers the offset of its first character so that
parse and domain errors can point into the source text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .jets import Jet2


class ExprError(Exception):
    """Base class for expression errors; ``offset`` indexes the source text."""

    def __init__(self, message: str, offset: int, source: str = ""):
        self.message = message
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class ParseError(ExprError):
    pass


class DomainError(ExprError):
    pass


FUNCS = ("sin", "cos", "exp")


# -- AST ------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    index: int
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Node"
    pos: int = field(default=0, compare=False)


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


# -- tokenizer and parser -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", bad, source)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = dim
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.source)

    def expect(self, text):
        tok = self.take()
        if tok[1] != text:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {text!r}, found {found}", tok)
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            node = BinOp(op, node, self.factor(), pos)
        return node

    def factor(self) -> Node:
        if self.peek()[1] == "-":
            pos = self.take()[2]
            return Neg(self.factor(), pos)
        node = self.atom()
        if self.peek()[1] == "^":
            pos = self.take()[2]
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                raise self.error("exponent must be an integer", tok)
            node = Pow(node, sign * int(tok[1]), pos)
        return node

    def atom(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text), pos)
        if kind == "name":
            if text in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg, pos)
            m = re.fullmatch(r"x(\d+)", text)
            if m is None:
                raise ParseError(f"unknown identifier {text!r}", pos, self.source)
            index = int(m.group(1))
            if index >= self.dim:
                raise ParseError(f"variable {text} out of range for dimension {self.dim}", pos, self.source)
            return Var(index, pos)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected a number, variable or '(', found {found}", pos, self.source)


# -- printer ----------------------------------------------------------------------

_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2}


def _level(node: Node) -> int:
    if isinstance(node, BinOp):
        return _LEVEL[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    if isinstance(node, Num) and node.value < 0:
        return 0
    return 5


def _num_text(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def to_source(node: Node) -> str:
    """Print an AST so that parsing the text gives back the same tree."""
    if isinstance(node, Num):
        text = _num_text(abs(node.value))
        return f"(-{text})" if node.value < 0 else text
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Call):
        return f"{node.name}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        return f"-{inner}" if _level(node.arg) >= 3 else f"-({inner})"
    if isinstance(node, Pow):
        inner = to_source(node.base)
        if _level(node.base) < 5:
            inner = f"({inner})"
        return f"{inner}^{node.exponent}"
    lvl = _LEVEL[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if _level(node.left) < lvl:
        left = f"({left})"
    if _level(node.right) <= lvl:
        right = f"({right})"
    sep = f" {node.op} " if lvl == 1 else node.op
    return f"{left}{sep}{right}"


# -- evaluation -------------------------------------------------------------------

def _eval(node: Node, points: np.ndarray, order: int, source: str) -> Jet2:
    dim = points.shape[-1]
    batch = points.shape[:-1]
    if isinstance(node, Num):
        return Jet2.constant(np.full(batch, node.value), dim, order)
    if isinstance(node, Var):
        return Jet2.coordinate(points, node.index, order)
    if isinstance(node, Neg):
        return -_eval(node.arg, points, order, source)
    if isinstance(node, Call):
        arg = _eval(node.arg, points, order, source)
        return getattr(arg, node.name)()
    if isinstance(node, Pow):
        base = _eval(node.base, points, order, source)
        if node.exponent < 0 and np.any(base.value == 0.0):
            raise DomainError("zero raised to a negative power", node.pos, source)
        return base ** node.exponent
    left = _eval(node.left, points, order, source)
    right = _eval(node.right, points, order, source)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if np.any(right.value == 0.0):
        raise DomainError("division by zero", _start(node.right), source)
    return left / right


def _start(node: Node) -> int:
    """Offset of the leftmost character of a sub-expression."""
    while isinstance(node, BinOp):
        node = node.left
    if isinstance(node, Pow):
        return _start(node.base)
    return node.pos


def substitute(node: Node, replacements: Sequence[Node]) -> Node:
    """Replace each variable ``x{i}`` by ``replacements[i]``."""
    if isinstance(node, Var):
        return replacements[node.index]
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, replacements))
    if isinstance(node, Call):
        return Call(node.name, substitute(node.arg, replacements))
    if isinstance(node, Pow):
        return Pow(substitute(node.base, replacements), node.exponent)
    return BinOp(node.op, substitute(node.left, replacements), substitute(node.right, replacements))


def is_zero(node: Node) -> bool:
    return isinstance(node, Num) and node.value == 0.0


class SmoothFunction:
    """A scalar coefficient function on a ``dim``-dimensional chart."""

    __slots__ = ("ast", "dim", "source")

    def __init__(self, ast: Node, dim: int, source: str | None = None):
        self.ast = ast
        self.dim = dim
        self.source = to_source(ast) if source is None else source

    @classmethod
    def parse(cls, source: str, dim: int) -> "SmoothFunction":
        return cls(parse(source, dim), dim, source)

    @classmethod
    def constant(cls, value: float, dim: int) -> "SmoothFunction":
        return cls(Num(float(value)), dim)

    @property
    def is_zero(self) -> bool:
        return is_zero(self.ast)

    def jet(self, points, order: int = 2) -> Jet2:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {points.shape[-1]}")
        return _eval(self.ast, points, order, self.source)

    def __call__(self, points) -> np.ndarray:
        return self.jet(points, 0).value

    def compose(self, inner: Sequence["SmoothFunction"]) -> "SmoothFunction":
        """``self`` evaluated at the point ``(inner[0](y), inner[1](y), ...)``."""
        if len(inner) != self.dim:
            raise ValueError("composition needs one inner function per variable")
        dims = {f.dim for f in inner}
        if len(dims) != 1:
            raise ValueError("inner functions must share a dimension")
        return SmoothFunction(substitute(self.ast, [f.ast for f in inner]), dims.pop())

    def __str__(self) -> str:
        return self.source

    def __repr__(self) -> str:
        return f"SmoothFunction({self.source!r}, dim={self.dim})"


def parse(source: str, dim: int) -> Node:
    """Parse ``source`` into an AST over variables ``x0 .. x{dim-1}``."""
    return _Parser(source, dim).parse()


def as_function(value, dim: int) -> SmoothFunction:
    """Coerce a string, number or SmoothFunction into a SmoothFunction."""
    if isinstance(value, SmoothFunction):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return SmoothFunction.constant(float(value), dim)
    return SmoothFunction.parse(str(value), dim)


def eval_jet2(f: SmoothFunction, x) -> Jet2:
    """Value, gradient and Hessian of ``f`` at ``x`` (a point or a batch of points)."""
    return f.jet(x, 2)
