"""Arithmetic expressions for coefficient fields R(x) and S(x).

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := atom (('^' | '**') unary)?
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Names are the coordinates ``x``, ``y``, ``z`` (aliases ``x1``, ``x2``, ``x3``;
``x4`` ... for higher dimensions) and the constants ``pi`` and ``e``.
Functions: ``exp``, ``sin``, ``cos``, ``sqrt``, ``abs``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Expression", "ExpressionError", "parse_expression"]


class ExpressionError(ValueError):
    """Raised on a malformed expression; ``position`` is a 0-based column."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at column {position + 1})"
        super().__init__(message)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)

_FUNCTIONS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_CONSTANTS = {"pi": np.pi, "e": np.e}
_COORD_ALIASES = {"x": 0, "y": 1, "z": 2}


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


# AST nodes are plain tuples: ("num", v) | ("var", axis) | ("neg", a)
# | ("bin", op, a, b) | ("call", fname, a)


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            got = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, got {got}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return ("neg", self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return ("num", float(val))
        if kind == "name":
            if val in _FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", val, arg)
            if val in _CONSTANTS:
                return ("num", _CONSTANTS[val])
            if val in _COORD_ALIASES:
                return ("var", _COORD_ALIASES[val])
            m = re.fullmatch(r"x([1-9][0-9]*)", val)
            if m:
                return ("var", int(m.group(1)) - 1)
            raise ExpressionError(f"unknown name {val!r}", pos)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {got}", pos)


def _max_axis(node):
    tag = node[0]
    if tag == "var":
        return node[1]
    if tag == "num":
        return -1
    if tag in ("neg", "call"):
        return _max_axis(node[-1])
    return max(_max_axis(node[2]), _max_axis(node[3]))


def _eval(node, points):
    tag = node[0]
    if tag == "num":
        return np.full(points.shape[0], node[1])
    if tag == "var":
        return points[:, node[1]]
    if tag == "neg":
        return -_eval(node[1], points)
    if tag == "call":
        return _FUNCTIONS[node[1]](_eval(node[2], points))
    a, b = _eval(node[2], points), _eval(node[3], points)
    op = node[1]
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return a**b


@dataclass(frozen=True)
class Expression:
    """A parsed coefficient expression, compared by its source text."""

    text: str
    _ast: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_ast", _Parser(self.text).parse())

    @property
    def max_axis(self):
        """Largest coordinate index referenced, or -1 for a constant."""
        return _max_axis(self._ast)

    @property
    def is_constant(self):
        return self.max_axis < 0

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.max_axis >= points.shape[1]:
            raise ExpressionError(
                f"expression {self.text!r} uses coordinate x{self.max_axis + 1} "
                f"but points have dimension {points.shape[1]}"
            )
        with np.errstate(all="ignore"):
            return np.asarray(_eval(self._ast, points), dtype=float)

    def __str__(self):
        return self.text


def parse_expression(value) -> Expression:
    """Coerce a string or number into an :class:`Expression`."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float, np.floating)):
        return Expression(format(float(value), ".17g"))
    return Expression(str(value).strip())
