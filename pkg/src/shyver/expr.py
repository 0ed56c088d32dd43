"""Polynomial expressions in the state ``x`` with an optional ``norm_inf(x)`` term.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*     # divisors must be constant
    factor := ('-' | '+') factor | power
    power  := atom ('^' integer)?
    atom   := number | 'x[' integer ']' | 'norm_inf(x)' | '(' expr ')'

Expressions evaluate vectorised over an ``(npts, d)`` array of points.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = ["Expr", "ExprError", "parse_expr", "constant"]


class ExprError(ValueError):
    """Raised for malformed or unsupported expression text."""


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<var>x\s*\[\s*\d+\s*\])"
    r"|(?P<norm>norm_inf\s*\(\s*x\s*\))"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class Expr:
    """Expression tree node.

    ``kind`` is one of ``const``, ``var``, ``norm``, ``add``, ``mul``, ``neg``, ``pow``.
    """

    kind: str
    value: float = 0.0
    index: int = 0
    args: tuple["Expr", ...] = ()
    text: str = ""

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(self._eval(pts), (pts.shape[0],)).astype(float)

    def _eval(self, pts):
        k = self.kind
        if k == "const":
            return np.full(pts.shape[0], self.value)
        if k == "var":
            if self.index >= pts.shape[1]:
                raise ExprError(f"x[{self.index}] out of range for dimension {pts.shape[1]}")
            return pts[:, self.index]
        if k == "norm":
            return np.max(np.abs(pts), axis=1)
        if k == "neg":
            return -self.args[0]._eval(pts)
        if k == "add":
            out = self.args[0]._eval(pts)
            for a in self.args[1:]:
                out = out + a._eval(pts)
            return out
        if k == "mul":
            out = self.args[0]._eval(pts)
            for a in self.args[1:]:
                out = out * a._eval(pts)
            return out
        if k == "pow":
            return self.args[0]._eval(pts) ** self.index
        raise ExprError(f"unknown node {k}")

    @property
    def degree(self) -> int:
        """Polynomial degree, counting ``norm_inf(x)`` as degree one."""
        k = self.kind
        if k == "const":
            return 0
        if k in ("var", "norm"):
            return 1
        if k == "neg":
            return self.args[0].degree
        if k == "add":
            return max(a.degree for a in self.args)
        if k == "mul":
            return sum(a.degree for a in self.args)
        return self.args[0].degree * self.index

    @property
    def has_norm(self) -> bool:
        return self.kind == "norm" or any(a.has_norm for a in self.args)

    @property
    def is_constant(self) -> bool:
        return self.degree == 0

    def constant_value(self) -> float:
        return float(self(np.zeros((1, max(self.max_index() + 1, 1))))[0])

    def max_index(self) -> int:
        own = self.index if self.kind == "var" else -1
        return max([own] + [a.max_index() for a in self.args])

    def __str__(self) -> str:
        return self.text or repr(self)


def constant(value: float) -> Expr:
    return Expr("const", value=float(value), text=repr(float(value)))


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprError(f"unexpected character {text[pos:pos + 1]!r} at position {pos}")
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

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ExprError(f"expected {value!r} at position {tok[2]} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            raise ExprError(f"trailing input at position {self.peek()[2]} in {self.text!r}")
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else Expr("neg", args=(t,)))
        return terms[0] if len(terms) == 1 else Expr("add", args=tuple(terms))

    def term(self) -> Expr:
        factors = [self.factor()]
        while self.peek()[1] in ("*", "/"):
            op, pos = self.take()[1], self.peek()[2]
            f = self.factor()
            if op == "/":
                if not f.is_constant:
                    raise ExprError(f"division by a non-constant at position {pos}")
                value = f.constant_value()
                if value == 0:
                    raise ExprError(f"division by zero at position {pos}")
                f = Expr("const", value=1.0 / value)
            factors.append(f)
        return factors[0] if len(factors) == 1 else Expr("mul", args=tuple(factors))

    def factor(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return Expr("neg", args=(self.factor(),))
        if self.peek()[1] == "+":
            self.take()
            return self.factor()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            kind, val, pos = self.take()
            if kind != "num" or not val.isdigit():
                raise ExprError(f"exponent must be a non-negative integer at position {pos}")
            return Expr("pow", index=int(val), args=(base,))
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return Expr("const", value=float(val))
        if kind == "var":
            self.take()
            return Expr("var", index=int(re.search(r"\d+", val).group()))
        if kind == "norm":
            self.take()
            return Expr("norm")
        if val == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        raise ExprError(f"unexpected token {val!r} at position {pos} in {self.text!r}")


def parse_expr(text) -> Expr:
    """Parse an expression string (numbers are accepted as constants)."""
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float)):
        return constant(text)
    e = _Parser(str(text)).parse()
    return Expr(e.kind, e.value, e.index, e.args, str(text))
