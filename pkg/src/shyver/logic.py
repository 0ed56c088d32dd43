"""MITL and iLTL formulas over linear-inequality atoms.

Formulas are immutable trees kept in negation normal form: the parser pushes
every ``!`` down to the atoms (flipping the relation) and through the
temporal operators (``U`` and ``R`` are dual).  Thresholds are exact
rationals so strengthening and printing round-trip without drift.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "Interval",
    "Const",
    "Atom",
    "And",
    "Or",
    "Next",
    "Until",
    "Release",
    "Formula",
    "FormulaSyntaxError",
    "FormulaError",
    "MissingEpsilon",
    "UnboundObservable",
    "parse_formula",
    "negate",
    "strengthen",
    "atoms",
    "observables_of",
    "bind",
    "normalize_observable",
    "format_formula",
    "horizon",
    "size",
    "TRUE",
    "FALSE",
]

NEGATED = {">": "<=", ">=": "<", "<": ">=", "<=": ">"}


class FormulaError(ValueError):
    pass


class FormulaSyntaxError(FormulaError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


class MissingEpsilon(FormulaError):
    pass


class UnboundObservable(FormulaError):
    pass


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` on the non-negative reals; ``hi=None`` means ∞."""

    lo: Fraction = Fraction(0)
    hi: Fraction | None = None

    def __post_init__(self):
        if self.lo < 0:
            raise FormulaError("interval lower bound must be non-negative")
        if self.hi is not None and self.hi <= self.lo:
            raise FormulaError("interval must be non-singleton with lo < hi")

    @property
    def unbounded(self) -> bool:
        return self.hi is None

    def __str__(self) -> str:
        return f"[{_fmt(self.lo)},{'inf' if self.hi is None else _fmt(self.hi)}]"


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Atom:
    """``obs rel c`` with ``rel`` in ``< <= >= >``."""

    obs: str
    rel: str
    c: Fraction

    def holds(self, value: float) -> bool:
        v = value
        if self.rel == ">":
            return v > self.c
        if self.rel == ">=":
            return v >= self.c
        if self.rel == "<":
            return v < self.c
        return v <= self.c

    @property
    def upper(self) -> bool:
        """True for ``>``/``>=`` atoms (satisfied by large observable values)."""
        return self.rel in (">", ">=")


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    child: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"
    interval: Interval | None = None


@dataclass(frozen=True)
class Release:
    left: "Formula"
    right: "Formula"
    interval: Interval | None = None


Formula = Union[Const, Atom, And, Or, Next, Until, Release]
TRUE = Const(True)
FALSE = Const(False)


# --------------------------------------------------------------------------- printing


def _fmt(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    d = x.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d == 1 and max(twos, fives) <= 12:
        digits = max(twos, fives)
        scaled = x * 10 ** digits
        sign = "-" if scaled < 0 else ""
        s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
        return f"{sign}{s[:-digits]}.{s[-digits:]}"
    return f"{x.numerator}/{x.denominator}"


def format_formula(f: Formula) -> str:
    """Fully parenthesised surface syntax that parses back to the same tree."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"({f.obs} {f.rel} {_fmt(f.c)})"
    if isinstance(f, And):
        return f"({format_formula(f.left)} & {format_formula(f.right)})"
    if isinstance(f, Or):
        return f"({format_formula(f.left)} | {format_formula(f.right)})"
    if isinstance(f, Next):
        return f"(X {format_formula(f.child)})"
    op = "U" if isinstance(f, Until) else "R"
    iv = "" if f.interval is None else str(f.interval)
    return f"({format_formula(f.left)} {op}{iv} {format_formula(f.right)})"


# --------------------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?(?:/\d+)?|-?\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*(?:\[\d+\])?)"
    r"|(?P<op><=|>=|[<>()\[\],&|!]))"
)


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if not text[pos:].strip():
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, flavor: str):
        self.toks = _tokens(text)
        self.i = 0
        self.flavor = flavor

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise FormulaSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def formula(self):
        return self.disj()

    def disj(self):
        left = self.conj()
        while self.peek()[1] == "|":
            self.take()
            left = ("or", left, self.conj())
        return left

    def conj(self):
        left = self.unary()
        while self.peek()[1] == "&":
            self.take()
            left = ("and", left, self.unary())
        return left

    def unary(self):
        kind, val, pos = self.peek()
        if val == "!":
            self.take()
            return ("not", self.unary())
        if kind == "ident" and val == "X":
            if self.flavor == "mitl":
                raise FormulaSyntaxError("Next operator is not allowed in MITL", pos)
            self.take()
            return ("next", self.unary())
        return self.temporal()

    def temporal(self):
        left = self.primary()
        kind, val, pos = self.peek()
        if kind == "ident" and val in ("U", "R"):
            self.take()
            iv = None
            if self.peek()[1] == "[":
                if self.flavor == "iltl":
                    raise FormulaSyntaxError("intervals are not allowed in iLTL", self.peek()[2])
                iv = self.interval()
            elif self.flavor == "mitl":
                iv = Interval(Fraction(0), None)
            right = self.primary()
            return ("until" if val == "U" else "release", left, right, iv)
        return left

    def interval(self):
        _, _, pos = self.take("[")
        lo = self.number()
        self.take(",")
        kind, val, p2 = self.peek()
        if kind == "ident" and val == "inf":
            self.take()
            hi = None
        else:
            hi = self.number()
        self.take("]")
        if hi is not None and hi <= lo:
            raise FormulaSyntaxError("singleton or empty interval", pos)
        if lo < 0:
            raise FormulaSyntaxError("negative interval bound", pos)
        return Interval(lo, hi)

    def number(self) -> Fraction:
        kind, val, pos = self.take()
        if kind != "num":
            raise FormulaSyntaxError(f"expected a number, found {val or 'end of input'!r}", pos)
        return Fraction(val)

    def primary(self):
        kind, val, pos = self.peek()
        if val == "(":
            self.take()
            inner = self.formula()
            self.take(")")
            return inner
        if kind == "ident" and val in ("true", "false"):
            self.take()
            return ("const", val == "true")
        if kind == "ident" and val not in ("U", "R", "X", "inf"):
            self.take()
            rk, rel, rpos = self.take()
            if rel not in ("<", "<=", ">=", ">"):
                raise FormulaSyntaxError("expected a relation after the observable name", rpos)
            return ("atom", val, rel, self.number())
        raise FormulaSyntaxError(f"unexpected token {val or 'end of input'!r}", pos)


def _nnf(node, negate_: bool) -> Formula:
    tag = node[0]
    if tag == "not":
        return _nnf(node[1], not negate_)
    if tag == "const":
        return Const(node[1] != negate_)
    if tag == "atom":
        rel = NEGATED[node[2]] if negate_ else node[2]
        return Atom(node[1], rel, node[3])
    if tag in ("and", "or"):
        left, right = _nnf(node[1], negate_), _nnf(node[2], negate_)
        if (tag == "and") != negate_:
            return And(left, right)
        return Or(left, right)
    if tag == "next":
        return Next(_nnf(node[1], negate_))
    left, right = _nnf(node[1], negate_), _nnf(node[2], negate_)
    if (tag == "until") != negate_:
        return Until(left, right, node[3])
    return Release(left, right, node[3])


def parse_formula(text: str, flavor: str = "mitl") -> Formula:
    """Parse surface syntax into an NNF tree; ``flavor`` is ``"mitl"`` or ``"iltl"``."""
    flavor = flavor.lower()
    if flavor not in ("mitl", "iltl"):
        raise FormulaError(f"unknown flavor {flavor!r}")
    p = _Parser(text, flavor)
    tree = p.formula()
    if p.peek()[0] != "end":
        raise FormulaSyntaxError(f"trailing input {p.peek()[1]!r}", p.peek()[2])
    return _nnf(tree, False)


def negate(f: Formula) -> Formula:
    """NNF of ``¬f``."""
    if isinstance(f, Const):
        return Const(not f.value)
    if isinstance(f, Atom):
        return Atom(f.obs, NEGATED[f.rel], f.c)
    if isinstance(f, And):
        return Or(negate(f.left), negate(f.right))
    if isinstance(f, Or):
        return And(negate(f.left), negate(f.right))
    if isinstance(f, Next):
        return Next(negate(f.child))
    if isinstance(f, Until):
        return Release(negate(f.left), negate(f.right), f.interval)
    return Until(negate(f.left), negate(f.right), f.interval)


# --------------------------------------------------------------------------- traversal


def _map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, Atom):
        return fn(f)
    if isinstance(f, Const):
        return f
    if isinstance(f, Next):
        return Next(_map_atoms(f.child, fn))
    return replace(f, left=_map_atoms(f.left, fn), right=_map_atoms(f.right, fn))


def _children(f: Formula):
    if isinstance(f, (Const, Atom)):
        return ()
    if isinstance(f, Next):
        return (f.child,)
    return (f.left, f.right)


def atoms(f: Formula) -> list[Atom]:
    """Distinct atoms in pre-order of first occurrence."""
    out: list[Atom] = []
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom) and node not in out:
            out.append(node)
        stack.extend(reversed(_children(node)))
    return out


def observables_of(f: Formula) -> list[str]:
    seen = []
    for a in atoms(f):
        if a.obs not in seen:
            seen.append(a.obs)
    return seen


def size(f: Formula) -> int:
    return 1 + sum(size(c) for c in _children(f))


def horizon(f: Formula):
    """Time needed to decide ``f``: ``sup I`` plus the children's horizon (``None`` if unbounded)."""
    if isinstance(f, (Const, Atom)):
        return Fraction(0)
    if isinstance(f, Next):
        h = horizon(f.child)
        return None if h is None else h + 1
    hl, hr = horizon(f.left), horizon(f.right)
    if hl is None or hr is None:
        return None
    if isinstance(f, (Until, Release)):
        if f.interval is None or f.interval.hi is None:
            return None
        return f.interval.hi + max(hl, hr)
    return max(hl, hr)


def bind(f: Formula, names: Iterable[str]) -> None:
    """Raise :class:`UnboundObservable` if ``f`` uses an observable outside ``names``."""
    known = set(names)
    for name in observables_of(f):
        if name not in known:
            raise UnboundObservable(f"formula references undeclared observable {name!r}")


# --------------------------------------------------------------------------- strengthening


def strengthen(f: Formula, eps: Mapping[str, object]) -> Formula:
    """Tighten every atom by its observable's error budget (``>`` / ``>=`` up, ``<`` / ``<=`` down)."""

    def tighten(a: Atom) -> Atom:
        if a.obs not in eps:
            raise MissingEpsilon(f"no error budget for observable {a.obs!r}")
        e = Fraction(eps[a.obs])
        if e < 0:
            raise FormulaError("error budgets must be non-negative")
        return Atom(a.obs, a.rel, a.c + e if a.upper else a.c - e)

    return _map_atoms(f, tighten)


def normalize_observable(name: str, weights, f: Formula):
    """Scale ``weights`` to max-abs 1 and divide every threshold on ``name`` by the same factor.

    Returns ``(weights / s, formula)`` with ``s = max|weights|``.  Scaling by
    a positive factor keeps every relation's direction.
    """
    w = np.asarray(weights, dtype=float)
    s = float(np.max(np.abs(w), initial=0.0))
    if s == 0.0:
        raise FormulaError(f"observable {name!r} has identically zero weight")
    scale = Fraction(s)
    g = _map_atoms(f, lambda a: Atom(a.obs, a.rel, a.c / scale) if a.obs == name else a)
    return w / s, g
