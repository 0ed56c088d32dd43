"""Büchi automata for iLTL: tableau construction, lasso words and emptiness.

Letters are valuations of a fixed tuple of *propositions*.  Each proposition
is the upper form of an atom (``y > c`` or ``y >= c``); the complementary
atom (``y <= c`` or ``y < c``) is its negative literal.  Transitions carry a
guard ``(pos, neg)`` of bitmasks: a letter ``a`` (bitmask of true
propositions) satisfies it iff ``pos ⊆ a`` and ``neg ∩ a = ∅``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..logic import NEGATED, And, Atom, Const, Formula, Next, Or, Release, Until, atoms, format_formula

__all__ = [
    "BuchiAutomaton",
    "LassoWord",
    "propositions",
    "literal",
    "ltl_to_buchi",
    "lasso_automaton",
    "is_intersection_empty",
    "accepts_lasso",
]


def literal(a: Atom) -> tuple[Atom, bool]:
    """Proposition and polarity of an atom."""
    if a.upper:
        return a, True
    return Atom(a.obs, NEGATED[a.rel], a.c), False


def propositions(f: Formula) -> tuple[Atom, ...]:
    out: list[Atom] = []
    for a in atoms(f):
        p, _ = literal(a)
        if p not in out:
            out.append(p)
    return tuple(out)


@dataclass
class BuchiAutomaton:
    props: tuple
    n_states: int
    transitions: list  # (src, pos, neg, dst)
    initial: frozenset
    accepting: frozenset
    names: list = field(default_factory=list)

    def __post_init__(self):
        self._succ = [[] for _ in range(self.n_states)]
        for s, pos, neg, d in self.transitions:
            self._succ[s].append((pos, neg, d))

    def successors(self, s: int):
        return self._succ[s]

    def step(self, states, letter: int) -> set:
        out = set()
        for s in states:
            for pos, neg, d in self._succ[s]:
                if pos & letter == pos and not neg & letter:
                    out.add(d)
        return out

    def letter_matrix(self, letter: int) -> np.ndarray:
        m = np.zeros((self.n_states, self.n_states), dtype=bool)
        for s, pos, neg, d in self.transitions:
            if pos & letter == pos and not neg & letter:
                m[s, d] = True
        return m

    def to_json(self) -> dict:
        def guard(pos, neg):
            lits = [format_formula(p) for k, p in enumerate(self.props) if pos >> k & 1]
            lits += ["!" + format_formula(p) for k, p in enumerate(self.props) if neg >> k & 1]
            return lits

        return {
            "props": [format_formula(p) if isinstance(p, Atom) else str(p) for p in self.props],
            "states": self.n_states,
            "initial": sorted(self.initial),
            "accepting": sorted(self.accepting),
            "transitions": [{"from": s, "to": d, "guard": guard(pos, neg)} for s, pos, neg, d in self.transitions],
        }


# --------------------------------------------------------------------------- tableau

_INIT = -1


def _key(f: Formula) -> str:
    return format_formula(f)


def _tableau(f: Formula):
    """Generalised Büchi tableau (state-labelled) for an NNF formula."""
    nodes: list[dict] = []
    index: dict = {}
    work = [(frozenset({_INIT}), frozenset({f}), frozenset(), frozenset())]
    while work:
        inc, new, old, nxt = work.pop()
        if not new:
            key = (old, nxt)
            if key in index:
                nodes[index[key]]["incoming"] |= inc
                continue
            nid = len(nodes)
            index[key] = nid
            nodes.append({"incoming": set(inc), "old": old, "next": nxt})
            work.append((frozenset({nid}), nxt, frozenset(), frozenset()))
            continue
        eta = min(new, key=_key)
        rest = new - {eta}
        old2 = old | {eta}
        if isinstance(eta, Const):
            if eta.value:
                work.append((inc, rest, old2, nxt))
            continue
        if isinstance(eta, Atom):
            if Atom(eta.obs, NEGATED[eta.rel], eta.c) in old:
                continue
            work.append((inc, rest, old2, nxt))
        elif isinstance(eta, And):
            work.append((inc, rest | ({eta.left, eta.right} - old), old2, nxt))
        elif isinstance(eta, Or):
            work.append((inc, rest | ({eta.left} - old), old2, nxt))
            work.append((inc, rest | ({eta.right} - old), old2, nxt))
        elif isinstance(eta, Next):
            work.append((inc, rest, old2, nxt | {eta.child}))
        elif isinstance(eta, Until):
            work.append((inc, rest | ({eta.left} - old), old2, nxt | {eta}))
            work.append((inc, rest | ({eta.right} - old), old2, nxt))
        elif isinstance(eta, Release):
            work.append((inc, rest | ({eta.right} - old), old2, nxt | {eta}))
            work.append((inc, rest | ({eta.left, eta.right} - old), old2, nxt))
        else:
            raise TypeError(f"unsupported node {eta!r}")
    return nodes


def _subformulas(f: Formula):
    seen = []
    stack = [f]
    while stack:
        g = stack.pop()
        if g in seen:
            continue
        seen.append(g)
        if isinstance(g, Next):
            stack.append(g.child)
        elif isinstance(g, (And, Or, Until, Release)):
            stack.extend([g.left, g.right])
    return seen


def ltl_to_buchi(f: Formula, props: Sequence[Atom] | None = None) -> BuchiAutomaton:
    """Büchi automaton accepting exactly the infinite words satisfying ``f``."""
    props = tuple(props) if props is not None else propositions(f)
    pidx = {p: k for k, p in enumerate(props)}
    nodes = _tableau(f)
    untils = [g for g in _subformulas(f) if isinstance(g, Until)]
    fsets = [{i for i, nd in enumerate(nodes) if u not in nd["old"] or u.right in nd["old"]} for u in untils]
    if not fsets:
        fsets = [set(range(len(nodes)))]
    k = len(fsets)

    guards = []
    for nd in nodes:
        pos = neg = 0
        for lit in nd["old"]:
            if isinstance(lit, Atom):
                p, positive = literal(lit)
                if p not in pidx:
                    raise ValueError(f"atom {format_formula(lit)} is not among the automaton propositions")
                if positive:
                    pos |= 1 << pidx[p]
                else:
                    neg |= 1 << pidx[p]
        guards.append((pos, neg))
    succ_nodes: dict[int, list[int]] = {}
    for q, nd in enumerate(nodes):
        for p in nd["incoming"]:
            succ_nodes.setdefault(p, []).append(q)

    ids = {(_INIT, 0): 0}
    order = [(_INIT, 0)]
    trans = []
    queue = deque([(_INIT, 0)])
    while queue:
        p, i = queue.popleft()
        j = (i + 1) % k if p != _INIT and p in fsets[i] else i
        for q in sorted(succ_nodes.get(p, [])):
            tgt = (q, j)
            if tgt not in ids:
                ids[tgt] = len(order)
                order.append(tgt)
                queue.append(tgt)
            trans.append((ids[(p, i)], guards[q][0], guards[q][1], ids[tgt]))
    accepting = frozenset(ids[(q, i)] for (q, i) in order if q != _INIT and i == k - 1 and q in fsets[k - 1])
    return BuchiAutomaton(props, len(order), trans, frozenset({0}), accepting, [str(s) for s in order])


# --------------------------------------------------------------------------- lasso words


@dataclass(frozen=True)
class LassoWord:
    """``prefix · cycle^ω`` where each letter maps proposition index to True/False/None (unknown).

    Letters are tuples of length ``len(props)``; ``None`` entries are
    unconstrained.  The default cycle is a single tail letter.
    """

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        if not self.cycle:
            raise ValueError("lasso cycle must be non-empty")
        for letter in self.prefix + self.cycle:
            if not isinstance(letter, tuple):
                raise TypeError("letters must be tuples")

    @property
    def unknowns(self) -> int:
        return sum(v is None for letter in self.prefix + self.cycle for v in letter)


def _letter_guard(letter) -> tuple[int, int]:
    pos = neg = 0
    for k, v in enumerate(letter):
        if v is True:
            pos |= 1 << k
        elif v is False:
            neg |= 1 << k
    return pos, neg


def lasso_automaton(word: LassoWord, props: Sequence) -> BuchiAutomaton:
    """Automaton whose language is every resolution of the word's unknown entries."""
    trans = []
    t = len(word.prefix)
    c = len(word.cycle)
    for i, letter in enumerate(word.prefix):
        pos, neg = _letter_guard(letter)
        trans.append((i, pos, neg, i + 1))
    for j, letter in enumerate(word.cycle):
        pos, neg = _letter_guard(letter)
        trans.append((t + j, pos, neg, t + (j + 1) % c))
    return BuchiAutomaton(tuple(props), t + c, trans, frozenset({0}), frozenset({t}))


# --------------------------------------------------------------------------- emptiness


def _nested_dfs(initial, succ, accepting) -> bool:
    """True iff an accepting state on a cycle is reachable (iterative nested DFS)."""
    visited1: set = set()
    visited2: set = set()

    def inner(seed) -> bool:
        stack = [iter(succ(seed))]
        while stack:
            for t in stack[-1]:
                if t == seed:
                    return True
                if t not in visited2:
                    visited2.add(t)
                    stack.append(iter(succ(t)))
                    break
            else:
                stack.pop()
        return False

    for s0 in initial:
        if s0 in visited1:
            continue
        visited1.add(s0)
        stack = [(s0, iter(succ(s0)))]
        while stack:
            s, it = stack[-1]
            for t in it:
                if t not in visited1:
                    visited1.add(t)
                    stack.append((t, iter(succ(t))))
                    break
            else:
                stack.pop()
                if accepting(s) and inner(s):
                    return True
    return False


def is_intersection_empty(a: BuchiAutomaton, b: BuchiAutomaton) -> bool:
    """``L(a) ∩ L(b) = ∅`` via the product with a two-phase acceptance flag."""
    if tuple(a.props) != tuple(b.props):
        raise ValueError("automata must share the proposition alphabet")
    fa, fb = a.accepting, b.accepting

    def succ(state):
        p, q, i = state
        j = i
        if i == 0 and p in fa:
            j = 1
        elif i == 1 and q in fb:
            j = 0
        out = []
        for pa, na, pd in a.successors(p):
            for pb, nb, qd in b.successors(q):
                if pa & nb or pb & na:
                    continue
                out.append((pd, qd, j))
        return out

    init = [(p, q, 0) for p in sorted(a.initial) for q in sorted(b.initial)]
    return not _nested_dfs(init, succ, lambda s: s[2] == 1 and s[1] in fb)


def accepts_lasso(a: BuchiAutomaton, word: LassoWord) -> bool:
    """True iff some resolution of ``word`` is accepted by ``a``."""
    return not is_intersection_empty(a, lasso_automaton(word, a.props))
