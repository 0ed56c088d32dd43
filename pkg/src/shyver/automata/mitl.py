"""Three-valued piecewise-constant signals and MITL monitoring.

Satisfaction sets are finite unions of intervals with exact rational
endpoints.  A signal is monitored twice: once with every Unknown atom value
read as False (lower pass) and once read as True (upper pass).  Formulas are
negation free, hence monotone in the atom values, so lower-pass truth means
every completion satisfies the formula and upper-pass falsity means none does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from ..logic import And, Atom, Const, Formula, Interval, Next, Or, Release, Until, format_formula

__all__ = [
    "IntervalSet",
    "ThreeValuedSignal",
    "InconsistentVerdict",
    "assemble_signal",
    "partial_signal",
    "label_from_pair",
    "segment_bounds",
    "segment_count",
    "sat_set",
    "eval_mitl",
    "eval_mitl_three_valued",
    "MonitorStats",
]

INF = math.inf


class InconsistentVerdict(ValueError):
    """Both ALG0 calls of one segment claim opposite certainties."""


# --------------------------------------------------------------------------- interval sets


def _span(lo, lc, hi, hc):
    """Normalised interval tuple or None when empty."""
    if hi == INF:
        hc = False
    if lo < hi or (lo == hi and lc and hc):
        return (lo, lc, hi, hc)
    return None


@dataclass(frozen=True)
class IntervalSet:
    """Disjoint, sorted, non-adjacent intervals ``(lo, lo_closed, hi, hi_closed)`` within ``[0, ∞)``."""

    spans: tuple = ()

    @staticmethod
    def of(spans) -> "IntervalSet":
        items = sorted((s for s in (_span(*x) for x in spans) if s is not None), key=lambda s: (s[0], not s[1]))
        merged: list = []
        for lo, lc, hi, hc in items:
            if merged:
                plo, plc, phi, phc = merged[-1]
                if lo < phi or (lo == phi and (lc or phc)):
                    if hi > phi or (hi == phi and hc):
                        merged[-1] = (plo, plc, hi, hc if hi > phi else (hc or phc))
                    continue
            merged.append((lo, lc, hi, hc))
        return IntervalSet(tuple(merged))

    @staticmethod
    def everything() -> "IntervalSet":
        return IntervalSet(((Fraction(0), True, INF, False),))

    def __bool__(self):
        return bool(self.spans)

    def __len__(self):
        return len(self.spans)

    def contains(self, t) -> bool:
        for lo, lc, hi, hc in self.spans:
            if (lo < t or (lc and lo == t)) and (t < hi or (hc and t == hi)):
                return True
        return False

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet.of(self.spans + other.spans)

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a in self.spans:
            for b in other.spans:
                if a[0] > b[0] or (a[0] == b[0] and not a[1]):
                    lo, lc = a[0], a[1]
                else:
                    lo, lc = b[0], b[1]
                if a[2] < b[2] or (a[2] == b[2] and not a[3]):
                    hi, hc = a[2], a[3]
                else:
                    hi, hc = b[2], b[3]
                out.append((lo, lc, hi, hc))
        return IntervalSet.of(out)

    def complement(self) -> "IntervalSet":
        out = []
        cur, cc = Fraction(0), True
        for lo, lc, hi, hc in self.spans:
            out.append((cur, cc, lo, not lc))
            cur, cc = hi, not hc
        if cur != INF:
            out.append((cur, cc, INF, False))
        return IntervalSet.of(out)

    def minus_interval(self, iv: tuple) -> "IntervalSet":
        """``{x − t : x ∈ self, t ∈ iv}`` clipped to ``[0, ∞)``."""
        ilo, ilc, ihi, ihc = iv
        out = []
        for lo, lc, hi, hc in self.spans:
            if ihi == INF:
                nlo, nlc = Fraction(0), True
                nlo_raw = -INF
            else:
                nlo_raw = lo - ihi
                nlo, nlc = nlo_raw, lc and ihc
            if hi == INF:
                nhi, nhc = INF, False
            else:
                nhi, nhc = hi - ilo, hc and ilc
            if nlo_raw == -INF or nlo < 0:
                nlo, nlc = Fraction(0), True
            out.append((nlo, nlc, nhi, nhc))
        return IntervalSet.of(out)

    def to_json(self):
        return [
            {"lo": str(lo), "lo_closed": lc, "hi": "inf" if hi == INF else str(hi), "hi_closed": hc}
            for lo, lc, hi, hc in self.spans
        ]


# --------------------------------------------------------------------------- signals


@dataclass(frozen=True)
class ThreeValuedSignal:
    """Segments ``[breaks[k], breaks[k+1])`` with per-atom values True/False/None, then a two-valued tail."""

    atoms: tuple
    breaks: tuple
    values: tuple
    tail: tuple

    def __post_init__(self):
        if len(self.breaks) != len(self.values) + 1:
            raise ValueError("need one more break than segments")
        if self.breaks and self.breaks[0] != 0:
            raise ValueError("signal must start at time 0")
        if any(b >= a for a, b in zip(self.breaks[1:], self.breaks[:-1])):
            raise ValueError("segment breaks must increase")
        if any(v is None for v in self.tail):
            raise ValueError("tail valuation must be two-valued")
        for seg in self.values:
            if len(seg) != len(self.atoms):
                raise ValueError("segment valuation has the wrong arity")

    @property
    def horizon(self):
        return self.breaks[-1] if self.breaks else Fraction(0)

    def compressed(self) -> "ThreeValuedSignal":
        """Equivalent signal with adjacent equal-valued segments merged."""
        if not self.values:
            return self
        breaks = [self.breaks[0]]
        values = [self.values[0]]
        for b, v in zip(self.breaks[1:-1], self.values[1:]):
            if v != values[-1]:
                breaks.append(b)
                values.append(v)
        breaks.append(self.breaks[-1])
        return ThreeValuedSignal(self.atoms, tuple(breaks), tuple(values), self.tail)

    def completion_count(self) -> int:
        return 2 ** sum(v is None for seg in self.values for v in seg)

    def to_json(self) -> dict:
        def show(v):
            return "unknown" if v is None else bool(v)

        return {
            "atoms": [format_formula(a) if isinstance(a, Atom) else str(a) for a in self.atoms],
            "segments": [
                {"start": str(a), "end": str(b), "values": [show(v) for v in seg]}
                for a, b, seg in zip(self.breaks[:-1], self.breaks[1:], self.values)
            ],
            "tail": {"start": str(self.horizon), "values": [bool(v) for v in self.tail]},
        }


def segment_count(T, Delta) -> int:
    """``⌊T / 2Δ⌋ + 1``."""
    return int(Fraction(T) / (2 * Fraction(Delta))) + 1


def segment_bounds(T, Delta) -> list[Fraction]:
    """Equal partition of ``[0, T)`` into ``⌊T/2Δ⌋+1`` segments, each shorter than ``2Δ``."""
    T = Fraction(T)
    k = segment_count(T, Delta)
    return [T * i / k for i in range(k + 1)]


def label_from_pair(r1, r2, where: str = "") -> bool | None:
    """Algorithm 2's case split: True if res1 = Yes, False if res2 = No, else Unknown."""
    r1, r2 = str(getattr(r1, "value", r1)), str(getattr(r2, "value", r2))
    if r1 == "Yes" and r2 == "No":
        raise InconsistentVerdict(f"{where}: res1 = Yes and res2 = No")
    return True if r1 == "Yes" else False if r2 == "No" else None


def partial_signal(verdicts, bounds, tail, atoms) -> ThreeValuedSignal:
    """Signal from the verdicts of the first segments of ``bounds``; the rest is one Unknown block."""
    k = len(bounds) - 1
    done = len(verdicts)
    values = [
        tuple(label_from_pair(*row[a], where=f"segment {i}, atom {a}") for a in range(len(atoms)))
        for i, row in enumerate(verdicts)
    ]
    breaks = list(bounds[: done + 1])
    if done < k:
        values.append((None,) * len(atoms))
        breaks.append(bounds[-1])
    return ThreeValuedSignal(tuple(atoms), tuple(breaks), tuple(values), tuple(bool(v) for v in tail)).compressed()


def assemble_signal(verdicts, Delta, T, tail, atoms) -> ThreeValuedSignal:
    """Build the signal from per-segment ``(res1, res2)`` verdict pairs per atom.

    ``verdicts[i][a]`` is the pair for segment ``i`` and atom ``a``; values are
    the strings ``"Yes"``, ``"No"`` or ``"Unknown"`` (or the Verdict enum).
    Segments without verdicts (``None``) are entirely Unknown.
    """
    breaks = segment_bounds(T, Delta)
    k = len(breaks) - 1
    if len(verdicts) > k:
        raise ValueError(f"got {len(verdicts)} segment verdicts for {k} segments")
    values = []
    for i in range(k):
        row = verdicts[i] if i < len(verdicts) else None
        seg = []
        for a in range(len(atoms)):
            if row is None or row[a] is None:
                seg.append(None)
                continue
            seg.append(label_from_pair(*row[a], where=f"segment {i}, atom {a}"))
        values.append(tuple(seg))
    return ThreeValuedSignal(tuple(atoms), tuple(breaks), tuple(values), tuple(bool(v) for v in tail))


# --------------------------------------------------------------------------- monitoring


@dataclass
class MonitorStats:
    max_spans: int = 0
    nodes: int = 0


def _atom_set(signal: ThreeValuedSignal, idx: int, unknown_as: bool) -> IntervalSet:
    spans = []
    for a, b, seg in zip(signal.breaks[:-1], signal.breaks[1:], signal.values):
        v = seg[idx]
        if v is None:
            v = unknown_as
        if v:
            if spans and spans[-1][2] == a:
                spans[-1] = (spans[-1][0], True, b, False)
            else:
                spans.append((a, True, b, False))
    if signal.tail[idx]:
        spans.append((signal.horizon, True, INF, False))
    return IntervalSet.of(spans)


def _until(phi: IntervalSet, psi: IntervalSet, iv: Interval) -> IntervalSet:
    """``{s : ∃t ∈ I, s+t ∈ Ψ, (s, s+t) ⊆ Φ}``."""
    ihi = INF if iv.hi is None else iv.hi
    out = []
    if iv.lo == 0:
        out.extend(psi.spans)
    # t > 0: s and s+t share one maximal component ⟨a, b⟩ of Φ, a ≤ s < s+t ≤ b
    positive = (iv.lo, iv.lo != 0, ihi, ihi != INF)
    for a, _, b, _ in phi.spans:
        window = IntervalSet.of([(a, False, b, b != INF)])
        reach = psi.intersect(window).minus_interval(positive)
        out.extend(reach.intersect(IntervalSet.of([(a, True, b, False)])).spans)
    return IntervalSet.of(out)


def sat_set(f: Formula, signal: ThreeValuedSignal, unknown_as: bool, stats: MonitorStats | None = None) -> IntervalSet:
    """Satisfaction set of ``f`` over ``[0, ∞)`` for one completion policy."""
    index = {a: k for k, a in enumerate(signal.atoms)}
    memo: dict = {}

    def go(g):
        if g in memo:
            return memo[g]
        if isinstance(g, Const):
            out = IntervalSet.everything() if g.value else IntervalSet()
        elif isinstance(g, Atom):
            if g not in index:
                raise KeyError(f"atom {format_formula(g)} missing from the signal")
            out = _atom_set(signal, index[g], unknown_as)
        elif isinstance(g, And):
            out = go(g.left).intersect(go(g.right))
        elif isinstance(g, Or):
            out = go(g.left).union(go(g.right))
        elif isinstance(g, Until):
            out = _until(go(g.left), go(g.right), g.interval or Interval())
        elif isinstance(g, Release):
            out = _until(go(g.left).complement(), go(g.right).complement(), g.interval or Interval()).complement()
        elif isinstance(g, Next):
            raise TypeError("Next is not an MITL operator")
        else:
            raise TypeError(f"unsupported node {g!r}")
        if stats is not None:
            stats.max_spans = max(stats.max_spans, len(out))
            stats.nodes += 1
        memo[g] = out
        return out

    return go(f)


def eval_mitl(f: Formula, signal: ThreeValuedSignal, unknown_as: bool = False) -> bool:
    return sat_set(f, signal, unknown_as).contains(Fraction(0))


def eval_mitl_three_valued(signal: ThreeValuedSignal, f: Formula, stats: MonitorStats | None = None) -> str:
    """``"Yes"`` if every completion satisfies ``f``, ``"No"`` if none does, else ``"Unknown"``."""
    if sat_set(f, signal, False, stats).contains(Fraction(0)):
        return "Yes"
    if not sat_set(f, signal, True, stats).contains(Fraction(0)):
        return "No"
    return "Unknown"
