"""Pointwise continuous-time MITL semantics on grid-aligned piecewise-constant signals.

All breakpoints and interval endpoints are multiples of a unit ``u``, so every
satisfaction set is a union of grid points and open grid cells.  A formula's
truth is therefore stored per *element*: point ``k·u`` (index ``2k``), open
cell ``(k·u, (k+1)·u)`` (index ``2k+1``) and the far region ``[H, ∞)`` on
which the signal is constant (last index).  Until and Release are evaluated
at one representative time per element straight from the quantified
definitions; Release uses the three printed clauses, not a duality.
"""

from __future__ import annotations

import math
from fractions import Fraction

from shyver.logic import And, Atom, Const, Or, Release, Until

INF = math.inf


def _cut(a, b):
    """Intersection of two ``(lo, lc, hi, hc)`` intervals, or None."""
    if a[0] > b[0]:
        lo, lc = a[0], a[1]
    elif a[0] < b[0]:
        lo, lc = b[0], b[1]
    else:
        lo, lc = a[0], a[1] and b[1]
    if a[2] < b[2]:
        hi, hc = a[2], a[3]
    elif a[2] > b[2]:
        hi, hc = b[2], b[3]
    else:
        hi, hc = a[2], a[3] and b[3]
    if lo < hi or (lo == hi and lc and hc):
        return (lo, lc, hi, hc)
    return None


class Grid:
    def __init__(self, unit, H, scale=1):
        # ``scale`` converts formula time units to grid time units
        self.u = unit
        self.H = H
        self.scale = scale
        self.N = H // unit
        assert self.N * self.u == self.H
        self.size = 2 * self.N + 1
        self.spans = [self._span(e) for e in range(self.size)]
        self._pre = {}

    def t(self, x):
        v = Fraction(x) * self.scale
        return int(v) if v.denominator == 1 else v

    def span(self, e):
        return self.spans[e]

    def _span(self, e):
        if e == 2 * self.N:
            return (self.H, True, INF, False)
        k, odd = divmod(e, 2)
        if odd:
            return (k * self.u, False, (k + 1) * self.u, False)
        return (k * self.u, True, k * self.u, True)

    def rep(self, e):
        lo, _, hi, _ = self.span(e)
        return lo if hi == INF else (lo + hi) // 2 if (lo + hi) % 2 == 0 else Fraction(lo + hi, 2)

    def right_of(self, x):
        """Element containing ``(x, x+ε)`` for small ``ε``."""
        if x >= self.H:
            return 2 * self.N
        return 2 * math.floor(x / self.u) + 1

    def _first(self, lo, lc):
        if lo >= self.H:
            return 2 * self.N
        k = math.floor(lo / self.u)
        if k * self.u == lo:
            return 2 * k if lc else 2 * k + 1
        return 2 * k + 1

    def _last(self, hi, hc):
        if hi > self.H or (hi == self.H and hc):
            return 2 * self.N
        k = math.floor(hi / self.u)
        if k * self.u == hi:
            return 2 * k if hc else 2 * k - 1
        return 2 * k + 1

    def all_on(self, vals, iv) -> bool:
        """``vals`` holds on every element meeting ``iv`` (vacuous when ``iv`` is None).

        Elements meeting an interval form a contiguous index range, so a
        prefix count of False entries answers the query.
        """
        if iv is None:
            return True
        a, b = self._first(iv[0], iv[1]), self._last(iv[2], iv[3])
        if a > b:
            return True
        pre = self._prefix(vals)
        return pre[b + 1] - pre[a] == 0

    def _prefix(self, vals):
        vals = tuple(vals)
        hit = self._pre.get(vals)
        if hit is None:
            hit = [0]
            for v in vals:
                hit.append(hit[-1] + (not v))
            self._pre[vals] = hit
        return hit

    def all_on_slow(self, vals, iv) -> bool:
        if iv is None:
            return True
        return all(vals[e] for e in range(self.size) if _cut(self.spans[e], iv) is not None)


def _until(grid, phi, psi, I):
    """``∃ t ∈ I: ψ(s+t) ∧ ∀ t' ∈ (0, t): φ(s+t')``."""
    ilo, ihi = grid.t(I.lo), (INF if I.hi is None else grid.t(I.hi))
    out = []
    for e in range(grid.size):
        s = grid.rep(e)
        window = (s + ilo, True, s + ihi, ihi != INF)
        ok = False
        for e2 in range(grid.size):
            if not psi[e2]:
                continue
            part = _cut(grid.span(e2), window)
            if part is None:
                continue
            x, closed = part[0], part[1]
            if closed:  # earliest witness s + t = x
                ok = grid.all_on(phi, _cut((s, False, x, False), (s, False, INF, False)))
            else:  # witnesses just above x
                ok = grid.all_on(phi, _cut((s, False, x, True), (s, False, INF, False))) and phi[e2]
            if ok:
                break
        out.append(ok)
    return out


def _release_verbatim(grid, phi, psi, I):
    ilo, ihi = grid.t(I.lo), (INF if I.hi is None else grid.t(I.hi))
    ihc = ihi != INF
    out = []
    for e in range(grid.size):
        s = grid.rep(e)
        I_abs = (s + ilo, True, s + ihi, ihc)
        # (1) ∀ t ∈ I: ψ(s+t)
        ok = grid.all_on(psi, I_abs)
        # (2) ∃ t > 0: φ(s+t) ∧ ∀ t' ∈ [0, t] ∩ I: ψ(s+t')
        if not ok:
            for e2 in range(grid.size):
                if not phi[e2]:
                    continue
                part = _cut(grid.span(e2), (s, False, INF, False))
                if part is None:
                    continue
                x, closed = part[0], part[1]
                if closed:
                    ok = grid.all_on(psi, _cut((s, True, x, True), I_abs))
                else:  # witnesses just above x: ψ is needed above x only if I continues past x
                    past = s + ilo <= x < s + ihi
                    ok = grid.all_on(psi, _cut((s, True, x, True), I_abs)) and (not past or psi[e2])
                if ok:
                    break
        # (3) ∃ t ∈ I' = I ∪ {lo}, t' ∈ I ∩ (t, ∞):
        #     ψ on I ∩ [0, t] and φ on I ∩ (t, t']
        if not ok:
            for e3 in range(grid.size):
                part = _cut(grid.span(e3), (s + ilo, True, s + ihi, False))
                if part is None:
                    continue
                x, closed = part[0], part[1]
                if closed:  # s + t = x
                    ok = grid.all_on(psi, (s + ilo, True, x, True)) and phi[grid.right_of(x)]
                else:  # s + t just above x, inside e3
                    ok = grid.all_on(psi, (s + ilo, True, x, True)) and psi[e3] and phi[e3]
                if ok:
                    break
        out.append(ok)
    return out


def sat(f, grid: Grid, atom_vals):
    """Element-wise truth of ``f``; ``atom_vals[atom]`` lists element truth values."""
    if isinstance(f, Const):
        return [f.value] * grid.size
    if isinstance(f, Atom):
        return list(atom_vals[f])
    if isinstance(f, And):
        a, b = sat(f.left, grid, atom_vals), sat(f.right, grid, atom_vals)
        return [x and y for x, y in zip(a, b)]
    if isinstance(f, Or):
        a, b = sat(f.left, grid, atom_vals), sat(f.right, grid, atom_vals)
        return [x or y for x, y in zip(a, b)]
    if isinstance(f, Until):
        return _until(grid, sat(f.left, grid, atom_vals), sat(f.right, grid, atom_vals), f.interval)
    if isinstance(f, Release):
        return _release_verbatim(grid, sat(f.left, grid, atom_vals), sat(f.right, grid, atom_vals), f.interval)
    raise TypeError(f)

