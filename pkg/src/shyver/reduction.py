"""Grid partitions, projection/injection and reduced Markov chains.

A partition covers each mode's flow box with a uniform grid of pitch ``η``.
Cells are numbered lexicographically by ``(mode index, grid coordinates)``
and are never materialised as a list, so very large grids only cost their
metadata.  Coordinates are exact when the model boxes and pitch are
:class:`fractions.Fraction` values.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .markov import MarkovChain, transient_path
from .model import Box, DensityPiece, HybridModelCT, HybridModelDT, WeightPiece

__all__ = [
    "ModeGrid",
    "Partition",
    "ErrorBudget",
    "ReductionError",
    "NonDivisiblePitch",
    "UnsupportedExpression",
    "PartitionMismatch",
    "RefinementInfeasible",
    "DomainError",
    "build_grid_partition",
    "project",
    "inject",
    "observable_vector",
    "reduce_ct",
    "reduce_dt",
    "projection_error",
    "projection_tv",
    "density_sup",
    "ct_error_bound",
    "dt_error_bound",
    "estimate_lambda",
    "estimate_delta_p",
    "refine",
    "write_chain",
    "read_chain",
]


class ReductionError(ValueError):
    pass


class NonDivisiblePitch(ReductionError):
    pass


class UnsupportedExpression(ReductionError):
    pass


class PartitionMismatch(ReductionError):
    pass


class RefinementInfeasible(ReductionError):
    pass


class DomainError(ValueError):
    pass


# --------------------------------------------------------------------------- partitions


@dataclass(frozen=True)
class ModeGrid:
    mode: str
    lo: tuple
    counts: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return math.prod(self.counts)


@dataclass(frozen=True)
class Partition:
    """Uniform grid over every mode's flow box."""

    grids: tuple[ModeGrid, ...]
    pitch: object
    dimension: int

    @property
    def n(self) -> int:
        return sum(g.size for g in self.grids)

    @property
    def exact(self) -> bool:
        return isinstance(self.pitch, Fraction)

    @property
    def measure(self):
        """Common cell measure ``η^d`` (exact when the pitch is a Fraction)."""
        return self.pitch ** self.dimension

    @property
    def cell_measure(self) -> np.ndarray:
        return np.full(self.n, float(self.measure))

    def grid(self, mode) -> ModeGrid:
        for g in self.grids:
            if g.mode == str(mode):
                return g
        raise PartitionMismatch(f"mode {mode} is not covered by the partition")

    def edges(self, g: ModeGrid, axis: int) -> list:
        """Cell boundaries along ``axis``; shared by project and inject so floats agree bitwise."""
        return [g.lo[axis] + k * self.pitch for k in range(g.counts[axis] + 1)]

    def edges_array(self, g: ModeGrid, axis: int) -> np.ndarray:
        return np.array([float(v) for v in self.edges(g, axis)])

    def index(self, mode, coords: Sequence[int]) -> int:
        g = self.grid(mode)
        return g.offset + int(np.ravel_multi_index(tuple(int(c) for c in coords), g.counts))

    def locate(self, i: int) -> tuple[ModeGrid, tuple[int, ...]]:
        for g in self.grids:
            if g.offset <= i < g.offset + g.size:
                return g, tuple(int(c) for c in np.unravel_index(i - g.offset, g.counts))
        raise IndexError(i)

    def cell(self, i: int) -> tuple[str, Box]:
        g, coords = self.locate(i)
        lo = tuple(g.lo[k] + coords[k] * self.pitch for k in range(self.dimension))
        hi = tuple(g.lo[k] + (coords[k] + 1) * self.pitch for k in range(self.dimension))
        return g.mode, Box(lo, hi)

    def cells(self) -> Iterable[tuple[str, Box]]:
        for i in range(self.n):
            yield self.cell(i)

    def neighbors(self, i: int):
        """Same-mode face neighbours of cell ``i`` as ``(j, axis, side)`` with side ±1."""
        g, coords = self.locate(i)
        for k in range(self.dimension):
            for side in (-1, 1):
                c = coords[k] + side
                if 0 <= c < g.counts[k]:
                    nc = list(coords)
                    nc[k] = c
                    yield self.index(g.mode, nc), k, side

    def adjacency(self):
        """Unordered adjacent pairs ``(i, j, axis, face_box)`` with ``j`` on the +axis side of ``i``."""
        for i in range(self.n):
            mode, box = self.cell(i)
            for j, k, side in self.neighbors(i):
                if side == 1:
                    lo = list(box.lo)
                    lo[k] = box.hi[k]
                    yield i, j, k, Box(tuple(lo), box.hi)

    def cell_lows(self, g: ModeGrid) -> np.ndarray:
        """Lower corners of every cell of ``g`` as a ``(size, d)`` float array in index order."""
        axes = [self.edges_array(g, k)[:-1] for k in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def metadata(self) -> dict:
        return {
            "pitch": _jnum(self.pitch),
            "dimension": self.dimension,
            "cells": self.n,
            "grids": [
                {"mode": g.mode, "lo": [_jnum(v) for v in g.lo], "counts": list(g.counts), "offset": g.offset}
                for g in self.grids
            ],
        }


def _jnum(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    return float(v)


def _divide(length, pitch) -> int:
    q = length / pitch
    k = round(float(q))
    if k < 1 or abs(float(q) - k) > 1e-9 * max(1.0, abs(float(q))):
        raise NonDivisiblePitch(f"pitch {pitch} does not divide edge length {length}")
    return int(k)


def build_grid_partition(model, pitch) -> Partition:
    """Uniform grid of edge length ``pitch`` over every mode's flow box."""
    if isinstance(pitch, str):
        pitch = Fraction(pitch)
    exact = isinstance(pitch, Fraction) and all(
        isinstance(v, Fraction) for b in model.flow_domains.values() for v in b.lo + b.hi
    )
    if not exact:
        pitch = float(pitch)
    if pitch <= 0:
        raise NonDivisiblePitch("pitch must be positive")
    grids = []
    offset = 0
    for mode in model.modes:
        box = model.flow_domains[mode]
        lo = box.lo if exact else tuple(float(v) for v in box.lo)
        counts = tuple(_divide(b - a, pitch) for a, b in zip(box.lo, box.hi))
        g = ModeGrid(mode, lo, counts, offset)
        grids.append(g)
        offset += g.size
    return Partition(tuple(grids), pitch, model.dimension)


# --------------------------------------------------------------------------- projection / injection


def _axis_overlaps(partition: Partition, g: ModeGrid, axis: int, a, b):
    """Cell indices along ``axis`` overlapping ``[a, b]`` and the overlap fractions of ``[a, b]``."""
    edges = partition.edges(g, axis)
    width = b - a
    pitch = partition.pitch
    lo_idx = max(0, int(math.floor(float((a - g.lo[axis]) / pitch))) - 1)
    hi_idx = min(g.counts[axis], int(math.ceil(float((b - g.lo[axis]) / pitch))) + 1)
    idx, frac = [], []
    if width == 0:
        for c in range(lo_idx, hi_idx):
            if edges[c] <= a <= edges[c + 1]:
                return [c], [1]
        return [], []
    for c in range(lo_idx, hi_idx):
        ov = min(b, edges[c + 1]) - max(a, edges[c])
        if ov > 0:
            idx.append(c)
            frac.append(ov / width)
    return idx, frac


def _spread(partition: Partition, mode, box: Box):
    """Yield ``(cell index, fraction of box volume)`` for cells overlapping ``box``."""
    g = partition.grid(mode)
    per_axis = [_axis_overlaps(partition, g, k, box.lo[k], box.hi[k]) for k in range(partition.dimension)]
    for combo in itertools.product(*[list(zip(*ax)) for ax in per_axis]):
        coords = [c for c, _ in combo]
        frac = 1
        for _, f in combo:
            frac = frac * f
        yield g.offset + int(np.ravel_multi_index(coords, g.counts)), frac


def _spread_arrays(partition: Partition, mode, box: Box):
    """Vectorised :func:`_spread` returning ``(indices, fractions)`` float arrays."""
    g = partition.grid(mode)
    idx_axes, frac_axes = [], []
    for k in range(partition.dimension):
        idx, frac = _axis_overlaps(partition, g, k, box.lo[k], box.hi[k])
        if not idx:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        idx_axes.append(np.array(idx))
        frac_axes.append(np.array([float(f) for f in frac]))
    mesh = np.meshgrid(*idx_axes, indexing="ij")
    flat = np.ravel_multi_index(tuple(m.ravel() for m in mesh), g.counts) + g.offset
    fr = frac_axes[0]
    for f in frac_axes[1:]:
        fr = np.multiply.outer(fr, f)
    return flat.astype(np.int64), np.asarray(fr, dtype=float).ravel()


def project(density: Sequence[DensityPiece], partition: Partition, exact: bool = False):
    """Cell masses ``p_j = ∫_{s_j} F``; ``exact=True`` returns Fractions."""
    if exact:
        p = [Fraction(0)] * partition.n
        for piece in density:
            w = Fraction(piece.weight)
            for i, f in _spread(partition, piece.mode, piece.box):
                p[i] += w * Fraction(f)
        return p
    p = np.zeros(partition.n)
    for piece in density:
        idx, fr = _spread_arrays(partition, piece.mode, piece.box)
        np.add.at(p, idx, float(piece.weight) * fr)
    return p


def inject(p, partition: Partition) -> list[DensityPiece]:
    """Cell-wise uniform density ``Σ_j p_j U_{s_j}`` as density pieces."""
    out = []
    for i, w in enumerate(p):
        if w != 0:
            mode, box = partition.cell(i)
            out.append(DensityPiece(mode, box, w))
    return out


def refine(p, coarse: Partition, fine: Partition) -> np.ndarray:
    """Spread coarse cell masses uniformly over the fine cells they contain (``P_fine R_coarse``)."""
    q = np.zeros(fine.n)
    for i, w in enumerate(np.asarray(p, dtype=float)):
        if w:
            mode, box = coarse.cell(i)
            idx, fr = _spread_arrays(fine, mode, box)
            q[idx] += w * fr
    return q


def observable_vector(weights: Sequence[WeightPiece], partition: Partition) -> np.ndarray:
    """Reduced observable ``r_i = μ(s_i)^{-1} ∫_{s_i} γ`` for a piecewise-constant weight."""
    r = np.zeros(partition.n)
    mu = float(partition.measure)
    for wp in weights:
        vol = float(wp.box.volume)
        idx, fr = _spread_arrays(partition, wp.mode, wp.box)
        np.add.at(r, idx, float(wp.coef) * fr * vol / mu)
    return r


# --------------------------------------------------------------------------- quadrature


def _gauss(order: int, sub: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    nodes = np.concatenate([(s + x) / sub for s in range(sub)])
    weights = np.tile(w / sub, sub)
    return nodes, weights


def _rule(exprs, positive_part: bool):
    deg = max((e.degree for e in exprs), default=0)
    has_norm = any(e.has_norm for e in exprs)
    order = deg // 2 + 1
    sub = 1
    if has_norm or positive_part:
        # kinks of norm_inf and of the positive part are not resolved exactly;
        # subdivision keeps the error far below the statistical tolerances
        order = max(order, 3)
        sub = 8 if (has_norm or deg > 0) else 1
    return _gauss(order, sub)


def _box_points(lo: np.ndarray, hi: np.ndarray, nodes: np.ndarray, weights: np.ndarray, free_axes):
    """Tensor quadrature points for many boxes: returns ``(B, P, d)`` points and ``(P,)`` weights."""
    d = lo.shape[1]
    if not free_axes:
        return lo[:, None, :], np.ones(1)
    grids = np.meshgrid(*[nodes] * len(free_axes), indexing="ij")
    wgrids = np.meshgrid(*[weights] * len(free_axes), indexing="ij")
    t = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    pts = np.repeat(lo[:, None, :], t.shape[0], axis=1)
    for col, k in enumerate(free_axes):
        pts[:, :, k] = lo[:, None, k] + (hi[:, None, k] - lo[:, None, k]) * t[None, :, col]
    return pts, w


def _average(fn, lo, hi, nodes, weights, free_axes):
    pts, w = _box_points(lo, hi, nodes, weights, free_axes)
    b, p, d = pts.shape
    vals = fn(pts.reshape(b * p, d)).reshape(b, p)
    return vals @ w


# --------------------------------------------------------------------------- CT reduction


def _target_cells(partition: Partition, to_mode: str, box: Box):
    idx, fr = _spread_arrays(partition, to_mode, box)
    return idx, fr


def _check_model(model, partition: Partition):
    if model.dimension != partition.dimension or set(model.modes) != {g.mode for g in partition.grids}:
        raise PartitionMismatch("partition was not built for this model")


def reduce_ct(model: HybridModelCT, partition: Partition, cell_cap: int = 2_000_000) -> MarkovChain:
    """Finite-volume generator ``A = PLR`` of a CT model on a uniform grid.

    Adjacent cells exchange mass by upwind drift flux plus symmetric diffusion
    flux; outer faces lose mass by drift outflow plus the absorbing-boundary
    diffusion flux, routed through the forced-jump kernel (faces without a
    kernel entry reflect).  Spontaneous jumps use cell-averaged rates.
    """
    _check_model(model, partition)
    if partition.n > cell_cap:
        raise ReductionError(f"explicit reduction of {partition.n} cells exceeds the cap {cell_cap}")
    for mode in model.modes:
        for e in list(model.drift[mode]) + [x for row in model.diffusion[mode] for x in row] + [model.jump_rate[mode]]:
            if e.max_index() >= model.dimension:
                raise UnsupportedExpression(f"expression {e} uses a coordinate beyond dimension {model.dimension}")
    d = partition.dimension
    eta = float(partition.pitch)
    rows, cols, vals = [], [], []

    def add(i, j, v):
        keep = (v > 0) & (i != j)
        rows.append(np.asarray(i)[keep])
        cols.append(np.asarray(j)[keep])
        vals.append(np.asarray(v)[keep])

    for g in partition.grids:
        mode = g.mode
        lows = partition.cell_lows(g)
        highs = lows + eta
        ids = g.offset + np.arange(g.size)
        coords = np.stack(np.unravel_index(np.arange(g.size), g.counts), axis=1)
        gmat = model.diffusion[mode]

        def half_gg(axis):
            exprs = list(gmat[axis])

            def fn(pts):
                return 0.5 * sum(e(pts) ** 2 for e in exprs)

            return exprs, fn

        for k in range(d):
            free = [a for a in range(d) if a != k]
            fk = model.drift[mode][k]
            gexprs, gfn = half_gg(k)
            nodes, weights = _rule([fk], positive_part=True)
            gnodes, gweights = _rule(gexprs + gexprs, positive_part=False)

            # interior faces on the +k side of each cell
            inner = coords[:, k] < g.counts[k] - 1
            if np.any(inner):
                flo = lows[inner].copy()
                flo[:, k] = highs[inner, k]
                fhi = highs[inner].copy()
                fplus = _average(lambda p: np.maximum(fk(p), 0.0), flo, fhi, nodes, weights, free)
                fminus = _average(lambda p: np.maximum(-fk(p), 0.0), flo, fhi, nodes, weights, free)
                mbar = _average(gfn, flo, fhi, gnodes, gweights, free)
                src = ids[inner]
                stride = int(np.prod(g.counts[k + 1:]))
                dst = src + stride
                add(src, dst, fplus / eta + mbar / eta ** 2)
                add(dst, src, fminus / eta + mbar / eta ** 2)

            # outer faces: forced jumps
            for side, sign in (("lo", -1.0), ("hi", 1.0)):
                entries = [e for e in model.jump_kernel if e.from_mode == mode and e.forced and (k, side) in e.boundary]
                if not entries:
                    continue
                at = coords[:, k] == (0 if side == "lo" else g.counts[k] - 1)
                flo = lows[at].copy()
                fhi = highs[at].copy()
                if side == "lo":
                    fhi[:, k] = flo[:, k]
                else:
                    flo[:, k] = fhi[:, k]
                out_drift = _average(lambda p: np.maximum(sign * fk(p), 0.0), flo, fhi, nodes, weights, free)
                mbar = _average(gfn, flo, fhi, gnodes, gweights, free)
                rate = out_drift / eta + 2.0 * mbar / eta ** 2
                total_w = sum(e.weight for e in entries)
                for e in entries:
                    tidx, tfr = _target_cells(partition, e.to_mode, e.target_box)
                    src = np.repeat(ids[at], len(tidx))
                    dst = np.tile(tidx, int(at.sum()))
                    add(src, dst, np.repeat(rate * e.weight / total_w, len(tidx)) * np.tile(tfr, int(at.sum())))

        # spontaneous jumps
        rate_expr = model.jump_rate[mode]
        spont = [e for e in model.jump_kernel if e.from_mode == mode and not e.forced]
        if spont and not (rate_expr.is_constant and rate_expr.constant_value() == 0.0):
            rnodes, rweights = _rule([rate_expr], positive_part=False)
            for e in spont:
                if e.region is None:
                    clo, chi, cid, share = lows, highs, ids, np.ones(g.size)
                else:
                    rl = np.array([float(v) for v in e.region.lo])
                    rh = np.array([float(v) for v in e.region.hi])
                    clo = np.maximum(lows, rl)
                    chi = np.minimum(highs, rh)
                    keep = np.all(chi > clo, axis=1)
                    clo, chi, cid = clo[keep], chi[keep], ids[keep]
                    share = np.prod(chi - clo, axis=1) / eta ** d
                if len(cid) == 0:
                    continue
                rbar = _average(rate_expr, clo, chi, rnodes, rweights, list(range(d))) * share
                tidx, tfr = _target_cells(partition, e.to_mode, e.target_box)
                src = np.repeat(cid, len(tidx))
                dst = np.tile(tidx, len(cid))
                add(src, dst, np.repeat(rbar * e.weight, len(tidx)) * np.tile(tfr, len(cid)))

    n = partition.n
    if rows:
        off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    else:
        off = sp.csr_matrix((n, n))
    off.sum_duplicates()
    a = off - sp.diags(np.asarray(off.sum(axis=1)).ravel())
    p0 = project(model.initial_density, partition)
    return MarkovChain("ct", a.tocsr(), p0, meta={"partition": partition.metadata()})


# --------------------------------------------------------------------------- DT reduction


def _normal_cell_probs(mean, sd, edges, reflect: tuple[bool, bool]):
    """Cell probabilities of N(mean, sd²) on ``edges`` with reflection by images.

    ``reflect`` flags the low and high ends; mass crossing a non-reflecting
    end is returned as ``exit_lo`` / ``exit_hi`` instead.
    """
    from scipy.special import ndtr

    a, b = edges[0], edges[-1]
    span = b - a
    if sd == 0.0:
        probs = np.zeros(len(edges) - 1)
        if mean < a:
            if not reflect[0]:
                return probs, 1.0, 0.0
            mean = 2 * a - mean
        if mean > b:
            if not reflect[1]:
                return probs, 0.0, 1.0
            mean = 2 * b - mean
        c = int(np.clip(np.searchsorted(edges, mean, side="right") - 1, 0, len(probs) - 1))
        probs[c] = 1.0
        return probs, 0.0, 0.0
    if reflect[0] and reflect[1]:
        centres = [mean + 2 * m * span for m in range(-3, 4)] + [2 * a - mean + 2 * m * span for m in range(-3, 4)]
    elif reflect[0]:
        centres = [mean, 2 * a - mean]
    elif reflect[1]:
        centres = [mean, 2 * b - mean]
    else:
        centres = [mean]
    probs = np.zeros(len(edges) - 1)
    exit_lo = exit_hi = 0.0
    for mu in centres:
        cdf = ndtr((edges - mu) / sd)
        probs += np.diff(cdf)
        if not reflect[0]:
            exit_lo += float(cdf[0])
        if not reflect[1]:
            exit_hi += float(1 - cdf[-1])
    return probs, exit_lo, exit_hi


def _euler_rows(base: HybridModelCT, partition: Partition, step: float, cell: int, nodes, weights):
    """Row of the Euler-step kernel for one source cell, averaged over quadrature points."""
    mode, box = partition.cell(cell)
    g = partition.grid(mode)
    d = partition.dimension
    lo = np.array([float(v) for v in box.lo])
    hi = np.array([float(v) for v in box.hi])
    pts, w = _box_points(lo[None, :], hi[None, :], nodes, weights, list(range(d)))
    pts = pts[0]
    row = np.zeros(partition.n)
    rate_expr = base.jump_rate[mode]
    spont = [e for e in base.jump_kernel if e.from_mode == mode and not e.forced]
    for x, wx in zip(pts, w):
        f = np.array([e(x[None, :])[0] for e in base.drift[mode]])
        gm = np.array([[e(x[None, :])[0] for e in r] for r in base.diffusion[mode]])
        sd = np.sqrt(np.sum(gm ** 2, axis=1) * step)
        r = float(rate_expr(x[None, :])[0]) if spont else 0.0
        pj = min(max(r * step, 0.0), 1.0)
        per_axis, exits = [], []
        for k in range(d):
            has = {side: [e for e in base.jump_kernel if e.from_mode == mode and e.forced and (k, side) in e.boundary]
                   for side in ("lo", "hi")}
            probs, elo, ehi = _normal_cell_probs(
                x[k] + f[k] * step, sd[k], partition.edges_array(g, k), (not has["lo"], not has["hi"])
            )
            per_axis.append(probs)
            exits.append(((elo, has["lo"]), (ehi, has["hi"])))
        stay = per_axis[0]
        for pa in per_axis[1:]:
            stay = np.multiply.outer(stay, pa)
        contrib = np.zeros(partition.n)
        contrib[g.offset:g.offset + g.size] = np.asarray(stay).ravel()
        inside = [pa.sum() for pa in per_axis]
        for k in range(d):
            others = float(np.prod([inside[l] for l in range(d) if l != k]))
            for mass, entries in exits[k]:
                if mass <= 0 or not entries:
                    continue
                tw = sum(e.weight for e in entries)
                for e in entries:
                    tidx, tfr = _target_cells(partition, e.to_mode, e.target_box)
                    contrib[tidx] += mass * others * e.weight / tw * tfr
        contrib /= contrib.sum()
        if pj > 0:
            jump = np.zeros(partition.n)
            tw = 0.0
            for e in spont:
                if e.region is None or e.region.contains(x):
                    tidx, tfr = _target_cells(partition, e.to_mode, e.target_box)
                    jump[tidx] += e.weight * tfr
                    tw += e.weight
            if tw > 0:
                contrib = (1 - pj) * contrib + pj * jump / tw
        row += wx * contrib
    return row


def reduce_dt(model: HybridModelDT, partition: Partition, quad_order: int = 4) -> MarkovChain:
    """Set-oriented reduction ``T_r(i,j) = μ(s_i)^{-1} ∫_{s_i} ∫_{s_j} T``, row-normalised."""
    _check_model(model, partition)
    n = partition.n
    kind = model.transition[0]
    if kind == "identity":
        mat = sp.identity(n, format="csr")
    elif kind == "uniform":
        entries = model.transition[1]
        rows, cols, vals = [], [], []
        eta = float(partition.pitch)
        for g in partition.grids:
            lows = partition.cell_lows(g)
            highs = lows + eta
            ids = g.offset + np.arange(g.size)
            for e in entries:
                if e.from_mode != g.mode:
                    continue
                if e.region is None:
                    share = np.ones(g.size)
                else:
                    rl = np.array([float(v) for v in e.region.lo])
                    rh = np.array([float(v) for v in e.region.hi])
                    share = np.prod(np.clip(np.minimum(highs, rh) - np.maximum(lows, rl), 0, None), axis=1) / eta ** partition.dimension
                keep = share > 0
                tidx, tfr = _target_cells(partition, e.to_mode, e.target_box)
                src = ids[keep]
                rows.append(np.repeat(src, len(tidx)))
                cols.append(np.tile(tidx, len(src)))
                vals.append(np.repeat(share[keep] * e.weight, len(tidx)) * np.tile(tfr, len(src)))
        mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    elif kind == "euler":
        step, base = model.transition[1], model.transition[2]
        nodes, weights = _gauss(quad_order, 1)
        dense = np.vstack([_euler_rows(base, partition, step, i, nodes, weights) for i in range(n)])
        dense[dense < 1e-15] = 0.0
        mat = sp.csr_matrix(dense)
    else:
        raise UnsupportedExpression(f"unsupported transition kernel {kind!r}")
    rs = np.asarray(mat.sum(axis=1)).ravel()
    if np.any(rs <= 0):
        raise ReductionError("transition kernel leaves some cell without successors")
    mat = sp.diags(1.0 / rs) @ mat
    p0 = project(model.initial_density, partition)
    return MarkovChain("dt", mat.tocsr(), p0, meta={"partition": partition.metadata()})


# --------------------------------------------------------------------------- error quantities


def _overlap(a: Box, b: Box):
    return a.overlap_volume(b)


def projection_error(density: Sequence[DensityPiece], partition: Partition, observable: Sequence[WeightPiece]):
    """``Δ_y = |Σ_q ∫ γ (F − RPF)|``, exact for piecewise-constant inputs.

    Returns a Fraction when every input coordinate is rational.
    """
    exact = partition.exact
    conv = Fraction if exact else float
    direct = 0
    for f in density:
        for w in observable:
            if f.mode == w.mode and f.box.volume:
                direct += conv(w.coef) * conv(f.weight) * conv(_overlap(f.box, w.box)) / conv(f.box.volume)
    p = project(density, partition, exact=exact)
    mu = conv(partition.measure)
    reduced = 0
    touched = {}
    for w in observable:
        for i, frac in _spread(partition, w.mode, w.box):
            touched[i] = touched.get(i, 0) + conv(w.coef) * conv(frac) * conv(w.box.volume)
    for i, integral in touched.items():
        if p[i]:
            reduced += conv(p[i]) * integral / mu
    return abs(direct - reduced)


def _cell_overlay(density: Sequence[DensityPiece], partition: Partition):
    """Yield ``(cell, [(sub-box volume, F value), ...])`` for cells touched by the density."""
    by_cell: dict[int, list[DensityPiece]] = {}
    for f in density:
        for i, _ in _spread(partition, f.mode, f.box):
            by_cell.setdefault(i, []).append(f)
    for i, pieces in by_cell.items():
        _, cbox = partition.cell(i)
        cuts = []
        for k in range(partition.dimension):
            pts = {cbox.lo[k], cbox.hi[k]}
            for f in pieces:
                for v in (f.box.lo[k], f.box.hi[k]):
                    if cbox.lo[k] < v < cbox.hi[k]:
                        pts.add(v)
            cuts.append(sorted(pts))
        subs = []
        for combo in itertools.product(*[range(len(c) - 1) for c in cuts]):
            lo = tuple(cuts[k][c] for k, c in enumerate(combo))
            hi = tuple(cuts[k][c + 1] for k, c in enumerate(combo))
            vol = 1
            for a, b in zip(lo, hi):
                vol = vol * (b - a)
            mid = [(a + b) / 2 for a, b in zip(lo, hi)]
            val = 0
            for f in pieces:
                if f.box.volume and all(a <= m <= b for a, m, b in zip(f.box.lo, mid, f.box.hi)):
                    val = val + f.weight / f.box.volume
            subs.append((vol, val))
        yield i, subs


def projection_tv(density: Sequence[DensityPiece], partition: Partition):
    """``δ_P = TV(F, RPF) = ½ ∫ |F − RPF|`` for a piecewise-constant density."""
    mu = partition.measure
    total = 0
    for i, subs in _cell_overlay(density, partition):
        mass = sum(v * val for v, val in subs)
        avg = mass / mu
        total = total + sum(v * abs(val - avg) for v, val in subs)
    return total / 2


def density_sup(density: Sequence[DensityPiece], partition: Partition):
    """``‖F‖∞`` of a piecewise-constant density (overlaps added)."""
    best = 0
    for _, subs in _cell_overlay(density, partition):
        for _, val in subs:
            best = max(best, val)
    return best


@dataclass
class ErrorBudget:
    """Reduction-error certificate.  Per-observable maps are keyed by observable name."""

    kind: str = "ct"
    delta_y: dict = field(default_factory=dict)
    lambda_y: dict = field(default_factory=dict)
    lambda_source: dict = field(default_factory=dict)
    alpha_c: dict = field(default_factory=dict)
    beta_c: dict = field(default_factory=dict)
    epsilon: dict = field(default_factory=dict)
    delta_p: float | None = None
    f_sup: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, dict):
                out[key] = {k: _jnum(v) if isinstance(v, (Fraction, float, int, np.floating)) else v for k, v in val.items()}
            elif isinstance(val, (Fraction, np.floating)):
                out[key] = float(val)
        return out


def ct_error_bound(lambda_y, alpha, beta, delta_y) -> float:
    """``ε = βΛ_y/α + Δ_y``."""
    if alpha <= 0:
        raise DomainError("contractivity rate alpha must be positive")
    if beta < 1:
        raise DomainError("contractivity constant beta must be at least 1")
    if lambda_y < 0 or delta_y < 0:
        raise DomainError("error inputs must be non-negative")
    return beta * lambda_y / alpha + delta_y


def dt_error_bound(delta_p, alpha, f_sup) -> float:
    """``ε = δ_P ‖F‖∞ / (1 − α)``."""
    if not 0 < alpha < 1:
        raise DomainError("contractivity factor alpha must lie in (0, 1)")
    if delta_p < 0 or f_sup < 0:
        raise DomainError("error inputs must be non-negative")
    return delta_p * f_sup / (1 - alpha)


def estimate_lambda(model: HybridModelCT, partition: Partition, observable: Sequence[WeightPiece], times,
                    *, cell_cap: int = 200_000, coarse: MarkovChain | None = None) -> float:
    """Numerical estimate of Λ_y by one grid refinement.

    The reduced evolution ``p(t)`` is injected onto the pitch-η/2 grid, where
    the refined generator stands in for the exact operator.  The estimate is
    ``max_t |r_f · (R p(t)) A_f − r · p(t) A|``: the gap between the
    observable's derivative under refined and reduced dynamics.
    """
    pitch = partition.pitch / 2
    counts = sum(math.prod(c * 2 for c in g.counts) for g in partition.grids)
    if counts > cell_cap:
        raise RefinementInfeasible(f"refined partition needs {counts} cells (cap {cell_cap})")
    fine = build_grid_partition(model, pitch)
    chain = coarse or reduce_ct(model, partition)
    fchain = reduce_ct(model, fine)
    r = observable_vector(observable, partition)
    rf = observable_vector(observable, fine)
    dists = transient_path(chain, list(times))
    best = 0.0
    for p in dists:
        q = refine(p, partition, fine)
        gap = abs(float(rf @ (fchain.matrix.T @ q)) - float(r @ (chain.matrix.T @ p)))
        best = max(best, gap)
    return best


def _uniform_push(model: HybridModelDT, partition: Partition, p) -> list[DensityPiece]:
    """``T R p`` for a mixture-of-uniforms kernel, as density pieces (one per kernel entry)."""
    entries = model.transition[1]
    eta = float(partition.pitch)
    mass = [0.0] * len(entries)
    for g in partition.grids:
        lows = partition.cell_lows(g)
        highs = lows + eta
        pg = np.asarray(p[g.offset:g.offset + g.size], dtype=float)
        shares = []
        for e in entries:
            if e.from_mode != g.mode:
                shares.append(np.zeros(g.size))
            elif e.region is None:
                shares.append(np.full(g.size, float(e.weight)))
            else:
                rl = np.array([float(v) for v in e.region.lo])
                rh = np.array([float(v) for v in e.region.hi])
                ov = np.prod(np.clip(np.minimum(highs, rh) - np.maximum(lows, rl), 0, None), axis=1)
                shares.append(ov / eta ** partition.dimension * float(e.weight))
        total = np.sum(shares, axis=0)
        ok = total > 0
        for k, sh in enumerate(shares):
            mass[k] += float(np.sum(pg[ok] * sh[ok] / total[ok]))
    return [DensityPiece(e.to_mode, e.target_box, m) for e, m in zip(entries, mass) if m > 0]


def estimate_delta_p(model: HybridModelDT, partition: Partition, chain: MarkovChain, steps: int,
                     *, cell_cap: int = 50_000) -> tuple[float, str]:
    """``δ_P = sup_i TV((TRP)^i F, RP (TRP)^i F)`` over the first ``steps`` iterates.

    The ``i = 0`` term is exact.  Later iterates ``T R p(i-1)`` are exact for
    identity and uniform-mixture kernels.  For Euler kernels they are
    estimated on the pitch-η/2 grid, and the result is flagged "estimate".
    """
    best = float(projection_tv(model.initial_density, partition))
    kind = model.transition[0]
    if kind == "identity" or steps <= 1:
        return best, "exact"
    dists = transient_path(chain, list(range(steps - 1)))
    if kind == "uniform":
        for p in dists:
            best = max(best, float(projection_tv(_uniform_push(model, partition, p), partition)))
        return best, "exact"
    counts = sum(math.prod(c * 2 for c in g.counts) for g in partition.grids)
    if counts > cell_cap:
        raise RefinementInfeasible(f"refined partition needs {counts} cells (cap {cell_cap})")
    fine = build_grid_partition(model, partition.pitch / 2)
    fchain = reduce_dt(model, fine)
    lift = sp.csr_matrix(np.vstack([refine(np.eye(partition.n)[i], partition, fine) for i in range(partition.n)]))
    owner = (lift > 0).astype(float)
    sub = np.asarray(owner.sum(axis=1)).ravel()
    for p in dists:
        q = fchain.matrix.T @ (lift.T @ p)
        coarse = owner @ q
        # spread each coarse mass evenly over its equal-volume fine cells
        flat = (owner.T @ coarse) / (owner.T @ sub)
        best = max(best, 0.5 * float(np.abs(q - flat).sum()))
    return best, "estimate"


# --------------------------------------------------------------------------- serialisation


def write_chain(chain: MarkovChain, path, sidecar: dict | None = None) -> None:
    """Sparse triplet file (``ctmc|dtmc n nnz`` then ``i j value``) plus ``<path>.json`` sidecar."""
    path = Path(path)
    m = chain.matrix.tocoo()
    with path.open("w") as fh:
        fh.write(f"{'ctmc' if chain.kind == 'ct' else 'dtmc'} {m.shape[0]} {m.nnz}\n")
        for i, j, v in zip(m.row, m.col, m.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
    meta = dict(sidecar or {})
    meta.setdefault("meta", chain.meta)
    if chain.initial is not None:
        meta["initial"] = [float(v) for v in chain.initial]
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_chain(path) -> tuple[MarkovChain, dict]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] not in ("ctmc", "dtmc"):
            raise ValueError(f"{path}: bad chain header")
        n, nnz = int(header[1]), int(header[2])
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape[0] != nnz:
        raise ValueError(f"{path}: expected {nnz} entries, found {data.shape[0]}")
    mat = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n)).tocsr()
    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    init = np.asarray(meta.get("initial", np.eye(1, n, 0).ravel()), dtype=float)
    return MarkovChain("ct" if header[0] == "ctmc" else "dt", mat, init, meta=meta.get("meta", {})), meta
