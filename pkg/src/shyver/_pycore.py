"""Pure-Python simulation kernels (reference implementation and fallback).

Each kernel consumes uniforms from the caller's generator in exactly the order
of the compiled versions in ``_core.pyx``, so both produce identical output
for identical seeds.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"


def ssa_csr(indptr, indices, rates, exit_rates, init, times, rng):
    """SSA trajectories of an explicit CTMC observed at sorted ``times``.

    ``rates`` holds off-diagonal rates in CSR layout; ``init`` gives the start
    state of each trajectory.  Returns an ``(len(init), len(times))`` array.
    """
    nt = len(times)
    out = np.empty((len(init), nt), dtype=np.int64)
    for r in range(len(init)):
        s = int(init[r])
        t = 0.0
        c = 0
        while c < nt:
            e = exit_rates[s]
            if e <= 0.0:
                while c < nt:
                    out[r, c] = s
                    c += 1
                break
            t += -math.log(1.0 - rng.random()) / e
            while c < nt and t > times[c]:
                out[r, c] = s
                c += 1
            if c == nt:
                break
            u = rng.random() * e
            lo, hi = indptr[s], indptr[s + 1]
            nxt = indices[hi - 1]
            for k in range(lo, hi):
                u -= rates[k]
                if u < 0.0:
                    nxt = indices[k]
                    break
            s = int(nxt)
    return out


def _face_rates(A, c, j, n, cell, y, width, ncell):
    m1 = m2 = 0.0
    arg1 = -1
    for k in range(n):
        a = abs(y[k])
        if a > m1:
            m2 = m1
            m1 = a
            arg1 = k
        elif a > m2:
            m2 = a
    ay = [0.0] * n
    for k in range(n):
        s = 0.0
        for l in range(n):
            s += A[j, k, l] * y[l]
        ay[k] = s
    rts = [0.0] * (2 * n)
    for k in range(n):
        lo = -width * ncell / 2.0 + cell[k] * width
        if cell[k] > 0:
            face = lo
            nrm = m2 if arg1 == k else m1
            if abs(face) > nrm:
                nrm = abs(face)
            f = ay[k] + A[j, k, k] * (face - y[k]) + c[j] * nrm * face
            if f < 0.0:
                rts[2 * k] = -f / width
        if cell[k] < ncell - 1:
            face = lo + width
            nrm = m2 if arg1 == k else m1
            if abs(face) > nrm:
                nrm = abs(face)
            f = ay[k] + A[j, k, k] * (face - y[k]) + c[j] * nrm * face
            if f > 0.0:
                rts[2 * k + 1] = f / width
    return rts


def casestudy_run(A, c, lam_down, lam_up, ncell, width, init_cells, init_modes, times, far, rng):
    nsamp, n = init_cells.shape
    nt = len(times)
    m = len(c)
    A = np.asarray(A, dtype=float)
    c = [float(v) for v in c]
    times = [float(v) for v in times]
    far = [int(v) for v in far]
    wout = np.zeros((nsamp, nt), dtype=np.int8)
    mout = np.zeros((nsamp, nt), dtype=np.int8)
    events = np.zeros(nsamp, dtype=np.int64)
    ops = np.zeros(nsamp, dtype=np.int64)
    half = width * ncell / 2.0
    for r in range(nsamp):
        j = int(init_modes[r])
        cell = [int(v) for v in init_cells[r]]
        y = [-half + (cell[k] + 0.5) * width for k in range(n)]
        nfar = sum(far[v] for v in cell)
        t = 0.0
        cidx = 0
        while cidx < nt:
            rts = _face_rates(A, c, j, n, cell, y, width, ncell)
            ops[r] += 1
            total = 0.0
            for v in rts:
                total += v
            if j > 0:
                total += lam_down
            if j < m - 1:
                total += lam_up
            if total <= 0.0:
                while cidx < nt:
                    wout[r, cidx] = 1 if nfar == 2 else 0
                    mout[r, cidx] = j
                    cidx += 1
                break
            t += -math.log(1.0 - rng.random()) / total
            while cidx < nt and t > times[cidx]:
                wout[r, cidx] = 1 if nfar == 2 else 0
                mout[r, cidx] = j
                cidx += 1
            if cidx == nt:
                break
            u = rng.random() * total
            events[r] += 1
            if j > 0:
                u -= lam_down
                if u < 0.0:
                    j -= 1
                    continue
            if j < m - 1:
                u -= lam_up
                if u < 0.0:
                    j += 1
                    continue
            pick = 2 * n - 1
            while pick > 0 and rts[pick] == 0.0:
                pick -= 1
            for k in range(2 * n):
                u -= rts[k]
                if u < 0.0:
                    pick = k
                    break
            k = pick // 2
            nfar -= far[cell[k]]
            cell[k] += -1 if pick % 2 == 0 else 1
            nfar += far[cell[k]]
            y[k] = -half + (cell[k] + 0.5) * width
    return wout, mout, events, ops
