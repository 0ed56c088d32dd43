# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Uniforms are drawn with ``next_double`` from the caller's numpy bit generator,
which is the same stream ``Generator.random()`` consumes, so results match
the pure-Python kernels in ``_pycore`` draw for draw.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

cnp.import_array()

NAME = "cython"


cdef inline bitgen_t* _bitgen(rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


def ssa_csr(const long long[::1] indptr, const long long[::1] indices, const double[::1] rates,
            const double[::1] exit_rates, const long long[::1] init, const double[::1] times, rng):
    cdef Py_ssize_t nsamp = init.shape[0], nt = times.shape[0]
    out_arr = np.empty((nsamp, nt), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t r, c, k
    cdef long long s, nxt
    cdef double t, e, u
    with rng.bit_generator.lock, nogil:
        for r in range(nsamp):
            s = init[r]
            t = 0.0
            c = 0
            while c < nt:
                e = exit_rates[s]
                if e <= 0.0:
                    while c < nt:
                        out[r, c] = s
                        c += 1
                    break
                t += -log(1.0 - bg.next_double(bg.state)) / e
                while c < nt and t > times[c]:
                    out[r, c] = s
                    c += 1
                if c == nt:
                    break
                u = bg.next_double(bg.state) * e
                nxt = indices[indptr[s + 1] - 1]
                for k in range(indptr[s], indptr[s + 1]):
                    u -= rates[k]
                    if u < 0.0:
                        nxt = indices[k]
                        break
                s = nxt
    return out_arr


cdef inline void _face_rates(const double[:, :, ::1] A, const double[::1] c, Py_ssize_t j, Py_ssize_t n,
                             long long[::1] cell, double[::1] y, double[::1] ay, double[::1] rts,
                             double width, long long ncell) noexcept nogil:
    # rts[2k]   : rate of cell[k] -> cell[k] - 1
    # rts[2k+1] : rate of cell[k] -> cell[k] + 1
    cdef Py_ssize_t k, l
    cdef double m1 = 0.0, m2 = 0.0, a, face, f, nrm, lo
    cdef Py_ssize_t arg1 = -1
    for k in range(n):
        a = fabs(y[k])
        if a > m1:
            m2 = m1
            m1 = a
            arg1 = k
        elif a > m2:
            m2 = a
    for k in range(n):
        ay[k] = 0.0
        for l in range(n):
            ay[k] += A[j, k, l] * y[l]
    for k in range(n):
        lo = -width * ncell / 2.0 + cell[k] * width
        rts[2 * k] = 0.0
        rts[2 * k + 1] = 0.0
        if cell[k] > 0:
            face = lo
            nrm = m2 if arg1 == k else m1
            if fabs(face) > nrm:
                nrm = fabs(face)
            f = ay[k] + A[j, k, k] * (face - y[k]) + c[j] * nrm * face
            if f < 0.0:
                rts[2 * k] = -f / width
        if cell[k] < ncell - 1:
            face = lo + width
            nrm = m2 if arg1 == k else m1
            if fabs(face) > nrm:
                nrm = fabs(face)
            f = ay[k] + A[j, k, k] * (face - y[k]) + c[j] * nrm * face
            if f > 0.0:
                rts[2 * k + 1] = f / width
    return


def casestudy_run(const double[:, :, ::1] A, const double[::1] c, double lam_down, double lam_up,
                  long long ncell, double width, const long long[:, ::1] init_cells,
                  const long long[::1] init_modes, const double[::1] times,
                  const signed char[::1] far, rng):
    """Simulate the implicit case-study chain.

    Returns ``(w, modes, events, rate_evals)``: the two-far-coordinates
    indicator and the mode at each observation time, plus per-trajectory
    counts of transition events and face-rate evaluations.
    """
    cdef Py_ssize_t nsamp = init_cells.shape[0], n = init_cells.shape[1], nt = times.shape[0]
    cdef Py_ssize_t m = c.shape[0]
    w_arr = np.zeros((nsamp, nt), dtype=np.int8)
    mode_arr = np.zeros((nsamp, nt), dtype=np.int8)
    ev_arr = np.zeros(nsamp, dtype=np.int64)
    op_arr = np.zeros(nsamp, dtype=np.int64)
    cdef signed char[:, ::1] wout = w_arr
    cdef signed char[:, ::1] mout = mode_arr
    cdef long long[::1] events = ev_arr
    cdef long long[::1] ops = op_arr
    cell_arr = np.zeros(n, dtype=np.int64)
    y_arr = np.zeros(n, dtype=float)
    ay_arr = np.zeros(n, dtype=float)
    rts_arr = np.zeros(2 * n, dtype=float)
    cdef long long[::1] cell = cell_arr
    cdef double[::1] y = y_arr, ay = ay_arr, rts = rts_arr
    cdef bitgen_t* bg = _bitgen(rng)
    cdef Py_ssize_t r, k, cidx, pick
    cdef long long j, nfar
    cdef double t, total, u, half = width * ncell / 2.0
    with rng.bit_generator.lock, nogil:
        for r in range(nsamp):
            j = init_modes[r]
            nfar = 0
            for k in range(n):
                cell[k] = init_cells[r, k]
                y[k] = -half + (cell[k] + 0.5) * width
                nfar += far[cell[k]]
            t = 0.0
            cidx = 0
            while cidx < nt:
                _face_rates(A, c, j, n, cell, y, ay, rts, width, ncell)
                ops[r] += 1
                total = 0.0
                for k in range(2 * n):
                    total += rts[k]
                if j > 0:
                    total += lam_down
                if j < m - 1:
                    total += lam_up
                if total <= 0.0:
                    while cidx < nt:
                        wout[r, cidx] = 1 if nfar == 2 else 0
                        mout[r, cidx] = <signed char> j
                        cidx += 1
                    break
                t += -log(1.0 - bg.next_double(bg.state)) / total
                while cidx < nt and t > times[cidx]:
                    wout[r, cidx] = 1 if nfar == 2 else 0
                    mout[r, cidx] = <signed char> j
                    cidx += 1
                if cidx == nt:
                    break
                u = bg.next_double(bg.state) * total
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
                if pick % 2 == 0:
                    cell[k] -= 1
                else:
                    cell[k] += 1
                nfar += far[cell[k]]
                y[k] = -half + (cell[k] + 0.5) * width
    return w_arr, mode_arr, ev_arr, op_arr
