# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: biquad cascade with output clipping, slot sums."""

import numpy as np


def sos_filter(const double[:, ::1] sos, const double[::1] x, double[:, ::1] zi,
               double lo, double hi):
    """Filter ``x`` through the biquad cascade ``sos``, clip to [lo, hi].

    ``zi`` is the (n_sections, 2) transposed direct-form II state and is
    updated in place. Returns ``(y, n_clipped)``.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t n_sec = sos.shape[0]
    cdef Py_ssize_t i, s
    cdef double v, y
    cdef long long n_clipped = 0
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] out_v = out

    with nogil:
        for i in range(n):
            v = x[i]
            for s in range(n_sec):
                y = sos[s, 0] * v + zi[s, 0]
                zi[s, 0] = sos[s, 1] * v - sos[s, 4] * y + zi[s, 1]
                zi[s, 1] = sos[s, 2] * v - sos[s, 5] * y
                v = y
            if v > hi:
                v = hi
                n_clipped += 1
            elif v < lo:
                v = lo
                n_clipped += 1
            out_v[i] = v
    return out, int(n_clipped)


def slot_sums(const double[::1] x, Py_ssize_t start, Py_ssize_t period,
              Py_ssize_t width, Py_ssize_t n_slots):
    """Sum ``width`` samples starting at ``start + k*period`` for each slot k."""
    cdef Py_ssize_t k, j, base
    cdef double acc
    out = np.empty(n_slots, dtype=np.float64)
    cdef double[::1] out_v = out
    with nogil:
        for k in range(n_slots):
            base = start + k * period
            acc = 0.0
            for j in range(width):
                acc += x[base + j]
            out_v[k] = acc
    return out
