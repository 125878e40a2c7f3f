# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled optimal-symbol-similarity kernels.

All functions take the packed layout built by ``procflow.dissim.pack``:

offsets        start of each sequence in the concatenated position arrays (n + 1)
sym_offsets    start of each sequence's distinct-symbol list (n + 1)
syms           distinct symbols of each sequence, ascending
occ_start      (n, N) offset into occ_pos of each symbol's sorted positions
occ_count      (n, N) number of occurrences of each symbol
occ_pos        within-sequence positions, grouped by (sequence, symbol)
tnorm          timestamps divided by the sequence's final timestamp

For a symbol occurring m times on one side and n >= m times on the other,
the m occurrences are matched to an order-preserving subset of the n by a
banded dynamic programme (equal counts: k-th with k-th).  The side with fewer
occurrences is always the "small" side and matched pairs are visited in
(symbol, small-side rank) order, so d(i, j) == d(j, i) holds exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

ctypedef const long long[::1] ivec
ctypedef const long long[:, ::1] imat
ctypedef const double[::1] dvec


cdef inline double _pair(
    ivec offsets, ivec sym_offsets, ivec syms, imat occ_start, imat occ_count,
    ivec occ_pos, dvec tnorm, double w_time, Py_ssize_t i, Py_ssize_t j,
    double[::1] dp, unsigned char[::1] choice, long long[::1] hit,
) noexcept nogil:
    cdef long long Li = offsets[i + 1] - offsets[i]
    cdef long long Lj = offsets[j + 1] - offsets[j]
    cdef long long M = Li if Li > Lj else Lj
    cdef long long pos_sum = 0, matched = 0
    cdef double time_sum = 0.0
    cdef long long s, a, m, nl, S, k, r, p, q, ss, sl, os_, ol
    cdef double via_match, via_skip, c
    for s in range(sym_offsets[i], sym_offsets[i + 1]):
        a = syms[s]
        if occ_count[j, a] == 0:
            continue
        # orient: small side (fewer occurrences; ties -> i) vs large side
        if occ_count[j, a] < occ_count[i, a]:
            m, nl = occ_count[j, a], occ_count[i, a]
            ss, sl = occ_start[j, a], occ_start[i, a]
            os_, ol = offsets[j], offsets[i]
        else:
            m, nl = occ_count[i, a], occ_count[j, a]
            ss, sl = occ_start[i, a], occ_start[j, a]
            os_, ol = offsets[i], offsets[j]
        S = nl - m
        if S == 0:
            for k in range(m):
                hit[k] = k
        else:
            # dp[t] after row r: best cost matching small[0..r) having skipped t large
            for k in range(S + 1):
                dp[k] = 0.0
            for r in range(1, m + 1):
                p = occ_pos[ss + r - 1]
                for k in range(S + 1):
                    q = occ_pos[sl + r - 1 + k]
                    c = (1.0 - w_time) * <double>(p - q if p > q else q - p) + w_time * <double>M * fabs(tnorm[os_ + p] - tnorm[ol + q])
                    via_match = dp[k] + c
                    if k > 0:
                        via_skip = dp[k - 1]
                        if via_match <= via_skip:
                            dp[k] = via_match
                            choice[r * (S + 1) + k] = 1
                        else:
                            dp[k] = via_skip
                            choice[r * (S + 1) + k] = 0
                    else:
                        dp[k] = via_match
                        choice[r * (S + 1) + k] = 1
            r, k = m, S
            while r > 0:
                if choice[r * (S + 1) + k]:
                    hit[r - 1] = r - 1 + k
                    r -= 1
                else:
                    k -= 1
        for k in range(m):
            p = occ_pos[ss + k]
            q = occ_pos[sl + hit[k]]
            pos_sum += p - q if p > q else q - p
            if w_time > 0.0:
                time_sum += fabs(tnorm[os_ + p] - tnorm[ol + q])
        matched += m
    cdef double cost = (1.0 - w_time) * (<double>pos_sum / <double>M) + w_time * time_sum
    return (cost + <double>(Li + Lj - 2 * matched)) / <double>(Li + Lj)


def _scratch(occ_count):
    c = int(np.max(occ_count)) if occ_count.size else 0
    return np.empty(c + 2), np.empty((c + 2) * (c + 2), dtype=np.uint8), np.empty(c + 2, dtype=np.int64)


def fill_rows(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, double w_time,
              Py_ssize_t row_start, Py_ssize_t row_stop, double[:, ::1] out):
    """Fill ``out[i, j]`` for ``row_start <= i < row_stop`` and ``j > i`` (upper triangle)."""
    cdef ivec o_ = offsets, so_ = sym_offsets, sy_ = syms, op_ = occ_pos
    cdef imat st_ = occ_start, ct_ = occ_count
    cdef dvec t_ = tnorm
    cdef double[::1] dp
    cdef unsigned char[::1] ch
    cdef long long[::1] hit
    dp, ch, hit = _scratch(occ_count)
    cdef Py_ssize_t n = o_.shape[0] - 1
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(row_start, row_stop):
            for j in range(i + 1, n):
                out[i, j] = _pair(o_, so_, sy_, st_, ct_, op_, t_, w_time, i, j, dp, ch, hit)


def eval_pairs(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, double w_time,
               const long long[:, ::1] pairs, double[::1] out):
    """``out[k] = d(pairs[k, 0], pairs[k, 1])``."""
    cdef ivec o_ = offsets, so_ = sym_offsets, sy_ = syms, op_ = occ_pos
    cdef imat st_ = occ_start, ct_ = occ_count
    cdef dvec t_ = tnorm
    cdef double[::1] dp
    cdef unsigned char[::1] ch
    cdef long long[::1] hit
    dp, ch, hit = _scratch(occ_count)
    cdef Py_ssize_t k
    with nogil:
        for k in range(pairs.shape[0]):
            out[k] = _pair(o_, so_, sy_, st_, ct_, op_, t_, w_time, pairs[k, 0], pairs[k, 1], dp, ch, hit)
