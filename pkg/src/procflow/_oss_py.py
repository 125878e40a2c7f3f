"""Pure-Python/numpy OSS kernels with the same interface and arithmetic as ``_oss_c``.

Matching choices use the same dynamic programme and tie-breaking, and
matched-pair time costs are accumulated sequentially (``np.cumsum``) in
(symbol, small-side rank) order, so results agree bit for bit with the
compiled kernel.
"""

from __future__ import annotations

import numpy as np


def _match(small, large, ts, tl, w_time, M):
    """Indices into ``large`` matched to each element of ``small`` (both sorted positions)."""
    m, S = len(small), len(large) - len(small)
    if S == 0:
        return list(range(m))
    dp = [0.0] * (S + 1)
    choice = [[1] * (S + 1) for _ in range(m + 1)]
    wM = w_time * float(M)
    for r in range(1, m + 1):
        p = small[r - 1]
        for k in range(S + 1):
            q = large[r - 1 + k]
            c = (1.0 - w_time) * float(abs(p - q)) + wM * abs(ts[p] - tl[q])
            via_match = dp[k] + c
            if k > 0 and not via_match <= dp[k - 1]:
                dp[k] = dp[k - 1]
                choice[r][k] = 0
            else:
                dp[k] = via_match
    hit = [0] * m
    r, k = m, S
    while r > 0:
        if choice[r][k]:
            hit[r - 1] = r - 1 + k
            r -= 1
        else:
            k -= 1
    return hit


def _pair(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, w_time, i, j) -> float:
    Li = int(offsets[i + 1] - offsets[i])
    Lj = int(offsets[j + 1] - offsets[j])
    M = max(Li, Lj)
    ti = tnorm[offsets[i] : offsets[i + 1]]
    tj = tnorm[offsets[j] : offsets[j + 1]]
    P, Q, TS, TL = [], [], [], []
    for a in syms[sym_offsets[i] : sym_offsets[i + 1]]:
        ci, cj = int(occ_count[i, a]), int(occ_count[j, a])
        if cj == 0:
            continue
        pi = occ_pos[occ_start[i, a] : occ_start[i, a] + ci]
        pj = occ_pos[occ_start[j, a] : occ_start[j, a] + cj]
        if cj < ci:
            small, large, ts, tl = pj, pi, tj, ti
        else:
            small, large, ts, tl = pi, pj, ti, tj
        hit = _match(small.tolist(), large.tolist(), ts, tl, w_time, M)
        P.append(small)
        Q.append(large[hit])
        TS.append(ts[small])
        TL.append(tl[large[hit]])
    matched = 0
    pos_sum = 0
    time_sum = 0.0
    if P:
        p, q = np.concatenate(P), np.concatenate(Q)
        matched = int(p.size)
        pos_sum = int(np.abs(p - q).sum())
        if w_time > 0.0:
            time_sum = float(np.cumsum(np.abs(np.concatenate(TS) - np.concatenate(TL)))[-1])
    cost = (1.0 - w_time) * (float(pos_sum) / float(M)) + w_time * time_sum
    return (cost + float(Li + Lj - 2 * matched)) / float(Li + Lj)


def fill_rows(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, w_time, row_start, row_stop, out):
    n = offsets.shape[0] - 1
    for i in range(row_start, row_stop):
        for j in range(i + 1, n):
            out[i, j] = _pair(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, w_time, i, j)


def eval_pairs(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, w_time, pairs, out):
    for k in range(pairs.shape[0]):
        out[k] = _pair(offsets, sym_offsets, syms, occ_start, occ_count, occ_pos, tnorm, w_time, pairs[k, 0], pairs[k, 1])
