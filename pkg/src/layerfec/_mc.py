"""Jitted Monte-Carlo drivers for the erasure-channel simulator.

Each trial derives its own key from (point key, trial index), so results
are identical however trials are scheduled. The drivers rebuild every
trial's constraint matrix from the same generator chain the library codec
uses (see _bits.layer_code_key), which keeps the kernels and the
object-level encode/decode paths interchangeable.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._bits import (
    MASK64,
    TAG_PARITY,
    TAG_PRECODE,
    TAG_TRIAL,
    U64,
    all_sources_solvable,
    derive,
    fill_lt_row,
    fill_neighbors,
    fill_parity_into,
    la_prefix_recoverable,
    layer_code_key,
    next_u64,
    rref_recovered,
    sample_iid_received,
    sample_received,
)


@njit(cache=True)
def _draw_received(trial_key, n_out, fixed_r, keep_prob, pos):
    """Fixed-count when fixed_r >= 0, else IID with keep_prob."""
    if fixed_r >= 0:
        sample_received(trial_key, n_out, fixed_r, pos)
        return fixed_r
    return sample_iid_received(trial_key, n_out, keep_prob, pos)


@njit(cache=True)
def plr_prc_ideal(point_key, n_out, fixed_r, keep_prob, trials, kstars, failures):
    pos = np.empty(n_out, dtype=np.int64)
    m = kstars.shape[0]
    for t in range(trials):
        trial_key = derive(point_key, TAG_TRIAL + t)
        r = _draw_received(trial_key, n_out, fixed_r, keep_prob, pos)
        for i in range(m):
            if r < kstars[i]:
                failures[i] += 1


@njit(cache=True)
def plr_baseline_ideal(point_key, n_out, fixed_r, keep_prob, trials,
                       ks, seg_of, layer_aware, failures):
    pos = np.empty(n_out, dtype=np.int64)
    m = ks.shape[0]
    counts = np.empty(m, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(point_key, TAG_TRIAL + t)
        r = _draw_received(trial_key, n_out, fixed_r, keep_prob, pos)
        for i in range(m):
            counts[i] = 0
        for j in range(r):
            counts[seg_of[pos[j]]] += 1
        for i in range(m):
            if layer_aware:
                ok = la_prefix_recoverable(counts, ks, i)
            else:
                ok = counts[i] >= ks[i]
            if not ok:
                failures[i] += 1


@njit(cache=True)
def _solve_one_layer(mat, lkey, esis, n_esis, cdf, k, precode):
    """Build and solve one layer's system from the received esis."""
    words = (k + precode + 63) >> 6
    nrows = n_esis + precode
    for r in range(nrows):
        for w in range(words):
            mat[r, w] = U64(0)
    n_inner = k + precode
    mark = np.zeros(n_inner, dtype=np.bool_)
    nbr = np.empty(n_inner, dtype=np.int64)
    for j in range(n_esis):
        fill_lt_row(mat[j], lkey, esis[j], cdf, n_inner, mark, nbr)
    if precode > 0:
        fill_parity_into(mat, n_esis, derive(lkey, TAG_PRECODE), k, precode)
    return all_sources_solvable(mat, nrows, k, precode)


@njit(cache=True)
def plr_prc_ml(point_key, n_out, fixed_r, keep_prob, trials,
               kstars, precode, cdfs, failures):
    m = kstars.shape[0]
    lmax = 0
    for i in range(m):
        if kstars[i] + precode > lmax:
            lmax = kstars[i] + precode
    words = (lmax + 63) >> 6
    mat = np.zeros((n_out + precode, words), dtype=np.uint64)
    pos = np.empty(n_out, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(point_key, TAG_TRIAL + t)
        r = _draw_received(trial_key, n_out, fixed_r, keep_prob, pos)
        for i in range(m):
            if r < kstars[i]:
                failures[i] += 1
                continue
            lkey = layer_code_key(trial_key, i)
            ok = _solve_one_layer(mat, lkey, pos, r, cdfs[i], kstars[i], precode)
            if not ok:
                failures[i] += 1


@njit(cache=True)
def plr_sp_ml(point_key, n_out, fixed_r, keep_prob, trials,
              ks, seg_of, offsets, precode, cdfs, failures):
    m = ks.shape[0]
    lmax = 0
    for i in range(m):
        if ks[i] + precode > lmax:
            lmax = ks[i] + precode
    words = (lmax + 63) >> 6
    mat = np.zeros((n_out + precode, words), dtype=np.uint64)
    pos = np.empty(n_out, dtype=np.int64)
    local = np.empty(n_out, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(point_key, TAG_TRIAL + t)
        r = _draw_received(trial_key, n_out, fixed_r, keep_prob, pos)
        for i in range(m):
            cnt = 0
            for j in range(r):
                if seg_of[pos[j]] == i:
                    local[cnt] = pos[j] - offsets[i]
                    cnt += 1
            if cnt < ks[i]:
                failures[i] += 1
                continue
            lkey = layer_code_key(trial_key, i)
            ok = _solve_one_layer(mat, lkey, local, cnt, cdfs[i], ks[i], precode)
            if not ok:
                failures[i] += 1


@njit(cache=True)
def _la_joint_solve(trial_key, esis, segs, n_rows, prefixes, precode, cdfs,
                    mat, payload, recovered, values):
    """Joint layer-aware system: segment i symbols span sources 0..K_i plus
    segment i's parity block. Returns nothing; fills `recovered`."""
    m = prefixes.shape[0] - 1
    K = prefixes[m]
    ncols = K + m * precode
    words = (ncols + 63) >> 6
    total_rows = n_rows + m * precode
    for r in range(total_rows):
        for w in range(words):
            mat[r, w] = U64(0)
    lmax = K + precode
    mark = np.zeros(lmax, dtype=np.bool_)
    nbr = np.empty(lmax, dtype=np.int64)
    for j in range(n_rows):
        seg = segs[j]
        kk = prefixes[seg + 1]
        n_inner = kk + precode
        lkey = layer_code_key(trial_key, seg)
        fill_lt_row_mapped(mat[j], lkey, esis[j], cdfs[seg], n_inner,
                           kk, K + seg * precode, mark, nbr)
    row0 = n_rows
    for seg in range(m):
        if precode > 0:
            kk = prefixes[seg + 1]
            lkey = layer_code_key(trial_key, seg)
            fill_parity_mapped(mat, row0, derive(lkey, TAG_PRECODE), kk,
                               K + seg * precode, precode)
            row0 += precode
    rref_recovered(mat, total_rows, ncols, payload, recovered, values)


@njit(cache=True)
def fill_lt_row_mapped(row, key, esi, cdf, n_inner, kk, parity_base, mark, nbr):
    """LT row whose neighbor indices >= kk are relocated to parity_base."""
    d = fill_neighbors(key, esi, cdf, n_inner, mark, nbr)
    for i in range(d):
        idx = nbr[i]
        if idx >= kk:
            idx = parity_base + (idx - kk)
        row[idx >> 6] |= U64(1) << U64(idx & 63)
    return d


@njit(cache=True)
def fill_parity_mapped(mat, row0, precode_key, kk, parity_base, s):
    """Constraint rows of one segment's pre-code in the joint column space."""
    words_k = (kk + 63) >> 6
    tail = words_k * 64 - kk
    for p in range(s):
        r = row0 + p
        state = derive(precode_key, TAG_PARITY + p)
        for w in range(words_k):
            state, z = next_u64(state)
            if w == words_k - 1 and tail > 0:
                z &= MASK64 >> U64(tail)
            mat[r, w] |= z
        idx = parity_base + p
        mat[r, idx >> 6] |= U64(1) << U64(idx & 63)


@njit(cache=True)
def plr_la_ml(point_key, n_out, fixed_r, keep_prob, trials,
              ks, seg_of, offsets, precode, cdfs, failures):
    m = ks.shape[0]
    prefixes = np.zeros(m + 1, dtype=np.int64)
    for i in range(m):
        prefixes[i + 1] = prefixes[i] + ks[i]
    K = prefixes[m]
    ncols = K + m * precode
    words = (ncols + 63) >> 6
    mat = np.zeros((n_out + m * precode, words), dtype=np.uint64)
    payload = np.zeros((n_out + m * precode, 0), dtype=np.uint8)
    recovered = np.zeros(ncols, dtype=np.bool_)
    values = np.zeros((ncols, 0), dtype=np.uint8)
    pos = np.empty(n_out, dtype=np.int64)
    esis = np.empty(n_out, dtype=np.int64)
    segs = np.empty(n_out, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(point_key, TAG_TRIAL + t)
        r = _draw_received(trial_key, n_out, fixed_r, keep_prob, pos)
        for j in range(r):
            seg = seg_of[pos[j]]
            segs[j] = seg
            esis[j] = pos[j] - offsets[seg]
        _la_joint_solve(trial_key, esis, segs, r, prefixes, precode, cdfs,
                        mat, payload, recovered, values)
        for i in range(m):
            ok = True
            for c in range(prefixes[i], prefixes[i + 1]):
                if not recovered[c]:
                    ok = False
                    break
            if not ok:
                failures[i] += 1


@njit(cache=True)
def buffer_prc_ml(run_key, n_out, trials, kstars, precode, cdfs, times):
    """Earliest prefix length t at which each layer decodes, per trial.

    Lossless sequential arrival: the prefix at time t is esi 0..t-1.
    Binary search over t is valid because adding rows never removes
    recovered symbols. times[t, i] = -1 when even the full block fails.
    """
    m = kstars.shape[0]
    lmax = 0
    for i in range(m):
        if kstars[i] + precode > lmax:
            lmax = kstars[i] + precode
    words = (lmax + 63) >> 6
    mat = np.zeros((n_out + precode, words), dtype=np.uint64)
    esis = np.arange(n_out, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(run_key, TAG_TRIAL + t)
        for i in range(m):
            lkey = layer_code_key(trial_key, i)
            lo = kstars[i] - 1  # known fail: fewer rows than unknowns
            hi = n_out
            if not _solve_one_layer(mat, lkey, esis, hi, cdfs[i], kstars[i], precode):
                times[t, i] = -1
                continue
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if _solve_one_layer(mat, lkey, esis, mid, cdfs[i], kstars[i], precode):
                    hi = mid
                else:
                    lo = mid
            times[t, i] = hi


@njit(cache=True)
def buffer_sp_ml(run_key, n_out, trials, ks, offsets, ns, precode, cdfs, times):
    """SP buffering: segment i occupies positions [offsets[i], offsets[i]+ns[i])."""
    m = ks.shape[0]
    lmax = 0
    for i in range(m):
        if ks[i] + precode > lmax:
            lmax = ks[i] + precode
    words = (lmax + 63) >> 6
    mat = np.zeros((n_out + precode, words), dtype=np.uint64)
    esis = np.arange(n_out, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(run_key, TAG_TRIAL + t)
        for i in range(m):
            lkey = layer_code_key(trial_key, i)
            lo = offsets[i] + ks[i] - 1
            hi = offsets[i] + ns[i]
            if not _solve_one_layer(mat, lkey, esis, ns[i], cdfs[i], ks[i], precode):
                times[t, i] = -1
                continue
            while hi - lo > 1:
                mid = (lo + hi) // 2
                cnt = mid - offsets[i]
                if _solve_one_layer(mat, lkey, esis, cnt, cdfs[i], ks[i], precode):
                    hi = mid
                else:
                    lo = mid
            times[t, i] = hi


@njit(cache=True)
def buffer_la_ml(run_key, n_out, trials, ks, offsets, ns, precode, cdfs, times):
    """LA buffering via the joint solve at candidate prefixes."""
    m = ks.shape[0]
    prefixes = np.zeros(m + 1, dtype=np.int64)
    for i in range(m):
        prefixes[i + 1] = prefixes[i] + ks[i]
    K = prefixes[m]
    ncols = K + m * precode
    words = (ncols + 63) >> 6
    mat = np.zeros((n_out + m * precode, words), dtype=np.uint64)
    payload = np.zeros((n_out + m * precode, 0), dtype=np.uint8)
    recovered = np.zeros(ncols, dtype=np.bool_)
    values = np.zeros((ncols, 0), dtype=np.uint8)
    esis = np.empty(n_out, dtype=np.int64)
    segs = np.empty(n_out, dtype=np.int64)
    for t in range(trials):
        trial_key = derive(run_key, TAG_TRIAL + t)
        for i in range(m):
            # segment i is the first to cover layer i, so no prefix shorter
            # than offsets[i] + k_i can carry enough information
            lo = offsets[i] + ks[i] - 1
            hi = n_out
            if not _la_layer_ok(trial_key, i, hi, prefixes, offsets, ns, precode,
                                cdfs, mat, payload, recovered, values, esis, segs):
                times[t, i] = -1
                continue
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if _la_layer_ok(trial_key, i, mid, prefixes, offsets, ns, precode,
                                cdfs, mat, payload, recovered, values, esis, segs):
                    hi = mid
                else:
                    lo = mid
            times[t, i] = hi


@njit(cache=True)
def _la_layer_ok(trial_key, layer, t, prefixes, offsets, ns, precode, cdfs,
                 mat, payload, recovered, values, esis, segs):
    m = ns.shape[0]
    n_rows = 0
    for seg in range(m):
        have = t - offsets[seg]
        if have > ns[seg]:
            have = ns[seg]
        for e in range(max(0, have)):
            esis[n_rows] = e
            segs[n_rows] = seg
            n_rows += 1
    _la_joint_solve(trial_key, esis, segs, n_rows, prefixes, precode, cdfs,
                    mat, payload, recovered, values)
    for c in range(prefixes[layer], prefixes[layer + 1]):
        if not recovered[c]:
            return False
    return True
