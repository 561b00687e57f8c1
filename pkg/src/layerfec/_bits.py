"""Bit-level primitives shared by the codec and the simulator.

Everything here is deterministic: the counter-based PRNG is a splitmix64
stream, so any (key, index) pair regenerates the same values on every run
and platform. GF(2) matrices are bit-packed into uint64 words, 64 columns
per word.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
MASK64 = U64(0xFFFFFFFFFFFFFFFF)
GOLDEN = U64(0x9E3779B97F4A7C15)

# Tag namespaces for key derivation; spaced 2**32 apart so small indices
# never collide across namespaces.
TAG_STREAM = 1 << 32
TAG_LAYER = 2 << 32
TAG_ESI = 3 << 32
TAG_TRIAL = 4 << 32
TAG_ERASE = 5 << 32
TAG_PRECODE = 6 << 32
TAG_PARITY = 7 << 32
TAG_POINT = 8 << 32
TAG_BUFFER = 9 << 32

_INV53 = 1.0 / (1 << 53)


@njit(cache=True)
def fin(z):
    """splitmix64 finalizer (bijective 64-bit mixer)."""
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True)
def derive(key, n):
    """Derive a child key from (key, n). n must stay below 2**63."""
    return fin(key ^ fin(U64(n) + GOLDEN))


@njit(cache=True)
def next_u64(state):
    """Advance a splitmix64 stream; returns (new_state, value)."""
    state = state + GOLDEN
    return state, fin(state)


@njit(cache=True)
def next_unit(state):
    """Advance the stream; returns (new_state, float in [0, 1))."""
    state, z = next_u64(state)
    return state, float(z >> U64(11)) * _INV53


@njit(cache=True)
def next_below(state, n):
    """Advance the stream; returns (new_state, uniform int in [0, n))."""
    n64 = U64(n)
    limit = MASK64 - (MASK64 % n64 + U64(1)) % n64
    while True:
        state, z = next_u64(state)
        if z <= limit:
            return state, int(z % n64)


def words_for(ncols: int) -> int:
    return (ncols + 63) >> 6


def derive_key(key, n) -> np.uint64:
    """Python-side derive: coerces arguments so the jitted kernel never
    sees an out-of-range Python int."""
    return np.uint64(derive(np.uint64(int(key) & 0xFFFFFFFFFFFFFFFF), int(n)))


@njit(cache=True)
def sample_degree(state, cdf, nmax):
    """Sample 1..nmax from the cumulative mass cdf (len >= nmax)."""
    state, u = next_unit(state)
    d = int(np.searchsorted(cdf, u, side="right")) + 1
    if d > nmax:
        d = nmax
    return state, d


@njit(cache=True)
def fill_neighbors(key, esi, cdf, n, mark, out):
    """Degree and distinct neighbor indices for one encoding symbol.

    mark: bool scratch of length >= n, all False on entry and exit.
    out: int64 scratch of length >= n. Returns the degree d; the
    neighbors are out[:d], unsorted.
    """
    state = derive(key, TAG_ESI + esi)
    state, d = sample_degree(state, cdf, n)
    cnt = 0
    while cnt < d:
        state, idx = next_below(state, n)
        if not mark[idx]:
            mark[idx] = True
            out[cnt] = idx
            cnt += 1
    for i in range(d):
        mark[out[i]] = False
    return d


@njit(cache=True)
def fill_lt_row(row, key, esi, cdf, n, mark, out):
    """Bit-pack one encoding symbol's neighbor set into a matrix row."""
    d = fill_neighbors(key, esi, cdf, n, mark, out)
    for i in range(d):
        idx = out[i]
        row[idx >> 6] |= U64(1) << U64(idx & 63)
    return d


@njit(cache=True)
def fill_parity_masks(key, k, s, masks):
    """Dense pre-code masks: bit j of masks[p] says source j feeds parity p.

    masks: (s, words_for(k)) uint64, zeroed by this function.
    """
    words = masks.shape[1]
    tail = words * 64 - k
    for p in range(s):
        state = derive(key, TAG_PARITY + p)
        for w in range(words):
            state, z = next_u64(state)
            masks[p, w] = z
        if tail > 0:
            masks[p, words - 1] &= MASK64 >> U64(tail)


@njit(cache=True)
def fill_parity_rows(mat, row0, masks, k, s):
    """Append pre-code constraint rows: source mask plus own parity column."""
    mwords = masks.shape[1]
    for p in range(s):
        r = row0 + p
        for w in range(mwords):
            mat[r, w] |= masks[p, w]
        idx = k + p
        mat[r, idx >> 6] |= U64(1) << U64(idx & 63)


@njit(cache=True)
def fill_parity_into(mat, row0, precode_key, k, s):
    """Generate the pre-code constraint rows directly into mat.

    Bit-for-bit identical to fill_parity_masks followed by
    fill_parity_rows; used by the simulation kernels.
    """
    words_k = (k + 63) >> 6
    tail = words_k * 64 - k
    for p in range(s):
        r = row0 + p
        state = derive(precode_key, TAG_PARITY + p)
        for w in range(words_k):
            state, z = next_u64(state)
            if w == words_k - 1 and tail > 0:
                z &= MASK64 >> U64(tail)
            mat[r, w] |= z
        idx = k + p
        mat[r, idx >> 6] |= U64(1) << U64(idx & 63)


@njit(cache=True)
def layer_code_key(block_seed, layer):
    """Key of layer `layer`'s encoding-symbol generator within a block.

    Mirrors the library path: subseed(block_seed, layer) followed by
    stream_key of the child seed.
    """
    return derive(derive(derive(block_seed, TAG_STREAM), TAG_LAYER + layer),
                  TAG_STREAM)


@njit(cache=True)
def la_prefix_recoverable(counts, ks, layer):
    """Idealized layer-aware recovery: treat each segment-i symbol as a
    generic equation over layers 1..i. Segments above the target layer
    contribute max(0, carry + R_i - k_i); then every suffix of layers
    l..layer must satisfy the counting bound."""
    m = ks.shape[0]
    carry = 0
    for i in range(m - 1, layer, -1):
        c = carry + counts[i] - ks[i]
        carry = c if c > 0 else 0
    tail_r = carry
    tail_k = 0
    for l in range(layer, -1, -1):
        tail_r += counts[l]
        tail_k += ks[l]
        if tail_r < tail_k:
            return False
    return True


@njit(cache=True)
def sample_received(key, n, r, buf):
    """Choose r distinct positions out of n, uniformly; fills buf[:r].

    buf: int64 scratch of length >= n. Returned positions are unsorted.
    """
    for i in range(n):
        buf[i] = i
    state = derive(key, TAG_ERASE)
    for i in range(r):
        state, j = next_below(state, n - i)
        j += i
        t = buf[i]
        buf[i] = buf[j]
        buf[j] = t
    return state


@njit(cache=True)
def sample_iid_received(key, n, keep_prob, buf):
    """IID erasures: keep each of n positions with keep_prob; fills buf.

    Returns the number of kept positions.
    """
    state = derive(key, TAG_ERASE)
    cnt = 0
    for i in range(n):
        state, u = next_unit(state)
        if u < keep_prob:
            buf[cnt] = i
            cnt += 1
    return cnt


@njit(cache=True)
def forward_rank(mat, nrows, ncols):
    """Rank over GF(2) by forward elimination with row pivoting. Destructive."""
    words = mat.shape[1]
    top = 0
    for col in range(ncols):
        w = col >> 6
        b = U64(col & 63)
        pivot = -1
        for r in range(top, nrows):
            if (mat[r, w] >> b) & U64(1):
                pivot = r
                break
        if pivot < 0:
            continue
        if pivot != top:
            for j in range(w, words):
                t = mat[top, j]
                mat[top, j] = mat[pivot, j]
                mat[pivot, j] = t
        for r in range(top + 1, nrows):
            if (mat[r, w] >> b) & U64(1):
                for j in range(w, words):
                    mat[r, j] ^= mat[top, j]
        top += 1
        if top == nrows:
            break
    return top


@njit(cache=True)
def projected_rank(mat, nrows, col0, ncols):
    """Rank of the matrix restricted to columns [col0, col0+ncols), ncols <= 64."""
    basis = np.zeros(ncols, dtype=np.uint64)
    rank = 0
    w0 = col0 >> 6
    b0 = col0 & 63
    for r in range(nrows):
        v = mat[r, w0] >> U64(b0)
        if b0 != 0 and w0 + 1 < mat.shape[1]:
            v |= mat[r, w0 + 1] << U64(64 - b0)
        if ncols < 64:
            v &= (U64(1) << U64(ncols)) - U64(1)
        while v != U64(0):
            hi = 63
            while not (v >> U64(hi)) & U64(1):
                hi -= 1
            if basis[hi] != U64(0):
                v ^= basis[hi]
            else:
                basis[hi] = v
                rank += 1
                break
    return rank


@njit(cache=True)
def all_sources_solvable(mat, nrows, nsource, nparity):
    """True iff every source unit vector lies in the row space.

    Uses rank(M) == nsource + rank(parity projection); destructive on mat.
    """
    total = forward_rank(mat, nrows, nsource + nparity)
    if nparity == 0:
        return total == nsource
    pr = projected_rank(mat, min(nrows, total), nsource, nparity)
    return total == nsource + pr


@njit(cache=True)
def rref_recovered(mat, nrows, ncols, payload, recovered, values):
    """Full Gauss-Jordan solve with payload carried along.

    mat: (nrows, words) bit rows, destroyed. payload: (nrows, width) uint8
    XORed alongside row operations (width may be 0). recovered: (ncols,)
    bool out. values: (ncols, width) uint8 out, rows valid where recovered.
    Returns the rank.
    """
    words = mat.shape[1]
    width = payload.shape[1]
    pivot_cols = np.empty(min(nrows, ncols), dtype=np.int64)
    top = 0
    for col in range(ncols):
        w = col >> 6
        b = U64(col & 63)
        pivot = -1
        for r in range(top, nrows):
            if (mat[r, w] >> b) & U64(1):
                pivot = r
                break
        if pivot < 0:
            continue
        if pivot != top:
            for j in range(words):
                t = mat[top, j]
                mat[top, j] = mat[pivot, j]
                mat[pivot, j] = t
            for j in range(width):
                t8 = payload[top, j]
                payload[top, j] = payload[pivot, j]
                payload[pivot, j] = t8
        for r in range(top + 1, nrows):
            if (mat[r, w] >> b) & U64(1):
                for j in range(w, words):
                    mat[r, j] ^= mat[top, j]
                for j in range(width):
                    payload[r, j] ^= payload[top, j]
        pivot_cols[top] = col
        top += 1
        if top == nrows:
            break
    # Backward pass to reduced row-echelon form.
    for i in range(top - 1, -1, -1):
        col = pivot_cols[i]
        w = col >> 6
        b = U64(col & 63)
        for r in range(i):
            if (mat[r, w] >> b) & U64(1):
                for j in range(w, words):
                    mat[r, j] ^= mat[i, j]
                for j in range(width):
                    payload[r, j] ^= payload[i, j]
    for c in range(ncols):
        recovered[c] = False
    for i in range(top):
        ones = 0
        for j in range(words):
            v = mat[i, j]
            while v != U64(0):
                v &= v - U64(1)
                ones += 1
                if ones > 1:
                    break
            if ones > 1:
                break
        if ones == 1:
            col = pivot_cols[i]
            recovered[col] = True
            for j in range(width):
                values[col, j] = payload[i, j]
    return top
