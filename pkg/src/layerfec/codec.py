"""Rateless codec over GF(2).

Encoding symbols are XORs of uniformly chosen source symbols, with the
degree drawn from a robust-soliton distribution. Decoding is either
belief-propagation peeling or maximum-likelihood Gaussian elimination on
the bit-packed constraint matrix. Everything is a pure function of
(source bytes, seed, symbol ids), so encoder and decoder agree on every
neighbor set without exchanging index lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _bits
from .exceptions import FormatError, ParameterError

__all__ = [
    "DegreeDistribution",
    "DecodeReport",
    "EncodingSymbol",
    "RatelessCode",
    "bp_decode",
    "ideal_decode_threshold",
    "lt_encode",
    "ml_decode",
    "robust_soliton",
    "stream_key",
    "subseed",
    "symbol_neighbors",
]

_MASK = 0xFFFFFFFFFFFFFFFF


def _as64(x: int) -> np.uint64:
    return np.uint64(x & _MASK)


def stream_key(seed: int) -> np.uint64:
    """Root key of the encoding-symbol generator for a stream seed."""
    return _bits.derive_key(_as64(seed), _bits.TAG_STREAM)


def subseed(seed: int, index: int) -> int:
    """Derive an independent child seed, e.g. one per layer or trial."""
    if index < 0:
        raise ParameterError("subseed index must be non-negative")
    return int(_bits.derive_key(stream_key(seed), _bits.TAG_LAYER + index))


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability mass over encoding degrees 1..k."""

    k: int
    mass: np.ndarray
    cdf: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("degree distribution needs k >= 1")
        mass = np.asarray(self.mass, dtype=np.float64)
        if mass.shape != (self.k,):
            raise ParameterError(f"mass must have length k={self.k}")
        if np.any(mass < 0.0):
            raise ParameterError("degree probabilities must be non-negative")
        total = float(mass.sum())
        if abs(total - 1.0) > 1e-12:
            raise ParameterError(f"degree probabilities sum to {total!r}, not 1")
        if mass[0] <= 0.0:
            raise ParameterError("degree-1 probability must be positive")
        mass.flags.writeable = False
        cdf = np.cumsum(mass)
        cdf.flags.writeable = False
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "cdf", cdf)


def robust_soliton(k: int, c: float = 0.05, delta: float = 0.5) -> DegreeDistribution:
    """Robust-soliton distribution mu(i) = (rho(i) + tau(i)) / beta over 1..k.

    rho is the ideal soliton; tau adds mass at low degrees plus a spike at
    round(k/S) with S = c * ln(k/delta) * sqrt(k).
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError("k must be a positive integer")
    if c <= 0.0:
        raise ParameterError("c must be positive")
    if not 0.0 < delta < 1.0:
        raise ParameterError("delta must lie in (0, 1)")
    degrees = np.arange(1, k + 1, dtype=np.float64)
    rho = 1.0 / (degrees * (degrees - 1.0).clip(min=1.0))
    rho[0] = 1.0 / k
    spike = c * math.log(k / delta) * math.sqrt(k)
    pivot = max(1, round(k / spike))
    tau = np.zeros(k)
    head = min(pivot - 1, k)
    tau[:head] = spike / (degrees[:head] * k)
    if pivot <= k:
        tau[pivot - 1] = max(0.0, spike * math.log(spike / delta) / k)
    mass = rho + tau
    mass /= mass.sum()
    return DegreeDistribution(k=int(k), mass=mass)


@dataclass(frozen=True)
class EncodingSymbol:
    """One encoding symbol: its id and the XOR of its neighbor sources."""

    esi: int
    payload: np.ndarray

    def __post_init__(self):
        if self.esi < 0:
            raise ParameterError("esi must be non-negative")
        payload = np.ascontiguousarray(self.payload, dtype=np.uint8)
        payload.flags.writeable = False
        object.__setattr__(self, "payload", payload)


@dataclass(frozen=True)
class DecodeReport:
    recovered: int
    success: bool
    symbols_consumed: int


def _report(recovered: int, k: int, consumed: int) -> DecodeReport:
    return DecodeReport(recovered=recovered, success=recovered == k, symbols_consumed=consumed)


def _as_source_matrix(source) -> np.ndarray:
    """Normalize a source block to a (k, width) uint8 matrix."""
    if isinstance(source, np.ndarray):
        mat = np.ascontiguousarray(source, dtype=np.uint8)
        if mat.ndim != 2:
            raise FormatError("source array must be 2-dimensional (k, width)")
    else:
        rows = [np.frombuffer(bytes(s), dtype=np.uint8) for s in source]
        if not rows:
            raise ParameterError("source block is empty")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise FormatError("source symbols must all have the same length")
        mat = np.stack(rows)
    if mat.shape[0] < 1:
        raise ParameterError("source block is empty")
    if mat.shape[1] < 1:
        raise FormatError("symbols must be at least one byte wide")
    return mat


def _neighbors(key: np.uint64, esi: int, dist: DegreeDistribution, n: int) -> np.ndarray:
    mark = np.zeros(n, dtype=np.bool_)
    out = np.empty(n, dtype=np.int64)
    d = _bits.fill_neighbors(key, esi, dist.cdf, n, mark, out)
    idx = out[:d].copy()
    idx.sort()
    return idx


def symbol_neighbors(esi: int, k: int, dist: DegreeDistribution, seed: int) -> np.ndarray:
    """Sorted source indices XORed into the encoding symbol `esi`."""
    if esi < 0:
        raise ParameterError("esi must be non-negative")
    if dist.k < k:
        raise ParameterError("distribution was built for fewer symbols than k")
    return _neighbors(stream_key(seed), esi, dist, k)


def lt_encode(source, esi: int, dist: DegreeDistribution, seed: int) -> EncodingSymbol:
    """Generate one encoding symbol: sample a degree, pick that many
    distinct sources uniformly, XOR them."""
    mat = _as_source_matrix(source)
    k = mat.shape[0]
    idx = symbol_neighbors(esi, k, dist, seed)
    payload = np.bitwise_xor.reduce(mat[idx], axis=0)
    return EncodingSymbol(esi=esi, payload=payload)


def ideal_decode_threshold(k_star: int, received_count: int) -> bool:
    """Idealized decodability: a layer of k_star symbols is recoverable as
    soon as k_star encoding symbols have arrived."""
    if k_star < 0 or received_count < 0:
        raise ParameterError("counts must be non-negative")
    return received_count >= k_star


def _collect_received(received):
    """Accepts EncodingSymbol-likes or (esi, payload) pairs."""
    esis, payloads = [], []
    width = None
    for sym in received:
        esi, payload = (sym.esi, sym.payload) if hasattr(sym, "esi") else sym
        payload = np.ascontiguousarray(payload, dtype=np.uint8)
        esis.append(esi)
        payloads.append(payload)
        if width is None:
            width = payload.shape[0]
        elif payload.shape[0] != width:
            raise FormatError("received symbols have inconsistent lengths")
    if width is None:
        width = 0
    pay = np.array(payloads, dtype=np.uint8).reshape(len(esis), width)
    return np.asarray(esis, dtype=np.int64), pay


def _peel(rows: list, payloads: np.ndarray, n: int):
    """Belief-propagation ripple: release degree-1 rows, subtract recovered
    neighbors, repeat until the ripple empties. Returns slot values."""
    width = payloads.shape[1]
    slots: list = [None] * n
    remaining = [set(r.tolist()) for r in rows]
    acc = [payloads[i].copy() for i in range(len(rows))]
    adj: list = [[] for _ in range(n)]
    for i, r in enumerate(remaining):
        for v in r:
            adj[v].append(i)
    ripple = [i for i, r in enumerate(remaining) if len(r) == 1]
    recovered = 0
    while ripple:
        i = ripple.pop()
        if len(remaining[i]) != 1:
            continue
        v = next(iter(remaining[i]))
        remaining[i].clear()
        if slots[v] is not None:
            continue
        slots[v] = acc[i]
        recovered += 1
        for j in adj[v]:
            r = remaining[j]
            if v in r:
                acc[j] = np.bitwise_xor(acc[j], slots[v])
                r.discard(v)
                if len(r) == 1:
                    ripple.append(j)
    return slots, recovered


def bp_decode(received, k: int, dist: DegreeDistribution, seed: int):
    """Peel the received symbols; partial recovery is reported, not an error."""
    esis, payloads = _collect_received(received)
    key = stream_key(seed)
    rows = [_neighbors(key, int(e), dist, k) for e in esis]
    slots, recovered = _peel(rows, payloads, k)
    return slots, _report(recovered, k, len(esis))


def _ml_solve(rows: list, payloads: np.ndarray, n: int):
    nrows = len(rows)
    words = _bits.words_for(n)
    mat = np.zeros((max(nrows, 1), words), dtype=np.uint64)
    for i, idx in enumerate(rows):
        for v in idx:
            mat[i, v >> 6] |= np.uint64(1) << np.uint64(v & 63)
    recovered = np.zeros(n, dtype=np.bool_)
    values = np.zeros((n, payloads.shape[1]), dtype=np.uint8)
    _bits.rref_recovered(mat, nrows, n, payloads.copy(), recovered, values)
    slots = [values[i].copy() if recovered[i] else None for i in range(n)]
    return slots, int(recovered.sum())


def ml_decode(received, k: int, dist: DegreeDistribution, seed: int):
    """Gaussian elimination over GF(2); succeeds iff the constraint matrix
    has rank k. On rank deficiency, recovers exactly the sources whose unit
    vectors lie in the row space."""
    esis, payloads = _collect_received(received)
    key = stream_key(seed)
    rows = [_neighbors(key, int(e), dist, k) for e in esis]
    slots, recovered = _ml_solve(rows, payloads, k)
    return slots, _report(recovered, k, len(esis))


class RatelessCode:
    """One independent rateless stream over k source symbols.

    With precode > 0, that many dense parity symbols are appended before LT
    encoding and the LT code runs over the k + precode intermediates. The
    dense parities remove the coverage failure floor of plain LT, which is
    what lets maximum-likelihood decoding reach very low residual loss
    rates within a few percent symbol overhead.
    """

    def __init__(self, k: int, seed: int, *, c: float = 0.05, delta: float = 0.5,
                 precode: int = 0):
        if k < 1:
            raise ParameterError("k must be positive")
        if not 0 <= precode <= 64:
            raise ParameterError("precode symbol count must be in [0, 64]")
        self.k = int(k)
        self.precode = int(precode)
        self.n_inner = self.k + self.precode
        self.dist = robust_soliton(self.n_inner, c, delta)
        self.key = stream_key(seed)
        self._parity_masks = None

    def parity_masks(self) -> np.ndarray:
        """Packed dense masks, one row per parity symbol, over the k sources."""
        if self._parity_masks is None:
            masks = np.zeros((self.precode, _bits.words_for(max(self.k, 1))),
                             dtype=np.uint64)
            if self.precode:
                pkey = _bits.derive_key(self.key, _bits.TAG_PRECODE)
                _bits.fill_parity_masks(pkey, self.k, self.precode, masks)
            self._parity_masks = masks
        return self._parity_masks

    def _parity_index_rows(self) -> list:
        rows = []
        masks = self.parity_masks()
        for p in range(self.precode):
            idx = [j for j in range(self.k)
                   if (int(masks[p, j >> 6]) >> (j & 63)) & 1]
            idx.append(self.k + p)
            rows.append(np.asarray(idx, dtype=np.int64))
        return rows

    def expand(self, source) -> np.ndarray:
        """Source matrix plus computed parity symbols: the intermediates."""
        mat = _as_source_matrix(source)
        if mat.shape[0] != self.k:
            raise FormatError(f"expected {self.k} source symbols, got {mat.shape[0]}")
        if not self.precode:
            return mat
        inner = np.zeros((self.n_inner, mat.shape[1]), dtype=np.uint8)
        inner[: self.k] = mat
        masks = self.parity_masks()
        for p in range(self.precode):
            acc = inner[self.k + p]
            for j in range(self.k):
                if (int(masks[p, j >> 6]) >> (j & 63)) & 1:
                    acc ^= mat[j]
        return inner

    def neighbors(self, esi: int) -> np.ndarray:
        """Sorted intermediate indices feeding encoding symbol esi."""
        if esi < 0:
            raise ParameterError("esi must be non-negative")
        return _neighbors(self.key, esi, self.dist, self.n_inner)

    def encode(self, source, esi: int) -> EncodingSymbol:
        return self.encode_block(source, [esi])[0]

    def encode_block(self, source, esis: Sequence[int]) -> list:
        inner = self.expand(source)
        out = []
        for esi in esis:
            idx = self.neighbors(int(esi))
            payload = np.bitwise_xor.reduce(inner[idx], axis=0)
            out.append(EncodingSymbol(esi=int(esi), payload=payload))
        return out

    def _received_rows(self, received):
        esis, payloads = _collect_received(received)
        rows = [self.neighbors(int(e)) for e in esis]
        if self.precode:
            rows.extend(self._parity_index_rows())
            zeros = np.zeros((self.precode, payloads.shape[1]), dtype=np.uint8)
            payloads = np.vstack([payloads, zeros]) if payloads.size else zeros
        return rows, payloads, len(esis)

    def _finish(self, slots, consumed):
        src = slots[: self.k]
        recovered = sum(1 for s in src if s is not None)
        return src, _report(recovered, self.k, consumed)

    def decode_ml(self, received):
        rows, payloads, consumed = self._received_rows(received)
        slots, _ = _ml_solve(rows, payloads, self.n_inner)
        return self._finish(slots, consumed)

    def decode_bp(self, received):
        rows, payloads, consumed = self._received_rows(received)
        slots, _ = _peel(rows, payloads, self.n_inner)
        return self._finish(slots, consumed)
