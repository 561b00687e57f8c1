"""Layered protection schemes built on the rateless codec.

Three schemes ship here:

- PRC (progressive): every layer is reshaped to a narrower symbol width so
  that all layers span the same N output symbols; each output symbol packs
  one reshaped encoding symbol per layer. Layer i becomes decodable once
  roughly N * r_i output symbols arrive, regardless of which ones.
- SP (separate): each layer is protected by its own rateless code, its
  n_i output symbols transmitted as one contiguous segment.
- LA (layer-aware): like SP, but segment i encodes the concatenation of
  layers 1..i, so later segments also protect earlier layers.

Transmission order is always index order: for PRC, esi 0..N-1; for the
baselines, all of segment 1, then segment 2, and so on.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _bits
from .codec import (
    DecodeReport,
    RatelessCode,
    ideal_decode_threshold,
    subseed,
    _ml_solve,
    _peel,
)
from .exceptions import ConfigError, FormatError, PlanError

__all__ = [
    "BaselineBlock",
    "BaselineSymbol",
    "CodecParams",
    "DecoderMode",
    "LayerPlan",
    "LayerSpec",
    "PrcOutputSymbol",
    "Scheme",
    "StreamConfig",
    "baseline_decode_block",
    "baseline_encode_block",
    "la_ideal_recoverable",
    "pack_segments",
    "plan_layers",
    "prc_decode_block",
    "prc_encode_block",
    "suggest_valid_config",
    "unpack_segments",
]


class Scheme(str, Enum):
    PRC = "PRC"
    SP = "SP"
    LA = "LA"


class DecoderMode(str, Enum):
    IDEAL = "ideal"
    BP = "bp"
    ML = "ml"


@dataclass(frozen=True)
class CodecParams:
    """Rateless-codec knobs applied uniformly to every layer code."""

    c: float = 0.05
    delta: float = 0.5
    precode: int = 0

    def build(self, k: int, seed: int) -> RatelessCode:
        return RatelessCode(k, seed, c=self.c, delta=self.delta, precode=self.precode)


@dataclass(frozen=True)
class StreamConfig:
    """A layered stream: per-layer source sizes and coding rates.

    k[i] is the number of T-byte source symbols in layer i, and r[i] its
    coding rate, so layer i is granted n_i = k_i / r_i output symbols of
    the N-symbol output block. Rates must be non-decreasing (lower layers
    are more important and get more redundancy) and the per-layer symbol
    budgets must add up to N exactly.
    """

    k: tuple
    r: tuple
    T: int
    N: int

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        object.__setattr__(self, "r", tuple(float(v) for v in self.r))
        if len(self.k) != len(self.r) or not self.k:
            raise ConfigError("need one rate per layer, at least one layer")
        if any(v < 1 for v in self.k):
            raise ConfigError("layer sizes must be positive")
        if self.T < 1:
            raise ConfigError("symbol length must be positive")
        if any(not 0.0 < v <= 1.0 for v in self.r):
            raise ConfigError("rates must lie in (0, 1]")
        if any(a > b + 1e-12 for a, b in zip(self.r, self.r[1:])):
            raise ConfigError("rates must be non-decreasing from layer 1 up")
        if self.K > self.N:
            raise ConfigError(f"source block K={self.K} exceeds output block N={self.N}")
        total = 0
        for i, (ki, ri) in enumerate(zip(self.k, self.r)):
            ni = round(ki / ri)
            if ni < ki or abs(ki / ni - ri) > 1e-9:
                raise ConfigError(
                    f"layer {i + 1}: k={ki} at rate {ri} gives a non-integral "
                    f"symbol budget {ki / ri}"
                )
            total += ni
        if total != self.N:
            raise ConfigError(
                f"per-layer symbol budgets sum to {total}, but N={self.N}"
            )

    @property
    def m(self) -> int:
        return len(self.k)

    @property
    def K(self) -> int:
        return sum(self.k)

    @property
    def n(self) -> tuple:
        return tuple(round(ki / ri) for ki, ri in zip(self.k, self.r))

    @property
    def overall_rate(self) -> Fraction:
        return Fraction(self.K, self.N)

    @property
    def segment_offsets(self) -> tuple:
        """Start position of each baseline segment in transmission order."""
        off, out = 0, []
        for ni in self.n:
            out.append(off)
            off += ni
        return tuple(out)


@dataclass(frozen=True)
class LayerSpec:
    """Derived per-layer parameters."""

    k: int          # source symbols at width T
    n: int          # output symbols granted to this layer
    rate: Fraction  # k / n
    eta: Fraction   # n / N
    width: int      # reshaped symbol width T_i (bytes)
    k_star: int     # reshaped source count = N * rate


@dataclass(frozen=True)
class LayerPlan:
    T: int
    N: int
    layers: tuple

    @property
    def m(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> tuple:
        return tuple(s.width for s in self.layers)

    @property
    def k_stars(self) -> tuple:
        return tuple(s.k_star for s in self.layers)


def plan_layers(cfg: StreamConfig) -> LayerPlan:
    """Derive the reshaped geometry: widths T_i = n_i*T/N and reshaped
    counts k_i* = N*r_i. Non-integral values are rejected rather than
    padded, because padding would silently change the per-layer rates."""
    layers = []
    for i, (ki, ni) in enumerate(zip(cfg.k, cfg.n)):
        if (ni * cfg.T) % cfg.N != 0:
            raise PlanError(
                f"layer {i + 1}: reshaped width {ni}*{cfg.T}/{cfg.N} is not an "
                f"integer number of bytes"
            )
        width = ni * cfg.T // cfg.N
        if (ki * cfg.T) % width != 0:
            raise PlanError(
                f"layer {i + 1}: reshaped symbol count {ki}*{cfg.T}/{width} "
                f"is not integral"
            )
        k_star = ki * cfg.T // width
        layers.append(LayerSpec(
            k=ki, n=ni, rate=Fraction(ki, ni), eta=Fraction(ni, cfg.N),
            width=width, k_star=k_star,
        ))
    assert sum(s.width for s in layers) == cfg.T
    return LayerPlan(T=cfg.T, N=cfg.N, layers=tuple(layers))


def suggest_valid_config(k: Sequence[int], r: Sequence[float], T: int, N: int,
                         search: int = 64) -> Optional[StreamConfig]:
    """Nearest (k_i, N) combination whose plan is integral.

    Scans output block sizes outward from N, scaling the layer sizes
    proportionally. Returns None if nothing valid is found in range.
    """
    base = np.asarray(k, dtype=float)
    for delta in range(search + 1):
        for cand in ({N + delta, N - delta} if delta else {N}):
            if cand < len(k):
                continue
            scaled = [max(1, round(v * cand / N)) for v in base]
            try:
                cfg = StreamConfig(k=tuple(scaled), r=tuple(r), T=T, N=cand)
                plan_layers(cfg)
                return cfg
            except ConfigError:
                continue
    return None


@dataclass(frozen=True)
class PrcOutputSymbol:
    """One transmitted unit: segment i holds the esi-th reshaped encoding
    symbol of layer i, concatenated lowest layer first."""

    esi: int
    payload: np.ndarray

    def __post_init__(self):
        payload = np.ascontiguousarray(self.payload, dtype=np.uint8)
        payload.flags.writeable = False
        object.__setattr__(self, "payload", payload)

    def segments(self, plan: LayerPlan) -> list:
        return unpack_segments(self.payload, plan.widths)

    def to_bytes(self) -> bytes:
        return struct.pack(">I", self.esi) + self.payload.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PrcOutputSymbol":
        if len(data) < 5:
            raise FormatError("serialized output symbol too short")
        (esi,) = struct.unpack(">I", data[:4])
        return cls(esi=esi, payload=np.frombuffer(data[4:], dtype=np.uint8))


@dataclass(frozen=True)
class BaselineSymbol:
    segment: int  # 0-based layer/segment index
    esi: int      # segment-local encoding symbol id
    payload: np.ndarray

    def __post_init__(self):
        payload = np.ascontiguousarray(self.payload, dtype=np.uint8)
        payload.flags.writeable = False
        object.__setattr__(self, "payload", payload)


@dataclass(frozen=True)
class BaselineBlock:
    scheme: Scheme
    symbols: tuple  # transmission order: segment 1 first


def pack_segments(segments: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ascontiguousarray(s, dtype=np.uint8) for s in segments])


def unpack_segments(payload: np.ndarray, widths: Sequence[int]) -> list:
    if len(payload) != sum(widths):
        raise FormatError(
            f"payload is {len(payload)} bytes, segments need {sum(widths)}"
        )
    out, off = [], 0
    for w in widths:
        out.append(payload[off:off + w])
        off += w
    return out


def _layer_buffers(source_layers, cfg_k, T) -> list:
    if len(source_layers) != len(cfg_k):
        raise FormatError(f"expected {len(cfg_k)} layer buffers")
    bufs = []
    for i, (buf, ki) in enumerate(zip(source_layers, cfg_k)):
        arr = np.frombuffer(bytes(buf), dtype=np.uint8) \
            if not isinstance(buf, np.ndarray) else np.ascontiguousarray(buf, dtype=np.uint8)
        if arr.ndim != 1 or arr.size != ki * T:
            raise FormatError(
                f"layer {i + 1} buffer must be exactly {ki * T} bytes, got {arr.size}"
            )
        bufs.append(arr)
    return bufs


def _layer_codes(plan_or_ks, seed, codec: CodecParams) -> list:
    return [codec.build(k, subseed(seed, i)) for i, k in enumerate(plan_or_ks)]


def prc_encode_block(source_layers, plan: LayerPlan, seed: int,
                     codec: CodecParams = CodecParams()) -> list:
    """Reshape each layer to width T_i, run the per-layer encoders in
    lockstep over esi = 0..N-1, and pack one segment per layer into each
    output symbol."""
    bufs = _layer_buffers(source_layers, [s.k for s in plan.layers], plan.T)
    codes = _layer_codes(plan.k_stars, seed, codec)
    esis = range(plan.N)
    columns = []
    for spec, buf, code in zip(plan.layers, bufs, codes):
        reshaped = buf.reshape(spec.k_star, spec.width)
        syms = code.encode_block(reshaped, esis)
        columns.append(np.stack([s.payload for s in syms]))
    packed = np.hstack(columns)
    return [PrcOutputSymbol(esi=e, payload=packed[e]) for e in esis]


def _decode_stream(code: RatelessCode, esis, payloads, mode: DecoderMode):
    pairs = list(zip(esis, payloads))
    if mode is DecoderMode.ML:
        return code.decode_ml(pairs)
    if mode is DecoderMode.BP:
        return code.decode_bp(pairs)
    raise ConfigError(f"unsupported decoder mode {mode}")


def prc_decode_block(received: Iterable[PrcOutputSymbol], plan: LayerPlan,
                     seed: int, decoder: DecoderMode = DecoderMode.ML,
                     codec: CodecParams = CodecParams()) -> list:
    """Unpack segments and decode each layer independently.

    Returns one (bytes | None, DecodeReport) pair per layer; bytes are the
    layer's original k_i*T-byte buffer and are only produced on full
    recovery. In IDEAL mode no byte decoding happens: layer i counts as
    recovered exactly when at least k_i* symbols arrived.
    """
    decoder = DecoderMode(decoder)
    received = list(received)
    esis = [sym.esi for sym in received]
    for sym in received:
        if sym.payload.shape[0] != plan.T:
            raise FormatError(
                f"output symbol {sym.esi} is {sym.payload.shape[0]} bytes, "
                f"expected {plan.T}"
            )
    results = []
    if decoder is DecoderMode.IDEAL:
        for spec in plan.layers:
            ok = ideal_decode_threshold(spec.k_star, len(received))
            results.append((None, DecodeReport(
                recovered=spec.k_star if ok else 0, success=ok,
                symbols_consumed=len(received))))
        return results
    offsets = np.cumsum([0] + list(plan.widths))
    codes = _layer_codes(plan.k_stars, seed, codec)
    for i, (spec, code) in enumerate(zip(plan.layers, codes)):
        seg = [sym.payload[offsets[i]:offsets[i + 1]] for sym in received]
        slots, report = _decode_stream(code, esis, seg, decoder)
        data = b"".join(s.tobytes() for s in slots) if report.success else None
        results.append((data, report))
    return results


def baseline_encode_block(source_layers, cfg: StreamConfig, scheme: Scheme,
                          seed: int, codec: CodecParams = CodecParams()) -> BaselineBlock:
    """SP: encode each layer alone into n_i symbols of width T. LA: segment
    i encodes the concatenation of layers 1..i. Symbols are emitted segment
    by segment in transmission order."""
    scheme = Scheme(scheme)
    if scheme is Scheme.PRC:
        raise ConfigError("use prc_encode_block for the progressive scheme")
    bufs = _layer_buffers(source_layers, cfg.k, cfg.T)
    symbols = []
    for i, ni in enumerate(cfg.n):
        if scheme is Scheme.SP:
            src = bufs[i].reshape(cfg.k[i], cfg.T)
        else:
            src = np.concatenate(bufs[: i + 1]).reshape(sum(cfg.k[: i + 1]), cfg.T)
        code = codec.build(src.shape[0], subseed(seed, i))
        for sym in code.encode_block(src, range(ni)):
            symbols.append(BaselineSymbol(segment=i, esi=sym.esi, payload=sym.payload))
    return BaselineBlock(scheme=scheme, symbols=tuple(symbols))


def la_ideal_recoverable(counts: Sequence[int], ks: Sequence[int], layer: int) -> bool:
    """Idealized layer-aware recovery test for per-segment received counts.

    Treats every received symbol of segment i as a generic linear equation
    over layers 1..i: segments above the target layer contribute only
    after covering their own layers (carry = max(0, carry + R_i - k_i)),
    and every suffix of layers l..layer must satisfy the counting bound
    sum(R) + carry >= sum(k). This is the no-overhead analogue of the rank
    test an actual ML decoder performs.
    """
    if not 0 <= layer < len(ks) or len(counts) != len(ks):
        raise ConfigError("layer index or count vector out of range")
    return bool(_bits.la_prefix_recoverable(
        np.asarray(counts, dtype=np.int64), np.asarray(ks, dtype=np.int64), layer))


def _la_columns(cfg: StreamConfig, codes: list) -> tuple:
    """Column layout of the joint layer-aware system: all K sources first,
    then each segment's parity block."""
    K = cfg.K
    parity_offsets = []
    off = K
    for code in codes:
        parity_offsets.append(off)
        off += code.precode
    return K, tuple(parity_offsets), off


def _la_joint_rows(received, cfg: StreamConfig, codes: list):
    """Map every received symbol (and parity constraint) into the joint
    column space."""
    K, parity_offsets, ncols = _la_columns(cfg, codes)
    prefixes = np.cumsum([0] + list(cfg.k))
    rows, payloads = [], []
    for sym in received:
        code = codes[sym.segment]
        kk = prefixes[sym.segment + 1]
        idx = code.neighbors(sym.esi)
        mapped = np.where(idx < kk, idx, idx - kk + parity_offsets[sym.segment])
        rows.append(mapped.astype(np.int64))
        payloads.append(sym.payload)
    width = cfg.T if payloads else 0
    pay = np.array(payloads, dtype=np.uint8).reshape(len(rows), width)
    for seg, code in enumerate(codes):
        if not code.precode:
            continue
        kk = prefixes[seg + 1]
        zeros = np.zeros((code.precode, width), dtype=np.uint8)
        for idx in code._parity_index_rows():
            mapped = np.where(idx < kk, idx, idx - kk + parity_offsets[seg])
            rows.append(mapped.astype(np.int64))
        pay = np.vstack([pay, zeros]) if pay.size else zeros
    return rows, pay, ncols, prefixes


def baseline_decode_block(received, cfg: StreamConfig, scheme: Scheme,
                          seed: int, decoder: DecoderMode = DecoderMode.ML,
                          codec: CodecParams = CodecParams()) -> list:
    """Decode a subset of a baseline block.

    SP decodes each layer from its own segment. LA solves one joint system
    in which segment-i symbols constrain layers 1..i, so a layer can be
    completed by symbols of any later segment. IDEAL mode replaces actual
    decoding with counting rules: SP layer i needs k_i of its own symbols;
    LA uses the generic staircase bound of ``la_ideal_recoverable``.
    """
    scheme = Scheme(scheme)
    decoder = DecoderMode(decoder)
    if scheme is Scheme.PRC:
        raise ConfigError("use prc_decode_block for the progressive scheme")
    received = list(received)
    for sym in received:
        if sym.payload.shape[0] != cfg.T:
            raise FormatError("baseline symbol width does not match the stream")
        if not 0 <= sym.segment < cfg.m:
            raise FormatError(f"segment {sym.segment} out of range")
    counts = [0] * cfg.m
    for sym in received:
        counts[sym.segment] += 1

    if decoder is DecoderMode.IDEAL:
        results = []
        for i, ki in enumerate(cfg.k):
            if scheme is Scheme.SP:
                ok = counts[i] >= ki
            else:
                ok = la_ideal_recoverable(counts, cfg.k, i)
            results.append((None, DecodeReport(
                recovered=ki if ok else 0, success=ok,
                symbols_consumed=len(received))))
        return results

    if scheme is Scheme.SP:
        codes = _layer_codes(cfg.k, seed, codec)
        results = []
        for i, (ki, code) in enumerate(zip(cfg.k, codes)):
            seg = [s for s in received if s.segment == i]
            slots, report = _decode_stream(
                code, [s.esi for s in seg], [s.payload for s in seg], decoder)
            data = b"".join(s.tobytes() for s in slots) if report.success else None
            results.append((data, report))
        return results

    # Layer-aware: one joint solve over all layers plus parity blocks.
    ka = [sum(cfg.k[: i + 1]) for i in range(cfg.m)]
    codes = _layer_codes(ka, seed, codec)
    rows, payloads, ncols, prefixes = _la_joint_rows(received, cfg, codes)
    if decoder is DecoderMode.ML:
        slots, _ = _ml_solve(rows, payloads, ncols)
    else:
        slots, _ = _peel(rows, payloads, ncols)
    results = []
    for i, ki in enumerate(cfg.k):
        lo, hi = prefixes[i], prefixes[i + 1]
        layer_slots = slots[lo:hi]
        got = sum(1 for s in layer_slots if s is not None)
        report = DecodeReport(recovered=got, success=got == ki,
                              symbols_consumed=len(received))
        data = b"".join(s.tobytes() for s in layer_slots) if report.success else None
        results.append((data, report))
    return results
