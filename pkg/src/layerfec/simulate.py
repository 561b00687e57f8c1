"""Monte-Carlo erasure-channel experiments.

Two measurements drive everything: the per-layer packet loss rate after
recovery, swept over received ratios, and the buffering time until each
layer first becomes decodable under lossless sequential arrival. Trials
are keyed by (master seed, point index, trial index), so results never
depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _bits, _mc
from .codec import robust_soliton, stream_key
from .exceptions import ConfigError, ParameterError
from .layered import CodecParams, DecoderMode, Scheme, StreamConfig, plan_layers

__all__ = [
    "BufferingResult",
    "ErasureModel",
    "PlrEstimate",
    "apply_erasures",
    "buffering_to_csv",
    "buffering_trial_times",
    "plr_to_csv",
    "received_positions",
    "run_buffering_time",
    "run_plr_sweep",
    "wilson_interval",
]

Z95 = 1.959963984540054
Z99 = 2.5758293035489004


@dataclass(frozen=True)
class ErasureModel:
    """fixed_count erases exactly `value` symbols (uniform positions);
    iid erases each symbol independently with probability `value`."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed_count", "iid"):
            raise ParameterError(f"unknown erasure model {self.kind!r}")
        if self.kind == "fixed_count":
            if self.value != int(self.value) or self.value < 0:
                raise ParameterError("fixed_count needs a non-negative integer")
        elif not 0.0 <= self.value <= 1.0:
            raise ParameterError("iid loss probability must be in [0, 1]")


def received_positions(n: int, model: ErasureModel, seed: int) -> np.ndarray:
    """Sorted original positions that survive the erasure draw."""
    if model.kind == "fixed_count":
        count = int(model.value)
        if count > n:
            raise ParameterError(f"cannot erase {count} of {n} symbols")
        buf = np.empty(n, dtype=np.int64)
        _bits.sample_received(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), n, n - count, buf)
        pos = np.sort(buf[: n - count])
    else:
        buf = np.empty(n, dtype=np.int64)
        kept = _bits.sample_iid_received(np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                                         n, 1.0 - model.value, buf)
        pos = buf[:kept].copy()
    return pos


def apply_erasures(block: Sequence, model: ErasureModel, seed: int) -> list:
    """Surviving symbols of a block, in original transmission order."""
    pos = received_positions(len(block), model, seed)
    return [block[int(p)] for p in pos]


def wilson_interval(failures: int, trials: int, z: float = Z95) -> tuple:
    """Wilson score interval for the failure probability."""
    if trials < 1:
        raise ParameterError("trials must be positive")
    p = failures / trials
    zz = z * z
    denom = 1.0 + zz / trials
    center = (p + zz / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + zz / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, center - half)
    hi = 1.0 if failures == trials else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class PlrEstimate:
    scheme: str
    layer: int  # 1-based
    N: int
    K: int
    ratio: float
    R: int
    trials: int
    failures: int
    plr: float
    wilson_lo: float
    wilson_hi: float


@dataclass(frozen=True)
class BufferingResult:
    scheme: str
    layer: int  # 1-based
    N: int
    mean_time: float
    std: float
    trials: int
    failures: int


def _point_key(seed: int, point_index: int) -> np.uint64:
    return _bits.derive_key(stream_key(seed), _bits.TAG_POINT + point_index)


def trial_block_seed(seed: int, point_index: int, trial_index: int) -> int:
    """Seed that reproduces one sweep trial's code through the object API."""
    pk = _point_key(seed, point_index)
    return int(_bits.derive_key(pk, _bits.TAG_TRIAL + trial_index))


def _padded_cdfs(sizes: Sequence[int], codec: CodecParams) -> np.ndarray:
    """Per-layer degree CDFs over k_i + precode, padded with 1.0."""
    dists = [robust_soliton(k + codec.precode, codec.c, codec.delta) for k in sizes]
    lmax = max(d.k for d in dists)
    out = np.ones((len(dists), lmax), dtype=np.float64)
    for i, d in enumerate(dists):
        out[i, : d.k] = d.cdf
    return out


def _segment_of(cfg: StreamConfig) -> np.ndarray:
    seg = np.empty(cfg.N, dtype=np.int64)
    for i, (off, ni) in enumerate(zip(cfg.segment_offsets, cfg.n)):
        seg[off: off + ni] = i
    return seg


def _bp_plr_point(scheme, cfg, point_key, R, trials, codec) -> np.ndarray:
    """Structure-only peeling trials; payload values cannot change whether
    the ripple completes, so none are materialized."""
    from .codec import _peel, subseed

    plan = plan_layers(cfg) if scheme is Scheme.PRC else None
    seg_of = _segment_of(cfg)
    failures = np.zeros(cfg.m, dtype=np.int64)
    for t in range(trials):
        tkey = _bits.derive_key(point_key, _bits.TAG_TRIAL + t)
        block_seed = int(tkey)
        buf = np.empty(cfg.N, dtype=np.int64)
        _bits.sample_received(tkey, cfg.N, R, buf)
        pos = buf[:R]
        if scheme is Scheme.PRC:
            sizes = plan.k_stars
        else:
            sizes = cfg.k if scheme is Scheme.SP else \
                [sum(cfg.k[: i + 1]) for i in range(cfg.m)]
        codes = [codec.build(k, subseed(block_seed, i)) for i, k in enumerate(sizes)]
        if scheme is Scheme.PRC:
            for i, code in enumerate(codes):
                rows = [code.neighbors(int(e)) for e in pos]
                rows += code._parity_index_rows()
                pay = np.zeros((len(rows), 0), dtype=np.uint8)
                slots, _ = _peel(rows, pay, code.n_inner)
                if any(s is None for s in slots[: code.k]):
                    failures[i] += 1
        elif scheme is Scheme.SP:
            offs = cfg.segment_offsets
            for i, code in enumerate(codes):
                local = [int(p) - offs[i] for p in pos if seg_of[p] == i]
                rows = [code.neighbors(e) for e in local]
                rows += code._parity_index_rows()
                pay = np.zeros((len(rows), 0), dtype=np.uint8)
                slots, _ = _peel(rows, pay, code.n_inner)
                if any(s is None for s in slots[: code.k]):
                    failures[i] += 1
        else:
            raise ConfigError("bp sweeps support PRC and SP; use ml for LA")
    return failures


def _run_point(scheme: Scheme, cfg: StreamConfig, decoder: DecoderMode,
               ratio: float, trials: int, seed: int, point_index: int,
               codec: CodecParams, erasures: str) -> list:
    point_key = _point_key(seed, point_index)
    failures = np.zeros(cfg.m, dtype=np.int64)
    if erasures == "fixed_count":
        R = round(ratio * cfg.N)
        fixed_r, keep_prob = R, 0.0
        actual_ratio = R / cfg.N
    else:
        R, fixed_r, keep_prob = -1, -1, ratio
        actual_ratio = ratio

    if decoder is DecoderMode.IDEAL:
        if scheme is Scheme.PRC:
            kstars = np.asarray(plan_layers(cfg).k_stars, dtype=np.int64)
            _mc.plr_prc_ideal(point_key, cfg.N, fixed_r, keep_prob, trials,
                              kstars, failures)
        else:
            _mc.plr_baseline_ideal(point_key, cfg.N, fixed_r, keep_prob, trials,
                                   np.asarray(cfg.k, dtype=np.int64),
                                   _segment_of(cfg), scheme is Scheme.LA,
                                   failures)
    elif decoder is DecoderMode.ML:
        if scheme is Scheme.PRC:
            kstars = plan_layers(cfg).k_stars
            _mc.plr_prc_ml(point_key, cfg.N, fixed_r, keep_prob, trials,
                           np.asarray(kstars, dtype=np.int64), codec.precode,
                           _padded_cdfs(kstars, codec), failures)
        elif scheme is Scheme.SP:
            _mc.plr_sp_ml(point_key, cfg.N, fixed_r, keep_prob, trials,
                          np.asarray(cfg.k, dtype=np.int64), _segment_of(cfg),
                          np.asarray(cfg.segment_offsets, dtype=np.int64),
                          codec.precode, _padded_cdfs(cfg.k, codec), failures)
        else:
            ka = [sum(cfg.k[: i + 1]) for i in range(cfg.m)]
            _mc.plr_la_ml(point_key, cfg.N, fixed_r, keep_prob, trials,
                          np.asarray(cfg.k, dtype=np.int64), _segment_of(cfg),
                          np.asarray(cfg.segment_offsets, dtype=np.int64),
                          codec.precode, _padded_cdfs(ka, codec), failures)
    elif decoder is DecoderMode.BP:
        if erasures != "fixed_count":
            raise ConfigError("bp sweeps support fixed_count erasures only")
        failures = _bp_plr_point(scheme, cfg, point_key, R, trials, codec)
    else:
        raise ConfigError(f"unsupported decoder {decoder}")

    out = []
    for i in range(cfg.m):
        f = int(failures[i])
        lo, hi = wilson_interval(f, trials)
        out.append(PlrEstimate(
            scheme=scheme.value, layer=i + 1, N=cfg.N, K=cfg.K,
            ratio=actual_ratio, R=R if R >= 0 else -1, trials=trials,
            failures=f, plr=f / trials, wilson_lo=lo, wilson_hi=hi))
    return out


def _point_worker(args):
    (scheme, cfg_fields, decoder, ratio, trials, seed, point_index,
     codec_fields, erasures) = args
    cfg = StreamConfig(*cfg_fields)
    return point_index, _run_point(Scheme(scheme), cfg, DecoderMode(decoder),
                                   ratio, trials, seed, point_index,
                                   CodecParams(*codec_fields), erasures)


def run_plr_sweep(scheme, cfg: StreamConfig, decoder, ratios: Sequence[float],
                  trials: int, seed: int, *, codec: CodecParams = CodecParams(),
                  erasures: str = "fixed_count", threads: int = 1) -> list:
    """Per-layer PLR estimates at each received ratio.

    fixed_count erasures receive exactly round(ratio*N) symbols per trial;
    iid erasures keep each symbol with probability `ratio`. Results carry
    Wilson 95% intervals and are reproducible from (cfg, seed) alone.
    """
    scheme = Scheme(scheme)
    decoder = DecoderMode(decoder)
    if trials < 1:
        raise ParameterError("trials must be positive")
    if erasures not in ("fixed_count", "iid"):
        raise ParameterError(f"unknown erasure sweep mode {erasures!r}")
    ratios = [float(r) for r in ratios]
    if not ratios or any(not 0.0 < r <= 1.0 for r in ratios):
        raise ParameterError("ratios must lie in (0, 1]")
    if scheme is Scheme.PRC:
        plan_layers(cfg)  # reject unreshapeable plans before spending work

    if threads > 1 and len(ratios) > 1:
        cfg_fields = (cfg.k, cfg.r, cfg.T, cfg.N)
        codec_fields = (codec.c, codec.delta, codec.precode)
        jobs = [(scheme.value, cfg_fields, decoder.value, r, trials, seed, i,
                 codec_fields, erasures) for i, r in enumerate(ratios)]
        results = [None] * len(ratios)
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for idx, ests in pool.map(_point_worker, jobs):
                results[idx] = ests
    else:
        results = [_run_point(scheme, cfg, decoder, r, trials, seed, i,
                              codec, erasures)
                   for i, r in enumerate(ratios)]
    return [est for point in results for est in point]


def _ideal_buffer_times(scheme: Scheme, cfg: StreamConfig, plan) -> list:
    """Lossless sequential arrival makes ideal buffering deterministic."""
    offs = cfg.segment_offsets
    if scheme is Scheme.PRC:
        return [float(ks) for ks in plan.k_stars]
    if scheme is Scheme.SP:
        return [float(offs[i] + cfg.k[i]) for i in range(cfg.m)]
    times = []
    counts = [0] * cfg.m
    seg_of = _segment_of(cfg)
    remaining = set(range(cfg.m))
    times_by_layer = [None] * cfg.m
    for t in range(1, cfg.N + 1):
        counts[int(seg_of[t - 1])] += 1
        done = [i for i in remaining
                if _bits.la_prefix_recoverable(
                    np.asarray(counts, dtype=np.int64),
                    np.asarray(cfg.k, dtype=np.int64), i)]
        for i in done:
            times_by_layer[i] = float(t)
            remaining.discard(i)
        if not remaining:
            break
    return times_by_layer


def buffering_trial_times(scheme, cfg: StreamConfig, decoder, trials: int,
                          seed: int, *, codec: CodecParams = CodecParams(),
                          loss_prob: float = 0.0) -> np.ndarray:
    """Per-trial first-decodable times, one row per trial, one column per
    layer, in symbol-send units; -1 marks a layer that never decodes
    within the block."""
    scheme = Scheme(scheme)
    decoder = DecoderMode(decoder)
    if trials < 1:
        raise ParameterError("trials must be positive")
    if not 0.0 <= loss_prob < 1.0:
        raise ParameterError("loss_prob must lie in [0, 1)")
    plan = plan_layers(cfg) if scheme is Scheme.PRC else None
    run_key = _bits.derive_key(stream_key(seed), _bits.TAG_BUFFER)

    if decoder is DecoderMode.IDEAL and loss_prob == 0.0:
        # every trial is the same deterministic prefix walk
        row = np.asarray(_ideal_buffer_times(scheme, cfg, plan), dtype=np.int64)
        return np.tile(row, (trials, 1))

    if decoder is DecoderMode.ML and loss_prob == 0.0:
        times = np.zeros((trials, cfg.m), dtype=np.int64)
        if scheme is Scheme.PRC:
            kstars = plan.k_stars
            _mc.buffer_prc_ml(run_key, cfg.N, trials,
                              np.asarray(kstars, dtype=np.int64), codec.precode,
                              _padded_cdfs(kstars, codec), times)
        elif scheme is Scheme.SP:
            _mc.buffer_sp_ml(run_key, cfg.N, trials,
                             np.asarray(cfg.k, dtype=np.int64),
                             np.asarray(cfg.segment_offsets, dtype=np.int64),
                             np.asarray(cfg.n, dtype=np.int64), codec.precode,
                             _padded_cdfs(cfg.k, codec), times)
        else:
            ka = [sum(cfg.k[: i + 1]) for i in range(cfg.m)]
            _mc.buffer_la_ml(run_key, cfg.N, trials,
                             np.asarray(cfg.k, dtype=np.int64),
                             np.asarray(cfg.segment_offsets, dtype=np.int64),
                             np.asarray(cfg.n, dtype=np.int64), codec.precode,
                             _padded_cdfs(ka, codec), times)
        return times

    # Remaining modes run through the object-level decoders.
    times = np.full((trials, cfg.m), -1, dtype=np.int64)
    for t in range(trials):
        tkey = _bits.derive_key(run_key, _bits.TAG_TRIAL + t)
        block_seed = int(tkey)
        if loss_prob > 0.0:
            arrivals = received_positions(
                cfg.N, ErasureModel("iid", loss_prob), block_seed)
        else:
            arrivals = np.arange(cfg.N, dtype=np.int64)
        times[t] = _buffer_trial_object_level(
            scheme, cfg, plan, decoder, codec, block_seed, arrivals)
    return times


def run_buffering_time(scheme, cfg: StreamConfig, decoder, trials: int,
                       seed: int, *, codec: CodecParams = CodecParams(),
                       loss_prob: float = 0.0) -> list:
    """Mean time (in symbol-send units) until each layer first decodes.

    The measured model is lossless sequential arrival: symbol t arrives at
    time t. loss_prob > 0 switches to an IID-loss extension of that model
    (time still counts sent symbols). Trials that never decode within the
    block are excluded from the mean and reported in `failures`.
    """
    times = buffering_trial_times(scheme, cfg, decoder, trials, seed,
                                  codec=codec, loss_prob=loss_prob)
    return _summarize_times(Scheme(scheme), cfg, times, trials)


def _buffer_trial_object_level(scheme, cfg, plan, decoder, codec,
                               block_seed, arrivals) -> list:
    """Binary search per layer over arrival prefixes, probing the same
    structure-only decoders the PLR paths use."""
    from .codec import _peel, subseed

    seg_of = _segment_of(cfg)
    sizes = plan.k_stars if scheme is Scheme.PRC else (
        cfg.k if scheme is Scheme.SP else
        [sum(cfg.k[: i + 1]) for i in range(cfg.m)])
    codes = [codec.build(k, subseed(block_seed, i)) for i, k in enumerate(sizes)]
    offs = cfg.segment_offsets

    def layer_ok(i, n_arrived) -> bool:
        pos = arrivals[:n_arrived]
        if decoder is DecoderMode.IDEAL:
            if scheme is Scheme.PRC:
                return len(pos) >= plan.k_stars[i]
            counts = [0] * cfg.m
            for p in pos:
                counts[int(seg_of[p])] += 1
            if scheme is Scheme.SP:
                return counts[i] >= cfg.k[i]
            from .layered import la_ideal_recoverable
            return la_ideal_recoverable(counts, cfg.k, i)
        if scheme is Scheme.PRC:
            code = codes[i]
            rows = [code.neighbors(int(p)) for p in pos] + code._parity_index_rows()
            need = range(code.k)
            ncols = code.n_inner
        elif scheme is Scheme.SP:
            code = codes[i]
            esis = [int(p) - offs[i] for p in pos if seg_of[p] == i]
            rows = [code.neighbors(e) for e in esis] + code._parity_index_rows()
            need = range(code.k)
            ncols = code.n_inner
        else:
            from .layered import BaselineSymbol, _la_joint_rows
            syms = [BaselineSymbol(segment=int(seg_of[p]),
                                   esi=int(p) - offs[int(seg_of[p])],
                                   payload=np.zeros(cfg.T, dtype=np.uint8))
                    for p in pos]
            rows, _, ncols, prefixes = _la_joint_rows(syms, cfg, codes)
            need = range(prefixes[i], prefixes[i + 1])
        pay = np.zeros((len(rows), 0), dtype=np.uint8)
        if decoder is DecoderMode.BP:
            slots, _ = _peel(rows, pay, ncols)
        else:
            from .codec import _ml_solve
            slots, _ = _ml_solve(rows, pay, ncols)
        return all(slots[c] is not None for c in need)

    out = []
    n_arr = len(arrivals)
    for i in range(cfg.m):
        if not layer_ok(i, n_arr):
            out.append(-1)
            continue
        lo, hi = 0, n_arr
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if layer_ok(i, mid):
                hi = mid
            else:
                lo = mid
        # time is the send index of the arrival that completed the layer
        out.append(int(arrivals[hi - 1]) + 1)
    return out


def _summarize_times(scheme, cfg, times: np.ndarray, trials: int) -> list:
    out = []
    for i in range(cfg.m):
        col = times[:, i]
        good = col[col >= 0].astype(np.float64)
        failures = int((col < 0).sum())
        mean = float(good.mean()) if good.size else float("nan")
        std = float(good.std(ddof=0)) if good.size else float("nan")
        out.append(BufferingResult(scheme=scheme.value, layer=i + 1, N=cfg.N,
                                   mean_time=mean, std=std, trials=trials,
                                   failures=failures))
    return out


def plr_to_csv(estimates: Iterable[PlrEstimate], header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "layer", "N", "K", "ratio", "trials", "failures",
                "plr", "wilson_lo", "wilson_hi"])
    for e in estimates:
        w.writerow([e.scheme, e.layer, e.N, e.K, f"{e.ratio:.6g}", e.trials,
                    e.failures, f"{e.plr:.8g}", f"{e.wilson_lo:.8g}",
                    f"{e.wilson_hi:.8g}"])
    return buf.getvalue()


def buffering_to_csv(results: Iterable[BufferingResult],
                     header_lines: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "layer", "N", "mean_time", "std", "failures"])
    for r in results:
        w.writerow([r.scheme, r.layer, r.N, f"{r.mean_time:.6g}",
                    f"{r.std:.6g}", r.failures])
    return buf.getvalue()
