"""Experiment runner: analyze | simulate | verify.

Each subcommand takes one TOML config and writes figure-ready CSV/JSON.
Every output embeds the canonical config and master seed in `#` header
lines, so any emitted file can be reproduced from itself; pass
--no-timestamp for byte-identical reruns.

Exit codes: 0 success, 1 property violation, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import analysis, simulate
from .codec import RatelessCode, bp_decode, lt_encode, ml_decode, robust_soliton
from .exceptions import ConfigError, LayerFecError, ParameterError
from .layered import (
    CodecParams,
    DecoderMode,
    Scheme,
    StreamConfig,
    pack_segments,
    plan_layers,
    unpack_segments,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_IO = 3

__all__ = [
    "ExperimentConfig",
    "cmd_analyze",
    "cmd_simulate",
    "cmd_verify",
    "load_config",
    "main",
]


@dataclass(frozen=True)
class Lemma2Case:
    r: float
    rate: float
    eta: float

    def __post_init__(self):
        if self.r <= self.rate:
            raise ConfigError(
                f"lemma-2 case needs received ratio above the coding rate, "
                f"got r={self.r} <= rate={self.rate}"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    stream: StreamConfig
    schemes: tuple
    decoder: DecoderMode
    seed: int
    trials: int
    ratios: tuple
    codec: CodecParams
    buffering_trials: int
    plr_target: float
    normal_approx: bool
    erasures: str
    lemma2_cases: tuple
    verify_trials: int

    def as_dict(self) -> dict:
        return {
            "stream": {"k": list(self.stream.k), "rates": list(self.stream.r),
                       "T": self.stream.T, "N": self.stream.N},
            "schemes": [s.value for s in self.schemes],
            "decoder": self.decoder.value,
            "seed": self.seed,
            "trials": self.trials,
            "ratios": [round(r, 10) for r in self.ratios],
            "codec": asdict(self.codec),
            "buffering_trials": self.buffering_trials,
            "plr_target": self.plr_target,
            "normal_approx": self.normal_approx,
            "erasures": self.erasures,
            "lemma2_cases": [asdict(c) for c in self.lemma2_cases],
            "verify_trials": self.verify_trials,
        }


def _sweep_ratios(sweep: dict, N: int) -> tuple:
    if "ratios" in sweep:
        return tuple(float(r) for r in sweep["ratios"])
    if not sweep:
        return ()
    try:
        start, stop, step = sweep["start"], sweep["stop"], sweep["step"]
    except KeyError as e:
        raise ConfigError(f"sweep section needs start/stop/step or ratios: {e}")
    if step <= 0 or stop < start:
        raise ConfigError("sweep needs step > 0 and stop >= start")
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 12) for i in range(count))


def load_config(path: str, seed_override: Optional[int] = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config {path}: {e}")
    try:
        stream = raw["stream"]
        cfg = StreamConfig(
            k=tuple(stream["source_symbols"]),
            r=tuple(stream["rates"]),
            T=int(stream.get("symbol_bytes", 188)),
            N=int(stream["output_symbols"]),
        )
        run = raw.get("run", {})
        schemes = tuple(Scheme(s) for s in run.get("schemes", ["PRC", "SP"]))
        decoder = DecoderMode(str(run.get("decoder", "ideal")).lower())
        seed = int(run.get("seed", 1))
        trials = int(run.get("trials", 10000))
        codec_raw = raw.get("codec", {})
        codec = CodecParams(
            c=float(codec_raw.get("c", 0.05)),
            delta=float(codec_raw.get("delta", 0.5)),
            precode=int(codec_raw.get("precode", 0)),
        )
        sweep = raw.get("sweep", {})
        ratios = _sweep_ratios(sweep, cfg.N)
        buffering = raw.get("buffering", {})
        buffering_trials = int(buffering.get("trials", 0))
        ana = raw.get("analysis", {})
        plr_target = float(ana.get("plr_target", analysis.DEFAULT_PLR_TARGET))
        normal_approx = bool(ana.get("normal_approx", True))
        erasures = str(raw.get("channel", {}).get("model", "fixed_count"))
        ver = raw.get("verify", {})
        lemma2_cases = tuple(
            Lemma2Case(r=float(c["r"]), rate=float(c["rate"]), eta=float(c["eta"]))
            for c in ver.get("lemma2_cases", [])
        )
        verify_trials = int(ver.get("trials", 100000))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid config {path}: {e}")
    if trials < 1 or (ratios and any(not 0 < r <= 1 for r in ratios)):
        raise ConfigError("trials must be >= 1 and ratios within (0, 1]")
    if seed_override is not None:
        seed = seed_override
    return ExperimentConfig(
        stream=cfg, schemes=schemes, decoder=decoder, seed=seed, trials=trials,
        ratios=ratios, codec=codec, buffering_trials=buffering_trials,
        plr_target=plr_target, normal_approx=normal_approx, erasures=erasures,
        lemma2_cases=lemma2_cases, verify_trials=verify_trials)


def _header_lines(cfg: ExperimentConfig, command: str, timestamp: bool) -> list:
    lines = [
        f"layerfec {command}",
        "config: " + json.dumps(cfg.as_dict(), sort_keys=True),
        f"seed: {cfg.seed}",
    ]
    if timestamp:
        lines.append("generated: " + time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    return lines


def _write(out_dir: str, name: str, text: str) -> str:
    try:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as e:
        raise IOError(f"cannot write {name} to {out_dir}: {e}")
    return path


def cmd_analyze(cfg: ExperimentConfig, out_dir: str, timestamp: bool = True,
                log: Callable[[str], None] = print) -> int:
    """Analytical recovery curves plus the SRR table."""
    plan = plan_layers(cfg.stream)
    header = _header_lines(cfg, "analyze", timestamp)
    curves = []
    srr_rows = []
    for i, spec in enumerate(plan.layers):
        prc = analysis.prc_recovery_curve(spec.k_star, cfg.stream.N, layer=i + 1)
        sp = analysis.sp_recovery_curve(cfg.stream.N, spec.n, spec.k, layer=i + 1)
        curves += [prc, sp]
        srr_rows.append(("PRC", i + 1, analysis.srr(prc, cfg.plr_target)))
        srr_rows.append(("SP", i + 1, analysis.srr(sp, cfg.plr_target)))
        if cfg.normal_approx and 0 < spec.eta < 1:
            for variant, tag in (("simplified", "SP-normal"),
                                 ("moments", "SP-normal-moments")):
                pts = []
                for R in range(1, cfg.stream.N):
                    r = R / cfg.stream.N
                    p = analysis.sp_recovery_normal_approx(
                        r, float(spec.rate), float(spec.eta), cfg.stream.N,
                        variant=variant)
                    pts.append(analysis.CurvePoint(R, r, p))
                curves.append(analysis.RecoveryCurve(
                    scheme=tag, layer=i + 1, N=cfg.stream.N, points=tuple(pts)))
    path = _write(out_dir, "curves.csv", analysis.curves_to_csv(curves, header))
    log(f"wrote {path}")

    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write("scheme,layer,N,srr\n")
    for scheme, layer, value in srr_rows:
        buf.write(f"{scheme},{layer},{cfg.stream.N},"
                  f"{'' if value is None else f'{value:.6g}'}\n")
    path = _write(out_dir, "srr.csv", buf.getvalue())
    log(f"wrote {path}")
    if cfg.normal_approx:
        log("note: the simplified normal form omits the sqrt(eta) factor the "
            "moment derivation carries; both variants are emitted")
    return EXIT_OK


def _empirical_srr(points: Sequence, target: float) -> Optional[float]:
    """Smallest swept ratio from which the measured PLR stays at or below
    the target."""
    best = None
    for p in sorted(points, key=lambda e: e.ratio):
        if p.plr <= target:
            if best is None:
                best = p.ratio
        else:
            best = None
    return best


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, timestamp: bool = True,
                 threads: int = 1, log: Callable[[str], None] = print) -> int:
    """Monte-Carlo PLR sweep and buffering times for each scheme."""
    header = _header_lines(cfg, "simulate", timestamp)
    estimates = []
    buffering = []
    for scheme in cfg.schemes:
        if cfg.ratios:
            estimates += simulate.run_plr_sweep(
                scheme, cfg.stream, cfg.decoder, cfg.ratios, cfg.trials,
                cfg.seed, codec=cfg.codec, erasures=cfg.erasures,
                threads=threads)
        if cfg.buffering_trials > 0:
            buffering += simulate.run_buffering_time(
                scheme, cfg.stream, cfg.decoder, cfg.buffering_trials,
                cfg.seed, codec=cfg.codec)
    if estimates:
        path = _write(out_dir, "plr.csv", simulate.plr_to_csv(estimates, header))
        log(f"wrote {path}")
    if buffering:
        path = _write(out_dir, "buffering.csv",
                      simulate.buffering_to_csv(buffering, header))
        log(f"wrote {path}")

    summary = []
    for scheme in cfg.schemes:
        for layer in range(1, cfg.stream.m + 1):
            pts = [e for e in estimates
                   if e.scheme == scheme.value and e.layer == layer]
            bt = [b for b in buffering
                  if b.scheme == scheme.value and b.layer == layer]
            summary.append({
                "scheme": scheme.value,
                "layer": layer,
                "srr": _empirical_srr(pts, cfg.plr_target),
                "mean_buffering": bt[0].mean_time if bt else None,
                "plr_points": [
                    {"ratio": e.ratio, "plr": e.plr, "trials": e.trials,
                     "failures": e.failures,
                     "wilson": [e.wilson_lo, e.wilson_hi]} for e in pts],
            })
    text = "\n".join(f"# {line}" for line in header) + "\n" + \
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    path = _write(out_dir, "summary.json", text)
    log(f"wrote {path}")
    return EXIT_OK


class _Check:
    def __init__(self, log):
        self.failures = []
        self.total = 0
        self.log = log

    def run(self, name: str, fn: Callable[[], Optional[str]]):
        self.total += 1
        try:
            detail = fn()
        except LayerFecError:
            raise
        except Exception as e:  # a crashed check is a failed check
            detail = f"raised {type(e).__name__}: {e}"
        if detail:
            self.failures.append((name, detail))
            self.log(f"FAIL {name}: {detail}")
        else:
            self.log(f"PASS {name}")


def cmd_verify(cfg: ExperimentConfig, out_dir: Optional[str] = None,
               timestamp: bool = True, threads: int = 1,
               log: Callable[[str], None] = print) -> int:
    """Machine-checkable property suite; exits 1 on any violation."""
    checks = _Check(log)
    rng_seed = cfg.seed

    def check_roundtrip():
        trials, bad = 200, 0
        for k in (16, 32, 64):
            code_rng = np.random.default_rng(rng_seed + k)
            for t in range(trials):
                src = code_rng.integers(0, 256, size=(k, 4), dtype=np.uint8)
                code = RatelessCode(k, seed=rng_seed * 7919 + k * 131 + t,
                                    precode=min(16, cfg.codec.precode or 16))
                syms = code.encode_block(src, range(k + 15))
                slots, rep = code.decode_ml(syms)
                if not rep.success or any(
                        not np.array_equal(s, src[i]) for i, s in enumerate(slots)):
                    bad += 1
        rate = 1 - bad / (3 * trials)
        if rate < 0.99:
            return f"round-trip success {rate:.4f} below 0.99"

    def check_bp_subset_ml():
        dist = robust_soliton(24)
        for t in range(150):
            src = np.random.default_rng(rng_seed + t).integers(
                0, 256, size=(24, 4), dtype=np.uint8)
            syms = [lt_encode(src, e, dist, seed=rng_seed + 7 * t)
                    for e in range(30)]
            _, bp = bp_decode(syms, 24, dist, seed=rng_seed + 7 * t)
            _, ml = ml_decode(syms, 24, dist, seed=rng_seed + 7 * t)
            if bp.success and not ml.success:
                return f"BP solved but ML failed at trial {t}"
            if ml.recovered < bp.recovered:
                return f"ML recovered fewer symbols than BP at trial {t}"

    def check_packing():
        rng = np.random.default_rng(rng_seed)
        for _ in range(200):
            widths = rng.integers(1, 9, size=rng.integers(1, 5))
            segs = [rng.integers(0, 256, size=w, dtype=np.uint8) for w in widths]
            packed = pack_segments(segs)
            back = unpack_segments(packed, list(widths))
            if not all(np.array_equal(a, b) for a, b in zip(segs, back)):
                return "pack/unpack mismatch"

    def check_progressive_ordering():
        res = simulate.run_buffering_time(Scheme.PRC, cfg.stream,
                                          DecoderMode.IDEAL, 3, cfg.seed)
        times = [r.mean_time for r in res]
        if times != sorted(times):
            return f"ideal decodable times not ordered: {times}"
        ml = simulate.run_buffering_time(Scheme.PRC, cfg.stream, DecoderMode.ML,
                                         10, cfg.seed, codec=cfg.codec)
        mt = [r.mean_time for r in ml]
        if mt != sorted(mt):
            return f"ml decodable times not ordered: {mt}"

    def check_budgets():
        plan = plan_layers(cfg.stream)
        total = sum(spec.width for spec in plan.layers)
        if total != cfg.stream.T:
            return f"widths sum to {total} != T={cfg.stream.T}"
        for i, spec in enumerate(plan.layers):
            progressive = (cfg.stream.N - spec.k_star) * spec.width
            segmented = (spec.n - spec.k) * cfg.stream.T
            if progressive != segmented:
                return (f"layer {i + 1}: redundancy {progressive} != {segmented}")

    def check_determinism():
        a = simulate.run_plr_sweep(Scheme.SP, cfg.stream, DecoderMode.IDEAL,
                                   [0.5, 0.6], 2000, cfg.seed)
        b = simulate.run_plr_sweep(Scheme.SP, cfg.stream, DecoderMode.IDEAL,
                                   [0.5, 0.6], 2000, cfg.seed)
        if a != b:
            return "identical runs disagree"

    def check_lemma1():
        for (N, n, k) in ((40, 20, 10), (130, 65, 32)):
            for R in range(k, N - (n - k)):
                inc = analysis.lemma1_increment(
                    analysis.HypergeomParams(N=N, n=n, R=R, k=k))
                lhs = analysis.sp_recovery_prob(
                    analysis.HypergeomParams(N=N, n=n, R=R + 1, k=k), "exact")
                rhs = analysis.sp_recovery_prob(
                    analysis.HypergeomParams(N=N, n=n, R=R, k=k), "exact")
                if lhs - rhs != inc:
                    return f"increment identity fails at N={N} R={R}"
                if inc <= 0:
                    return f"increment not positive at N={N} R={R}"

    def check_lemma2():
        cases = cfg.lemma2_cases or (
            Lemma2Case(r=0.6, rate=0.5, eta=0.5),
            Lemma2Case(r=0.9, rate=0.8, eta=0.5),
        )
        Ns = list(range(100, 1100, 100))
        for case in cases:
            if not analysis.verify_lemma2(case.r, case.rate, case.eta, Ns):
                return f"monotonicity in N fails for {case}"

    def check_lemma3():
        gaps = [analysis.lemma3_gap(N, 0.55, 0.5, 0.5)
                for N in (500, 1000, 2000, 5000)]
        if not any(g < 1e-4 for g in gaps):
            return f"failure gap never crossed 1e-4: {gaps}"
        below = [analysis.lemma3_gap(N, 0.45, 0.5, 0.5, method="auto")
                 for N in (500, 1000, 2000)]
        if not all(b > 0.5 for b in below):
            return "below-rate ratios should stay unrecoverable"

    def check_hypergeom_identities():
        from .analysis import _tail_draws_form, _tail_population_form
        for N in (10, 23, 40):
            for n in (N // 3, N // 2):
                for k in (max(0, n // 2),):
                    for R in range(0, N + 1):
                        p = analysis.HypergeomParams(N=N, n=n, R=R, k=k)
                        a = analysis.sp_recovery_prob(p, "exact")
                        if not (0 <= a <= 1):
                            return f"probability out of range at {p}"
                        if p.k <= p.R < p.N - (p.n - p.k):
                            if _tail_population_form(p) != _tail_draws_form(p):
                                return f"the two tail forms disagree at {p}"
                        total = sum(analysis.hypergeom_pmf(p, x)
                                    for x in range(0, n + 1))
                        if total != 1:
                            return f"pmf does not sum to 1 at {p}"

    def check_sim_vs_analysis():
        scaled = StreamConfig(k=(50, 80), r=(0.5, 0.8), T=4, N=200)
        ratios = [round(0.35 + 0.05 * i, 2) for i in range(9)]
        ests = simulate.run_plr_sweep(Scheme.SP, scaled, DecoderMode.IDEAL,
                                      ratios, cfg.verify_trials, cfg.seed,
                                      threads=threads)
        for e in ests:
            i = e.layer - 1
            exact = float(1 - analysis.sp_recovery_prob(analysis.HypergeomParams(
                N=scaled.N, n=scaled.n[i], R=e.R, k=scaled.k[i])))
            lo, hi = simulate.wilson_interval(e.failures, e.trials,
                                              z=simulate.Z99)
            if not lo <= exact <= hi:
                return (f"layer {e.layer} ratio {e.ratio}: exact {exact:.6g} "
                        f"outside Wilson99 [{lo:.6g}, {hi:.6g}]")

    checks.run("codec round-trip at 15-symbol overhead", check_roundtrip)
    checks.run("bp success implies ml success", check_bp_subset_ml)
    checks.run("segment packing is lossless", check_packing)
    checks.run("progressive layers decode in order", check_progressive_ordering)
    checks.run("byte budget and redundancy parity", check_budgets)
    checks.run("seeded runs are reproducible", check_determinism)
    checks.run("recovery increment identity", check_lemma1)
    checks.run("recovery grows with block size", check_lemma2)
    checks.run("large blocks reach the step limit", check_lemma3)
    checks.run("hypergeometric forms agree and normalize", check_hypergeom_identities)
    checks.run("simulation matches exact analysis", check_sim_vs_analysis)

    if out_dir:
        lines = _header_lines(cfg, "verify", timestamp)
        body = "\n".join(f"# {l}" for l in lines) + "\n"
        body += "\n".join(
            f"FAIL {name}: {detail}" for name, detail in checks.failures)
        body += ("\n" if checks.failures else "") + \
            f"checks: {checks.total - len(checks.failures)}/{checks.total} passed\n"
        path = _write(out_dir, "verify.txt", body)
        log(f"wrote {path}")
    if checks.failures:
        log(f"{len(checks.failures)} check(s) failed")
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="layerfec",
        description="Layered rateless FEC experiments: analytical curves, "
                    "Monte-Carlo sweeps, and property verification.")
    p.add_argument("command", choices=["analyze", "simulate", "verify"])
    p.add_argument("config", help="TOML experiment config")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes for sweep points")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the timestamp header for byte-identical reruns")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "analyze":
            return cmd_analyze(cfg, args.out, timestamp=not args.no_timestamp)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, timestamp=not args.no_timestamp,
                                threads=args.threads)
        return cmd_verify(cfg, args.out, timestamp=not args.no_timestamp,
                          threads=args.threads)
    except (ConfigError, ParameterError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IOError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
