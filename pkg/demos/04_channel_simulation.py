"""Monte-Carlo erasure-channel experiments.

Sweeps the received ratio and measures per-layer packet loss after
recovery, then measures buffering time: how many symbol-send slots pass
before each layer first becomes decodable under lossless sequential
arrival.

Run: python demos/04_channel_simulation.py
"""

from layerfec import StreamConfig
from layerfec.analysis import HypergeomParams, sp_recovery_prob
from layerfec.layered import CodecParams
from layerfec.simulate import run_buffering_time, run_plr_sweep

cfg = StreamConfig(k=(50, 80), r=(0.5, 0.8), T=4, N=200)
codec = CodecParams(precode=16)
TRIALS = 20000

print("=" * 72)
print("STEP 1: idealized PLR sweep (decoder = counting rule)")
print("=" * 72)

ratios = [0.45, 0.50, 0.55, 0.60, 0.75, 0.80, 0.85]
print(f"\nN = {cfg.N}, k = {cfg.k}, rates = {cfg.r}, {TRIALS} trials/point\n")
print(" ratio | PRC L1    SP L1    LA L1  | PRC L2    SP L2    LA L2")
table = {}
for scheme in ("PRC", "SP", "LA"):
    for e in run_plr_sweep(scheme, cfg, "ideal", ratios, TRIALS, seed=1):
        table[(scheme, e.layer, round(e.ratio, 2))] = e.plr
for r in ratios:
    row = [table[(s, l, r)] for l in (1, 2) for s in ("PRC", "SP", "LA")]
    print(f"  {r:.2f} | {row[0]:7.4f}  {row[1]:7.4f}  {row[2]:7.4f} |"
          f" {row[3]:7.4f}  {row[4]:7.4f}  {row[5]:7.4f}")
print("\nThe progressive columns snap between 1 and 0 at the layer rates;")
print("the baselines decay through every intermediate loss level.")

print()
print("=" * 72)
print("STEP 2: the measurement agrees with the exact tail")
print("=" * 72)

print("\nseparate scheme, layer 1, empirical vs exact failure probability:")
for r in (0.50, 0.55, 0.60):
    measured = table[("SP", 1, r)]
    exact = float(1 - sp_recovery_prob(
        HypergeomParams(N=cfg.N, n=cfg.n[0], R=round(cfg.N * r), k=cfg.k[0])))
    print(f"  ratio {r:.2f}: measured {measured:.4f}, exact {exact:.4f}")

print()
print("=" * 72)
print("STEP 3: real codec instead of the counting rule")
print("=" * 72)

ml_ratios = [0.55, 0.60, 0.65, 0.70]
print(f"\nML-decoded LT with 16 dense parities, 2000 trials/point:")
print(" ratio | PRC L1    SP L1")
for r in ml_ratios:
    vals = {}
    for scheme in ("PRC", "SP"):
        ests = run_plr_sweep(scheme, cfg, "ml", [r], 2000, seed=2, codec=codec)
        vals[scheme] = next(e.plr for e in ests if e.layer == 1)
    print(f"  {r:.2f} | {vals['PRC']:7.4f}  {vals['SP']:7.4f}")
print("\nThe codec charges a few extra symbols over the counting rule, but")
print("the ordering of the schemes is unchanged.")

print()
print("=" * 72)
print("STEP 4: buffering time under sequential arrival")
print("=" * 72)

print("\nmean symbol-send slots until each layer first decodes:")
print("          idealized        real codec (ML)")
print(" scheme   L1      L2       L1      L2")
for scheme in ("PRC", "SP", "LA"):
    ideal = run_buffering_time(scheme, cfg, "ideal", 5, seed=3)
    real = run_buffering_time(scheme, cfg, "ml", 200, seed=3, codec=codec)
    i1, i2 = (r.mean_time for r in ideal)
    m1, m2 = (r.mean_time for r in real)
    print(f"  {scheme:4s}  {i1:6.1f}  {i2:6.1f}    {m1:7.2f} {m2:7.2f}")
print("\nThe separate scheme owns the fastest layer-1 start (its segment")
print("arrives first); progressive packing trades that early start for a")
print("much earlier layer 2 and loss-position independence.")
