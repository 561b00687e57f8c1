"""Exact recovery-probability analysis and the three monotonicity facts.

Progressive packing makes layer recovery a pure step in the received
count. Separate protection makes it a hypergeometric tail: how many of
the layer's own symbols landed among the R received. This demo computes
both exactly, extracts the successful-received-ratio (SRR) metric, and
checks the lemmas the comparison rests on.

Run: python demos/03_recovery_analysis.py
"""

from layerfec.analysis import (
    HypergeomParams,
    lemma1_increment,
    lemma3_gap,
    prc_recovery_curve,
    sp_recovery_curve,
    sp_recovery_normal_approx,
    sp_recovery_prob,
    srr,
)

N = 1000
LAYERS = [("layer 1", 500, 250, 0.5), ("layer 2", 500, 400, 0.8)]

print("=" * 72)
print("STEP 1: step function versus hypergeometric tail")
print("=" * 72)

print(f"\nN = {N}, layer 1 with n = 500 own symbols, k = 250 needed,")
print("progressive threshold k* = N*rate = 500.\n")
print("   r     progressive   separate (exact)")
for R in (400, 480, 500, 520, 560, 600):
    step = 1.0 if R >= 500 else 0.0
    tail = float(sp_recovery_prob(HypergeomParams(N=N, n=500, R=R, k=250)))
    print(f"  {R / N:.2f}      {step:.0f}          {tail:.6f}")

exact = sp_recovery_prob(HypergeomParams(N=4, n=2, R=2, k=1))
print(f"\ntiny example, exact rational: N=4, n=2, k=1, R=2 -> {exact}")
print("(six equally likely pairs, exactly one misses the layer)")

print()
print("=" * 72)
print("STEP 2: successful received ratio at loss target 1e-4")
print("=" * 72)

print("\n            progressive   separate    difference")
for name, n, k, rate in LAYERS:
    p = srr(prc_recovery_curve(int(N * rate), N), 1e-4)
    s = srr(sp_recovery_curve(N, n, k), 1e-4)
    print(f"  {name}:    {p:.3f}        {s:.3f}      +{(s - p) * 100:.1f}%")
print("\nThe separate scheme needs 4-6% more of the stream before its")
print("residual loss clears 1e-4; the progressive step is already there.")

print()
print("=" * 72)
print("STEP 3: the increment identity (monotonicity in R)")
print("=" * 72)

p = HypergeomParams(N=40, n=20, R=15, k=10)
inc = lemma1_increment(p)
diff = (sp_recovery_prob(HypergeomParams(N=40, n=20, R=16, k=10))
        - sp_recovery_prob(p))
print(f"\nN=40, n=20, k=10, R=15:")
print(f"  closed-form increment : {inc} = {float(inc):.6f}")
print(f"  Pr(16) - Pr(15)       : {diff} = {float(diff):.6f}")
print(f"  identical: {inc == diff}")

print()
print("=" * 72)
print("STEP 4: growth in block size and the large-block limit")
print("=" * 72)

print("\nreceived ratio fixed at 0.55, rate 0.5, half the stream per layer:")
print("    N    failure probability 1 - Pr")
for n_ in (200, 500, 1000, 1400, 2000):
    gap = lemma3_gap(n_, 0.55, 0.5, 0.5)
    marker = "  <- clears 1e-4" if gap < 1e-4 else ""
    print(f"  {n_:5d}  {gap:.3e}{marker}")
print("\nAbove the rate, bigger blocks push the separate scheme toward the")
print("progressive step; below the rate it stays lost (ratio 0.45):")
print(f"  N=2000 -> 1 - Pr = {lemma3_gap(2000, 0.45, 0.5, 0.5):.6f}")

print()
print("=" * 72)
print("STEP 5: two normal approximations, one discrepancy")
print("=" * 72)

print("\nratio 0.55, rate 0.5, output ratio 0.5, N = 1000:")
exact = float(sp_recovery_prob(HypergeomParams(N=1000, n=500, R=550, k=250)))
simp = sp_recovery_normal_approx(0.55, 0.5, 0.5, 1000, "simplified")
mom = sp_recovery_normal_approx(0.55, 0.5, 0.5, 1000, "moments")
print(f"  exact tail            : {exact:.6f}")
print(f"  simplified argument   : {simp:.6f}")
print(f"  moment-based argument : {mom:.6f}")
print("\nThe simplified form drops a sqrt(eta) factor relative to what the")
print("hypergeometric mean and variance give. Both are exposed; the exact")
print("tail is the arbiter whenever it matters.")
