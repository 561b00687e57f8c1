"""Recovery-probability analysis for the layered schemes.

Under idealized decoding, a progressively packed layer recovers exactly
when R >= k_star, a pure step in the received count. A separately
protected layer instead needs k_i of its own n_i symbols among the R
received, which makes its recovery probability the upper tail of a
hypergeometric distribution. This module computes that tail exactly in
big-integer rationals (the default up to N = 2000), in log-gamma floating
point for larger N, and as the normal approximation, and derives the
successful-received-ratio (SRR) metric from any such curve.

The three lemma helpers are machine-checkable forms of the monotonicity
and convergence facts the schemes' comparison rests on.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable, Optional, Sequence

from .exceptions import DataError, ParameterError

__all__ = [
    "CurvePoint",
    "HypergeomParams",
    "RecoveryCurve",
    "curves_to_csv",
    "hypergeom_pmf",
    "lemma1_increment",
    "lemma3_gap",
    "normal_cdf",
    "prc_recovery_curve",
    "prc_recovery_prob",
    "sp_recovery_curve",
    "sp_recovery_normal_approx",
    "sp_recovery_prob",
    "srr",
    "verify_lemma2",
]

EXACT_N_LIMIT = 2000
DEFAULT_PLR_TARGET = 1e-4


@dataclass(frozen=True)
class HypergeomParams:
    """Separate-protection recovery instance.

    N output symbols total, n_i of them belonging to the layer, R received
    overall, and k_i layer symbols required.
    """

    N: int
    n: int
    R: int
    k: int

    def __post_init__(self):
        if not (0 <= self.k <= self.n <= self.N):
            raise ParameterError(
                f"need 0 <= k <= n <= N, got k={self.k} n={self.n} N={self.N}"
            )
        if not (0 <= self.R <= self.N):
            raise ParameterError(f"need 0 <= R <= N, got R={self.R}")


def prc_recovery_prob(k_star: int, R: int) -> float:
    """Step function: 1 once R reaches k_star, else 0."""
    if k_star < 0 or R < 0:
        raise ParameterError("counts must be non-negative")
    return 1.0 if R >= k_star else 0.0


def _tail_population_form(p: HypergeomParams) -> Fraction:
    """Sum over x of C(n,x) C(N-n,R-x) / C(N,R)."""
    num = 0
    for x in range(p.k, min(p.R, p.n) + 1):
        if p.R - x > p.N - p.n:
            continue
        num += comb(p.n, x) * comb(p.N - p.n, p.R - x)
    return Fraction(num, comb(p.N, p.R))


def _tail_draws_form(p: HypergeomParams) -> Fraction:
    """Equivalent complement form: sum over x of C(R,x) C(N-R,n-x) / C(N,n)."""
    num = 0
    for x in range(p.k, min(p.R, p.n) + 1):
        if p.n - x > p.N - p.R:
            continue
        num += comb(p.R, x) * comb(p.N - p.R, p.n - x)
    return Fraction(num, comb(p.N, p.n))


def _log_pmf_sum(p: HypergeomParams, lo: int, hi: int) -> float:
    """Sum of hypergeometric pmf over [lo, hi] via log-gamma, largest term
    first."""
    lg = math.lgamma

    def log_comb(a, b):
        return lg(a + 1) - lg(b + 1) - lg(a - b + 1)

    log_den = log_comb(p.N, p.R)
    terms = []
    for x in range(max(lo, 0), min(hi, p.n, p.R) + 1):
        if p.R - x > p.N - p.n:
            continue
        terms.append(log_comb(p.n, x) + log_comb(p.N - p.n, p.R - x) - log_den)
    if not terms:
        return 0.0
    peak = max(terms)
    return math.exp(peak) * math.fsum(math.exp(t - peak) for t in terms)


def _tail_log_space(p: HypergeomParams) -> float:
    """Stable floating tail: sum the smaller side of the distribution, so
    probabilities near 1 come out as 1 minus an accurately small mass."""
    mean = p.R * p.n / p.N
    if p.k <= mean:
        return max(0.0, 1.0 - _log_pmf_sum(p, 0, p.k - 1))
    return _log_pmf_sum(p, p.k, min(p.R, p.n))


def sp_recovery_prob(p: HypergeomParams, method: str = "auto"):
    """Probability that at least k of the layer's n symbols are among the
    R received ones.

    Returns an exact Fraction for the rational path ("exact", and "auto"
    up to N = 2000); the "float" path uses log-gamma arithmetic and is
    cross-checked against the rational one in the test suite.
    """
    if method not in ("auto", "exact", "float"):
        raise ParameterError(f"unknown method {method!r}")
    exact = method == "exact" or (method == "auto" and p.N <= EXACT_N_LIMIT)
    if p.R < p.k:
        return Fraction(0) if exact else 0.0
    if p.R >= p.N - (p.n - p.k):
        return Fraction(1) if exact else 1.0
    if exact:
        return _tail_population_form(p)
    return min(1.0, _tail_log_space(p))


def hypergeom_pmf(p: HypergeomParams, x: int) -> Fraction:
    """Exact pmf of the layer-symbol count among R received."""
    if x < 0 or x > p.n or p.R - x < 0 or p.R - x > p.N - p.n:
        return Fraction(0)
    return Fraction(comb(p.n, x) * comb(p.N - p.n, p.R - x), comb(p.N, p.R))


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def sp_recovery_normal_approx(r: float, r_i: float, eta_i: float, N: int,
                              variant: str = "simplified") -> float:
    """Normal-approximation recovery probability at received ratio r.

    variant="simplified" evaluates Phi((r - r_i) sqrt(N) / sqrt(r(1-r)(1-eta_i))).
    variant="moments" derives the argument from the hypergeometric mean and
    variance instead, which carries an extra sqrt(eta_i) factor:
    Phi((r - r_i) sqrt(N eta_i) / sqrt(r(1-r)(1-eta_i))). The simplified
    form overstates the argument by 1/sqrt(eta_i); both are exposed so the
    discrepancy stays visible instead of being silently resolved.
    """
    if not 0.0 < r < 1.0:
        raise ParameterError("received ratio must lie strictly in (0, 1)")
    if not 0.0 < eta_i < 1.0:
        raise ParameterError("output ratio must lie strictly in (0, 1)")
    if N < 1:
        raise ParameterError("N must be positive")
    if variant not in ("simplified", "moments"):
        raise ParameterError(f"unknown variant {variant!r}")
    z = (r - r_i) * math.sqrt(N) / math.sqrt(r * (1.0 - r) * (1.0 - eta_i))
    if variant == "moments":
        z *= math.sqrt(eta_i)
    return normal_cdf(z)


@dataclass(frozen=True)
class CurvePoint:
    R: int
    ratio: float
    probability: float


@dataclass(frozen=True)
class RecoveryCurve:
    """Recovery probability of one layer versus received count."""

    scheme: str
    layer: int  # 1-based
    N: int
    points: tuple

    def __post_init__(self):
        for a, b in zip(self.points, self.points[1:]):
            if b.probability < a.probability - 1e-12:
                raise DataError(
                    f"curve {self.scheme} layer {self.layer}: probability "
                    f"drops at R={b.R}"
                )

    def probabilities(self) -> list:
        return [p.probability for p in self.points]


def prc_recovery_curve(k_star: int, N: int, layer: int = 1) -> RecoveryCurve:
    pts = tuple(CurvePoint(R, R / N, prc_recovery_prob(k_star, R))
                for R in range(N + 1))
    return RecoveryCurve(scheme="PRC", layer=layer, N=N, points=pts)


def sp_recovery_curve(N: int, n: int, k: int, layer: int = 1,
                      method: str = "auto") -> RecoveryCurve:
    """Whole recovery curve over R = 0..N.

    The exact path accumulates the closed-form one-step increments (see
    lemma1_increment) over a common denominator C(N, n), which is O(N)
    big-integer work instead of O(N^2); the accumulated mass must land on
    exactly 1 at the upper boundary, which is checked. The test suite
    additionally pins curve points against the direct tail sums.
    """
    if method not in ("auto", "exact", "float"):
        raise ParameterError(f"unknown method {method!r}")
    HypergeomParams(N=N, n=n, R=0, k=k)  # validate the family
    exact = method == "exact" or (method == "auto" and N <= EXACT_N_LIMIT)
    if not exact:
        pts = [CurvePoint(R, R / N,
                          float(sp_recovery_prob(
                              HypergeomParams(N=N, n=n, R=R, k=k), "float")))
               for R in range(N + 1)]
        return RecoveryCurve(scheme="SP", layer=layer, N=N, points=tuple(pts))
    den = comb(N, n)
    upper = N - (n - k)
    values = [0.0] * (N + 1)
    if k == 0:
        acc = den
        for R in range(N + 1):
            values[R] = 1.0
    else:
        acc = 0
        for R in range(k - 1, upper):
            acc += comb(R, k - 1) * comb(N - R - 1, n - k)
            values[R + 1] = acc / den
        for R in range(upper, N + 1):
            values[R] = 1.0
    if acc != den:
        raise DataError(
            f"increment accumulation did not close: {acc} != {den}")
    pts = tuple(CurvePoint(R, R / N, values[R]) for R in range(N + 1))
    return RecoveryCurve(scheme="SP", layer=layer, N=N, points=pts)


def srr(curve: RecoveryCurve, plr_target: float = DEFAULT_PLR_TARGET) -> Optional[float]:
    """Smallest received ratio whose recovery probability reaches
    1 - plr_target; None when the curve never gets there."""
    if not curve.points:
        raise DataError("empty curve")
    threshold = 1.0 - plr_target
    for pt in curve.points:
        if pt.probability >= threshold:
            return pt.ratio
    return None


def lemma1_increment(p: HypergeomParams) -> Fraction:
    """Exact one-step increase of the separate-protection recovery
    probability: Pr(R+1) - Pr(R) = C(R, k-1) C(N-R-1, n-k) / C(N, n),
    valid on the strictly increasing range k <= R < N - (n - k)."""
    if not (p.k <= p.R < p.N - (p.n - p.k)):
        raise ParameterError(
            f"R={p.R} outside the strict-increase range "
            f"[{p.k}, {p.N - (p.n - p.k)})"
        )
    return Fraction(comb(p.R, p.k - 1) * comb(p.N - p.R - 1, p.n - p.k),
                    comb(p.N, p.n))


def _discretize(x: float) -> int:
    """round-half-even, the documented discretization of N*r quantities."""
    return round(x)


def verify_lemma2(r: float, r_i: float, eta_i: float,
                  N_list: Sequence[int]) -> bool:
    """Check that the exact recovery probability at fixed received ratio
    r > r_i is non-decreasing along increasing block sizes. Plateaus from
    rounding R = round(N*r) are tolerated; a strict decrease fails."""
    if r <= r_i:
        raise ParameterError("lemma hypothesis needs r > r_i")
    if list(N_list) != sorted(set(N_list)) or not N_list:
        raise ParameterError("N_list must be strictly increasing and non-empty")
    prev = None
    for N in N_list:
        n = _discretize(N * eta_i)
        k = _discretize(n * r_i)
        R = _discretize(N * r)
        val = sp_recovery_prob(HypergeomParams(N=N, n=n, R=R, k=k), method="exact")
        if prev is not None and val < prev:
            return False
        prev = val
    return True


def lemma3_gap(N: int, r: float, r_i: float, eta_i: float,
               method: str = "auto") -> float:
    """Residual failure probability 1 - Pr'(round(N*r)) at ratio r; for
    r > r_i this vanishes as N grows, matching the progressive step."""
    n = _discretize(N * eta_i)
    k = _discretize(n * r_i)
    R = _discretize(N * r)
    return float(1 - sp_recovery_prob(HypergeomParams(N=N, n=n, R=R, k=k),
                                      method=method))


def curves_to_csv(curves: Iterable[RecoveryCurve], header_lines: Sequence[str] = ()) -> str:
    """CSV with columns scheme, layer, N, R, r, probability."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "layer", "N", "R", "r", "probability"])
    for curve in curves:
        for pt in curve.points:
            w.writerow([curve.scheme, curve.layer, curve.N, pt.R,
                        f"{pt.ratio:.6g}", f"{pt.probability:.12g}"])
    return buf.getvalue()
