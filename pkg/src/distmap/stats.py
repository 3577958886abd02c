"""Histogram statistics and the quantitative validation pipeline.

Frequencies over equal bins, the chi-square statistic against the uniform
reference, exact tail probabilities from the chi-square distribution (via
the regularized upper incomplete gamma function, no external stats
dependency), and a coarse shape classifier for binned densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decoding import DecodingSpec
from .engine import EngineConfig, map_streams
from .errors import EmptyInputError, ParameterError
from .records import TextRecordStream

_EPS = 1e-15
_MAX_ITER = 10_000


def terrell_scott_bins(T: int) -> int:
    """Bin count (2T)^(1/3), floored, clamped to >= 2.

    The cube root is taken exactly (largest k with k^3 <= 2T) so that e.g.
    T=500 yields 10 rather than 9 from floating-point dust.
    """
    if T < 1:
        raise ParameterError("sample count must be >= 1")
    n = 2 * T
    k = int(round(n ** (1.0 / 3.0)))
    while (k + 1) ** 3 <= n:
        k += 1
    while k > 0 and k**3 > n:
        k -= 1
    return max(2, k)


def frequencies(xs, k: int) -> np.ndarray:
    """Fraction of samples per bin j: (j-1)/k <= x < j/k; x = 1 goes to the last bin."""
    if k < 1:
        raise ParameterError(f"bin count must be >= 1, got {k}")
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        raise EmptyInputError("cannot bin an empty sample set")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ParameterError("samples must lie in [0, 1]")
    edges = np.arange(k + 1) / k
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.clip(idx, 0, k - 1)
    counts = np.bincount(idx, minlength=k)
    return counts / x.size


def chi_square_stat(f, T: int) -> float:
    """T * k * sum((f_i - 1/k)^2) against the uniform reference."""
    freq = np.asarray(f, dtype=np.float64)
    k = freq.size
    if abs(math.fsum(freq.tolist()) - 1.0) > 1e-9:
        raise ParameterError("frequencies must sum to 1")
    dev = freq - 1.0 / k
    return float(T * k * math.fsum((dev * dev).tolist()))


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by series; valid for x < a + 1."""
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf_log(a: float, x: float) -> float:
    """ln of the regularized upper incomplete gamma Q(a, x) by continued
    fraction (modified Lentz); valid for x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return -x + a * math.log(x) - math.lgamma(a) + math.log(h)


def chi_square_pvalue(stat: float, df: int) -> float:
    """Upper-tail probability P(chi2_df > stat).

    Series branch for small arguments, continued fraction for large;
    absolute error below 1e-10. Underflows to 0.0 for extreme statistics;
    use chi_square_log10_pvalue for those tails.
    """
    if df < 1:
        raise ParameterError("degrees of freedom must be >= 1")
    if stat < 0.0 or not math.isfinite(stat):
        raise ParameterError(f"statistic must be finite and >= 0, got {stat}")
    if stat == 0.0:
        return 1.0
    a = df / 2.0
    x = stat / 2.0
    if x < a + 1.0:
        return min(max(1.0 - _lower_gamma_series(a, x), 0.0), 1.0)
    log_q = _upper_gamma_cf_log(a, x)
    if log_q < -745.0:  # exp underflow
        return 0.0
    return min(math.exp(log_q), 1.0)


def chi_square_log10_pvalue(stat: float, df: int) -> float:
    """log10 of the upper-tail probability, finite even where the p-value
    itself underflows (deep tails are reported on the log scale)."""
    if df < 1:
        raise ParameterError("degrees of freedom must be >= 1")
    if stat < 0.0 or not math.isfinite(stat):
        raise ParameterError(f"statistic must be finite and >= 0, got {stat}")
    if stat == 0.0:
        return 0.0
    a = df / 2.0
    x = stat / 2.0
    if x < a + 1.0:
        p = _lower_gamma_series(a, x)
        if p >= 1.0:
            return -math.inf
        return math.log1p(-p) / math.log(10.0)
    return _upper_gamma_cf_log(a, x) / math.log(10.0)


@dataclass(frozen=True)
class ShapeThresholds:
    """Operational cutoffs for the qualitative shape vocabulary.

    These are deliberate conventions, override as needed: a region is
    over-represented when its mean density is >= bias, under-represented
    when <= deficit; the final 5% slice is collapsed when its mean density
    is <= collapse while the rest of the tail is not under-represented.
    """

    bias: float = 1.15
    deficit: float = 0.9
    collapse: float = 0.5
    uniform_lo: float = 0.85
    uniform_hi: float = 1.15


@dataclass(frozen=True)
class ShapeSummary:
    head_mass: float
    tail_mass: float
    last_slice_ratio: float
    classification: str

    def to_json(self) -> dict:
        return {
            "head_mass": self.head_mass,
            "tail_mass": self.tail_mass,
            "last_slice_ratio": self.last_slice_ratio,
            "classification": self.classification,
        }


def _range_mass(heights: np.ndarray, lo: float, hi: float) -> float:
    """Exact integral of the k-equal-bin step density over [lo, hi]."""
    k = heights.size
    total = 0.0
    for j in range(k):
        a = j / k
        b = (j + 1) / k
        overlap = min(b, hi) - max(a, lo)
        if overlap > 0.0:
            total += heights[j] * overlap
    return total


def shape_summary(bins, thresholds: ShapeThresholds = ShapeThresholds()) -> ShapeSummary:
    """Classify a normalized binned density as uniform / head_biased /
    tail_biased / tail_collapse / mixed."""
    heights = np.asarray(bins, dtype=np.float64)
    if heights.size == 0:
        raise EmptyInputError("no bins")
    head_mass = _range_mass(heights, 0.0, 0.25)
    tail_mass = _range_mass(heights, 0.75, 1.0)
    tail_body = _range_mass(heights, 0.75, 0.95) / 0.20
    last_slice_ratio = _range_mass(heights, 0.95, 1.0) / 0.05
    head_ratio = head_mass / 0.25
    tail_ratio = tail_mass / 0.25

    th = thresholds
    if head_ratio >= th.bias and tail_ratio <= th.deficit:
        cls = "head_biased"
    elif tail_ratio >= th.bias and head_ratio <= th.deficit:
        cls = "tail_biased"
    elif last_slice_ratio <= th.collapse and tail_body >= th.deficit:
        cls = "tail_collapse"
    elif np.all(heights >= th.uniform_lo) and np.all(heights <= th.uniform_hi):
        cls = "uniform"
    else:
        cls = "mixed"
    return ShapeSummary(
        head_mass=head_mass,
        tail_mass=tail_mass,
        last_slice_ratio=last_slice_ratio,
        classification=cls,
    )


@dataclass(frozen=True)
class UniformityReport:
    T: int
    k: int
    chi2: float
    df: int
    p_value: float
    log10_p: float
    impossible_tokens: int
    small_sample_warning: bool
    shape: ShapeSummary

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "k": self.k,
            "chi2": self.chi2,
            "df": self.df,
            "p_value": self.p_value,
            "log10_p": None if math.isinf(self.log10_p) else self.log10_p,
            "impossible_tokens": self.impossible_tokens,
            "small_sample_warning": self.small_sample_warning,
            "shape": self.shape.to_json(),
        }


def validate_generation(
    streams: list[TextRecordStream],
    claimed: DecodingSpec,
    cfg: EngineConfig,
    bins: int | None = None,
) -> UniformityReport:
    """Test the claim that the text was generated with the given decoding spec.

    Samples are mapped with the claimed spec as the evaluation adaptation;
    under a true claim they are uniform, so the chi-square tail probability
    is the consistency p-value. Any token that is impossible under the
    claim forces p = 0 outright.
    """
    result = map_streams(streams, claimed, cfg)
    T = len(result.samples)
    if T == 0:
        raise EmptyInputError("no usable samples to validate")
    k = bins if bins is not None else terrell_scott_bins(T)
    f = frequencies([s.x for s in result.samples], k)
    stat = chi_square_stat(f, T)
    df = k - 1
    if result.impossible_tokens > 0:
        p, log10_p = 0.0, -math.inf
    else:
        p = chi_square_pvalue(stat, df)
        log10_p = chi_square_log10_pvalue(stat, df)
    return UniformityReport(
        T=T,
        k=k,
        chi2=stat,
        df=df,
        p_value=p,
        log10_p=log10_p,
        impossible_tokens=result.impossible_tokens,
        small_sample_warning=T < 10 * k,
        shape=shape_summary(f * k),
    )
