"""
Stats Engine Module
Bootstrap resampling, confidence-level uncertainty estimates, permutation
dependency tests and covariance analysis of deviation series
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.exceptions import (
    DegenerateCovariate,
    EmptySeries,
    OutOfRange,
    TooFewSamples,
    UnknownCovariate,
)

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 10000
DEFAULT_PERMUTATIONS = 2000
DEFAULT_CONFIDENCE = 0.95
DEFAULT_ALPHA = 0.05
MIN_DEPENDENCY_SAMPLES = 5

# Upper bound on index-matrix elements drawn per block
_BLOCK_ELEMENTS = 1 << 22

# Absorbs q*B landing a hair above an integer
_RANK_EPS = 1e-9


# --- RANDOM STREAMS ---

def derive_seed(master_seed, window_id, stream=0):
    """
    64-bit seed of one analysis stream

    The stream of (window_id, stream) is SeedSequence(master_seed,
    spawn_key=(window_id, stream)), so every window and every spec inside it
    draws from its own generator whatever the evaluation order or thread count.

    Args:
        master_seed: Non-negative run seed
        window_id: Window counter
        stream: Index of the analysis inside the window

    Returns:
        int: Seed for make_generator()
    """
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(window_id), int(stream)))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed):
    """PCG64 generator for a 64-bit seed"""
    return np.random.Generator(np.random.PCG64(int(seed)))


def nearest_rank(sorted_values, q):
    """
    Nearest-rank quantile of an ascending array

    Args:
        sorted_values: Ascending values
        q: Quantile level in [0, 1]

    Returns:
        float: The ceil(q * n)-th order statistic (1-based, clamped to [1, n])
    """
    n = len(sorted_values)
    rank = min(max(math.ceil(q * n - _RANK_EPS), 1), n)
    return float(sorted_values[rank - 1])


# --- RESULT TYPES ---

@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Sorted bootstrap distribution of the mean absolute deviation"""
    resample_means: np.ndarray
    point_estimate: float
    standard_error: float
    seed: int
    B: int
    signed_means: np.ndarray
    signed_point: float
    n: int
    spec_id: str = ""
    window_id: Optional[int] = None


@dataclass(frozen=True)
class UncertaintyEstimate:
    """Uncertainty at a confidence level, in the units of the deviations"""
    u: float
    confidence: float
    interval: Tuple[float, float]
    relative: Optional[float] = None
    window_id: Optional[int] = None
    spec_id: str = ""
    point_estimate: float = 0.0
    estimator: str = "bootstrap-mad"
    self_referenced: bool = False
    bias: Optional[float] = None
    bias_interval: Optional[Tuple[float, float]] = None
    n: int = 0
    provenance: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.u >= 0:
            raise OutOfRange(f"uncertainty must be non-negative (got {self.u})")


@dataclass(frozen=True)
class HypothesisResult:
    """One-sided permutation test of positive association"""
    statistic: float
    p_value: float
    alpha: float
    rejected: bool
    covariate: str
    n: int = 0
    n_perm: int = 0
    spec_id: str = ""


@dataclass(frozen=True)
class DependencyReport:
    """Covariance and correlation of |deviation| with a covariate"""
    covariance: float
    pearson_r: float
    n: int
    covariate: str = ""
    spec_id: str = ""


# --- BOOTSTRAP ---

def bootstrap(series, B=DEFAULT_RESAMPLES, seed=0):
    """
    Resample a deviation series with replacement

    Each resample has the size of the series and is reduced to the mean of the
    absolute deviations; the signed mean is resampled with the same indices.

    Args:
        series: DeviationSeries
        B: Resample count
        seed: 64-bit seed (see derive_seed)

    Returns:
        BootstrapResult: resample means sorted ascending
    """
    values = np.asarray(series.values, dtype=float)
    n = len(values)
    if n == 0:
        raise EmptySeries(f"spec '{series.spec_id}': nothing to bootstrap")
    if B < 1:
        raise OutOfRange(f"resample count must be >= 1 (got {B})")

    abs_values = np.abs(values)
    rng = make_generator(seed)
    abs_means = np.empty(B)
    signed_means = np.empty(B)
    block = max(1, _BLOCK_ELEMENTS // n)
    for start in range(0, B, block):
        stop = min(B, start + block)
        idx = rng.integers(0, n, size=(stop - start, n))
        abs_means[start:stop] = abs_values[idx].mean(axis=1)
        signed_means[start:stop] = values[idx].mean(axis=1)

    abs_means.sort()
    signed_means.sort()
    standard_error = float(np.std(abs_means, ddof=1)) if B > 1 else 0.0

    return BootstrapResult(
        resample_means=abs_means,
        point_estimate=float(abs_values.mean()),
        standard_error=standard_error,
        seed=int(seed),
        B=int(B),
        signed_means=signed_means,
        signed_point=float(values.mean()),
        n=n,
        spec_id=series.spec_id,
        window_id=series.window_id,
    )


def _check_confidence(confidence):
    if not 0.0 < confidence < 1.0:
        raise OutOfRange(f"confidence must lie in (0, 1) (got {confidence})")


def _central_interval(sorted_values, confidence):
    tail = (1.0 - confidence) / 2.0
    return nearest_rank(sorted_values, tail), nearest_rank(sorted_values, 1.0 - tail)


def uncertainty_at(result, confidence=DEFAULT_CONFIDENCE, range=None, self_referenced=False):
    """
    Upper ``confidence``-quantile of the bootstrapped mean absolute deviation

    Args:
        result: BootstrapResult
        confidence: Confidence level in (0, 1)
        range: Operating range for the relative value (optional)
        self_referenced: The series used window-mean references

    Returns:
        UncertaintyEstimate
    """
    _check_confidence(confidence)
    u = nearest_rank(result.resample_means, confidence)
    return UncertaintyEstimate(
        u=u,
        confidence=confidence,
        interval=_central_interval(result.resample_means, confidence),
        relative=u / range if range else None,
        window_id=result.window_id,
        spec_id=result.spec_id,
        point_estimate=result.point_estimate,
        estimator="bootstrap-mad",
        self_referenced=self_referenced,
        bias=result.signed_point,
        bias_interval=_central_interval(result.signed_means, confidence),
        n=result.n,
    )


def spread_estimate(series, confidence=DEFAULT_CONFIDENCE, range=None):
    """
    Spread of the raw data: nearest-rank ``confidence``-quantile of |deviation|

    Used by the baseline mode, where deviations are taken from the window mean
    and no conservation reference is involved.

    Args:
        series: DeviationSeries
        confidence: Confidence level in (0, 1)
        range: Operating range for the relative value (optional)

    Returns:
        UncertaintyEstimate
    """
    _check_confidence(confidence)
    if len(series) == 0:
        raise EmptySeries(f"spec '{series.spec_id}': no data spread to measure")
    spread = np.sort(series.abs_values)
    u = nearest_rank(spread, confidence)
    return UncertaintyEstimate(
        u=u,
        confidence=confidence,
        interval=_central_interval(spread, confidence),
        relative=u / range if range else None,
        window_id=series.window_id,
        spec_id=series.spec_id,
        point_estimate=float(spread.mean()),
        estimator="raw-spread",
        self_referenced=series.self_referenced,
        n=len(series),
    )


# --- DEPENDENCY ANALYSIS ---

def _paired_samples(series, covariate):
    if covariate not in series.covariates:
        raise UnknownCovariate(f"spec '{series.spec_id}' has no covariate '{covariate}'")
    xi = np.asarray(series.covariates[covariate], dtype=float)
    x = series.abs_values
    finite = np.isfinite(xi)
    x, xi = x[finite], xi[finite]
    if len(x) < MIN_DEPENDENCY_SAMPLES:
        raise TooFewSamples(f"dependency analysis needs {MIN_DEPENDENCY_SAMPLES} samples (got {len(x)})")
    if np.ptp(xi) == 0:
        raise DegenerateCovariate(f"covariate '{covariate}' is constant")
    if np.ptp(x) == 0:
        raise DegenerateCovariate("absolute deviations are constant")
    return x, xi


def _pearson_rows(x, rows):
    """Pearson r of ``x`` against every row of ``rows``"""
    xc = x - x.mean()
    rc = rows - rows.mean(axis=1, keepdims=True)
    numerator = rc @ xc
    denominator = np.sqrt(np.einsum("ij,ij->i", rc, rc)) * math.sqrt(float(xc @ xc))
    return numerator / denominator


def test_dependency(series, covariate, alpha=DEFAULT_ALPHA, seed=0, n_perm=DEFAULT_PERMUTATIONS):
    """
    One-sided permutation test: does |deviation| grow with the covariate?

    The statistic is Pearson r of (|dev|, covariate). The p-value is the
    fraction of ``n_perm`` seeded permutations of the covariate whose
    statistic is at least as large.

    Args:
        series: DeviationSeries carrying the covariate
        covariate: Covariate name (e.g. "velocity")
        alpha: Significance level
        seed: 64-bit seed (see derive_seed)
        n_perm: Permutation count

    Returns:
        HypothesisResult
    """
    x, xi = _paired_samples(series, covariate)
    statistic = float(_pearson_rows(x, xi[np.newaxis, :])[0])

    rng = make_generator(seed)
    exceed = 0
    block = max(1, _BLOCK_ELEMENTS // len(xi))
    for start in range(0, n_perm, block):
        count = min(n_perm, start + block) - start
        shuffled = rng.permuted(np.tile(xi, (count, 1)), axis=1)
        exceed += int(np.count_nonzero(_pearson_rows(x, shuffled) >= statistic))

    p_value = exceed / n_perm
    return HypothesisResult(
        statistic=statistic,
        p_value=p_value,
        alpha=alpha,
        rejected=p_value < alpha,
        covariate=covariate,
        n=len(x),
        n_perm=n_perm,
        spec_id=series.spec_id,
    )


def dependency_report(series, covariate):
    """
    Sample covariance and Pearson correlation of (|deviation|, covariate)

    Args:
        series: DeviationSeries carrying the covariate
        covariate: Covariate name

    Returns:
        DependencyReport
    """
    x, xi = _paired_samples(series, covariate)
    covariance = float(np.cov(x, xi, ddof=1)[0, 1])
    r = covariance / (float(np.std(x, ddof=1)) * float(np.std(xi, ddof=1)))
    return DependencyReport(
        covariance=covariance,
        pearson_r=float(min(1.0, max(-1.0, r))),
        n=len(x),
        covariate=covariate,
        spec_id=series.spec_id,
    )
