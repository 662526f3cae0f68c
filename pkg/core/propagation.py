"""
Propagation Module
Type B uncertainty models and the combination of Type A and Type B
contributions into combined standard uncertainties
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Optional, Tuple, Union

import numpy as np

from core.exceptions import (
    CoincidentPositions,
    ConfigurationError,
    EmptyTerms,
    MixedConfidence,
    OutOfRange,
)
from core.models import SensitivityTerm, UncertaintyKind
from core.stats_engine import UncertaintyEstimate

logger = logging.getLogger(__name__)

# Below this the signed distance prefactor is treated as vanished
PREFACTOR_EPS = 1e-12

DEFAULT_JOINT_SHARE = 0.5


class PropagationMode(Enum):
    """How sensitivity terms are summed under the square root"""
    AS_PRINTED = "as-printed"
    GUM_SQUARED = "gum-squared"


# --- TYPE B MODELS ---

@dataclass(frozen=True)
class ConstantAbsolute:
    """Fixed uncertainty in measurement units"""
    u: float


@dataclass(frozen=True)
class ConstantRelative:
    """Uncertainty proportional to the operating point"""
    fraction: float


@dataclass(frozen=True)
class LinearInRange:
    """u = slope * x + intercept"""
    slope: float
    intercept: float


TypeBModel = Union[ConstantAbsolute, ConstantRelative, LinearInRange]


@dataclass(frozen=True)
class TypeBSpec:
    """A manufacturer or a-priori uncertainty source"""
    source_id: str
    model: TypeBModel
    valid_range: Optional[Tuple[float, float]] = None
    sensitivity: float = 1.0
    operating_point: Optional[float] = None

    def __post_init__(self):
        if self.valid_range is not None:
            lo, hi = self.valid_range
            if lo > hi:
                raise ConfigurationError(f"{self.source_id}: valid range {lo}..{hi} is reversed")
        if isinstance(self.model, ConstantAbsolute) and self.model.u < 0:
            raise ConfigurationError(f"{self.source_id}: absolute uncertainty must be >= 0")
        if isinstance(self.model, ConstantRelative) and self.model.fraction < 0:
            raise ConfigurationError(f"{self.source_id}: relative fraction must be >= 0")
        if not self.sensitivity >= 0:
            raise ConfigurationError(f"{self.source_id}: sensitivity must be >= 0")


def type_b_eval(spec, operating_point):
    """
    Evaluate a Type B model at an operating point

    Args:
        spec: TypeBSpec
        operating_point: Range or magnitude the model is evaluated at

    Returns:
        float: Standard uncertainty in measurement units
    """
    if spec.valid_range is not None:
        lo, hi = spec.valid_range
        if not lo <= operating_point <= hi:
            raise OutOfRange(f"{spec.source_id}: {operating_point} outside valid range [{lo}, {hi}]")

    model = spec.model
    if isinstance(model, ConstantAbsolute):
        return float(model.u)
    if isinstance(model, ConstantRelative):
        return float(model.fraction * operating_point)

    u = model.slope * operating_point + model.intercept
    if u < 0:
        logger.warning(f"⚠️ {spec.source_id}: linear model gives {u:.3g} at {operating_point}, clamped to 0")
        return 0.0
    return float(u)


def type_b_term(spec, operating_point=None):
    """SensitivityTerm of a Type B source at its (or the given) operating point"""
    point = spec.operating_point if operating_point is None else operating_point
    if point is None:
        if not isinstance(spec.model, ConstantAbsolute):
            raise ConfigurationError(f"{spec.source_id}: operating point required for this model")
        point = 0.0
    return SensitivityTerm(spec.source_id, spec.sensitivity, type_b_eval(spec, point), UncertaintyKind.TYPE_B)


def type_b_fraction(spec, operating_point=None):
    """
    Relative uncertainty of a Type B source

    A ConstantRelative model returns its fraction directly; other models are
    evaluated at the operating point and divided by it.
    """
    if isinstance(spec.model, ConstantRelative):
        return float(spec.model.fraction)
    point = spec.operating_point if operating_point is None else operating_point
    if point is None or not point > 0:
        raise ConfigurationError(f"{spec.source_id}: positive operating point required for a relative value")
    return type_b_eval(spec, point) / point


class TypeBRegistry:
    """
    Read-only lookup of Type B sources by id
    """

    def __init__(self, specs=()):
        """
        Initialize TypeBRegistry

        Args:
            specs: Iterable of TypeBSpec with unique source ids
        """
        entries = {}
        for spec in specs:
            if spec.source_id in entries:
                raise ConfigurationError(f"duplicate Type B source '{spec.source_id}'")
            entries[spec.source_id] = spec
        self._entries = MappingProxyType(entries)

    def __contains__(self, source_id):
        return source_id in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def get(self, source_id):
        """Return the spec for ``source_id``"""
        if source_id not in self._entries:
            raise ConfigurationError(f"unknown Type B source '{source_id}'")
        return self._entries[source_id]

    def terms(self, source_ids, operating_point=None):
        """SensitivityTerms for the named sources"""
        return [type_b_term(self.get(source_id), operating_point) for source_id in source_ids]


# --- COMBINATION ---

def combine(terms, mode=PropagationMode.AS_PRINTED):
    """
    Combined standard uncertainty of independent contributions

    as-printed:  sqrt(sum(s * u))
    gum-squared: sqrt(sum((s * u) ** 2))

    Args:
        terms: Non-empty list of SensitivityTerm
        mode: PropagationMode

    Returns:
        float: u_C
    """
    terms = list(terms)
    if not terms:
        raise EmptyTerms("combine() needs at least one sensitivity term")
    contributions = np.array([term.contribution for term in terms], dtype=float)
    if PropagationMode(mode) is PropagationMode.GUM_SQUARED:
        return float(math.sqrt(float(np.sum(contributions ** 2))))
    return float(math.sqrt(float(np.sum(contributions))))


def split_detection(u_op, s_op, u_ls, s_ls):
    """
    Composite detection term: pose-estimator part times laser-scanner part

    Args:
        u_op: Relative uncertainty of the pose estimator
        s_op: Its sensitivity
        u_ls: Relative uncertainty of the laser scanner
        s_ls: Its sensitivity

    Returns:
        SensitivityTerm: symbol "det", contribution (s_op*u_op)*(s_ls*u_ls)
    """
    for name, value in (("u_op", u_op), ("s_op", s_op), ("u_ls", u_ls), ("s_ls", s_ls)):
        if not value >= 0:
            raise OutOfRange(f"{name} must be non-negative (got {value})")
    return SensitivityTerm("det", 1.0, (s_op * u_op) * (s_ls * u_ls), UncertaintyKind.TYPE_A)


@dataclass(frozen=True)
class PositionUncertainty:
    """Combined uncertainty of the human position with its components"""
    u: float
    components: Tuple[SensitivityTerm, ...]
    confidence: float
    mode: PropagationMode = PropagationMode.AS_PRINTED
    u_cross_check: Optional[float] = None


def _other_mode(mode):
    if PropagationMode(mode) is PropagationMode.AS_PRINTED:
        return PropagationMode.GUM_SQUARED
    return PropagationMode.AS_PRINTED


def human_position_uncertainty(det_term, env_terms=(), confidence=0.95, mode=PropagationMode.AS_PRINTED):
    """
    Combine the detection term with environmental Type B terms

    Args:
        det_term: SensitivityTerm from split_detection (or a direct detection term)
        env_terms: Environmental SensitivityTerms
        confidence: Confidence level carried from the detection estimate
        mode: PropagationMode of the primary value

    Returns:
        PositionUncertainty: primary value plus the other mode as cross-check
    """
    if det_term is None:
        raise EmptyTerms("human position uncertainty needs a detection term")
    components = (det_term,) + tuple(env_terms)
    mode = PropagationMode(mode)
    return PositionUncertainty(
        u=combine(components, mode),
        components=components,
        confidence=confidence,
        mode=mode,
        u_cross_check=combine(components, _other_mode(mode)),
    )


# --- HUMAN-ROBOT DISTANCE ---

def hr_distance(r_H, r_R):
    """Euclidean distance between human and robot positions"""
    return float(np.linalg.norm(np.subtract(r_H, r_R, dtype=float)))


@dataclass(frozen=True)
class DistanceUncertainty:
    """Distance uncertainty with the signed and absolute prefactor variants"""
    d_hr: float
    prefactor: float
    u: float
    u_abs: float


def hr_distance_breakdown(r_H, r_R, u_rH, u_rR):
    """
    Distance uncertainty from the summed direction cosines

    u = [sum_p (r_H,p - r_R,p) / d_HR] * (u_rH + u_rR), the prefactor keeps its
    sign; ``u_abs`` uses |prefactor|.

    Returns:
        DistanceUncertainty
    """
    delta = np.subtract(r_H, r_R, dtype=float)
    d_hr = float(np.linalg.norm(delta))
    if d_hr == 0.0:
        raise CoincidentPositions("human and robot positions coincide")
    prefactor = float(np.sum(delta)) / d_hr
    if abs(prefactor) < PREFACTOR_EPS:
        logger.warning(f"⚠️ Distance prefactor vanishes at d_HR={d_hr:.4g} m; uncertainty reads 0")
    total = u_rH + u_rR
    return DistanceUncertainty(d_hr=d_hr, prefactor=prefactor, u=prefactor * total, u_abs=abs(prefactor) * total)


def hr_distance_uncertainty(r_H, r_R, u_rH, u_rR):
    """Signed human-robot distance uncertainty (see hr_distance_breakdown)"""
    return hr_distance_breakdown(r_H, r_R, u_rH, u_rR).u


def hr_distance_combined(u_rH, u_rR, mode=PropagationMode.AS_PRINTED):
    """Distance uncertainty as combine() over the two position terms with unit sensitivities"""
    terms = [
        SensitivityTerm("r_H", 1.0, u_rH, UncertaintyKind.TYPE_A),
        SensitivityTerm("r_R", 1.0, u_rR, UncertaintyKind.TYPE_B),
    ]
    return combine(terms, mode)


# --- ESTIMATE ARITHMETIC ---

def _label(estimate):
    if estimate.provenance:
        return estimate.provenance
    window = "" if estimate.window_id is None else f"@{estimate.window_id}"
    return (f"{estimate.spec_id or estimate.estimator}{window}",)


def _mean_pair(pairs):
    return float(np.mean([p[0] for p in pairs])), float(np.mean([p[1] for p in pairs]))


def average_estimates(estimates):
    """
    Arithmetic mean of several estimates at one confidence level

    Args:
        estimates: Non-empty list of UncertaintyEstimate

    Returns:
        UncertaintyEstimate: estimator "average", provenance of every input
    """
    estimates = list(estimates)
    if not estimates:
        raise EmptyTerms("nothing to average")
    if len(estimates) == 1:
        return estimates[0]
    confidence = estimates[0].confidence
    if any(e.confidence != confidence for e in estimates):
        raise MixedConfidence(f"confidence levels differ: {sorted({e.confidence for e in estimates})}")

    relatives = [e.relative for e in estimates]
    biases = [e.bias_interval for e in estimates]
    provenance = tuple(label for e in estimates for label in _label(e))
    return UncertaintyEstimate(
        u=float(np.mean([e.u for e in estimates])),
        confidence=confidence,
        interval=_mean_pair([e.interval for e in estimates]),
        relative=None if None in relatives else float(np.mean(relatives)),
        spec_id=estimates[0].spec_id if len({e.spec_id for e in estimates}) == 1 else "average",
        point_estimate=float(np.mean([e.point_estimate for e in estimates])),
        estimator="average",
        self_referenced=any(e.self_referenced for e in estimates),
        bias=None if any(e.bias is None for e in estimates) else float(np.mean([e.bias for e in estimates])),
        bias_interval=None if None in biases else _mean_pair(biases),
        n=sum(e.n for e in estimates),
        provenance=provenance,
    )


class RunningAverage:
    """
    Streaming form of average_estimates: keeps sums, not the estimates
    """

    def __init__(self):
        """Initialize RunningAverage"""
        self.count = 0
        self._first = None
        self._last_label = ""
        self._same_spec = True
        self._self_referenced = False
        self._u = 0.0
        self._interval = [0.0, 0.0]
        self._point = 0.0
        self._n = 0
        self._relative = 0.0
        self._has_relative = True
        self._bias = 0.0
        self._bias_interval = [0.0, 0.0]
        self._has_bias = True

    def add(self, estimate):
        """Accumulate one estimate; confidence must match the first"""
        if self._first is None:
            self._first = estimate
        elif estimate.confidence != self._first.confidence:
            raise MixedConfidence(
                f"confidence levels differ: {self._first.confidence} and {estimate.confidence}"
            )
        else:
            self._same_spec = self._same_spec and estimate.spec_id == self._first.spec_id
        self.count += 1
        self._last_label = "+".join(_label(estimate))
        self._self_referenced = self._self_referenced or estimate.self_referenced
        self._u += estimate.u
        self._interval[0] += estimate.interval[0]
        self._interval[1] += estimate.interval[1]
        self._point += estimate.point_estimate
        self._n += estimate.n
        if estimate.relative is None:
            self._has_relative = False
        else:
            self._relative += estimate.relative
        if estimate.bias is None or estimate.bias_interval is None:
            self._has_bias = False
        else:
            self._bias += estimate.bias
            self._bias_interval[0] += estimate.bias_interval[0]
            self._bias_interval[1] += estimate.bias_interval[1]

    def result(self):
        """
        Average of everything added so far

        Returns:
            UncertaintyEstimate: estimator "average", provenance "first..last"
        """
        if self.count == 0:
            raise EmptyTerms("nothing to average")
        if self.count == 1:
            return self._first
        k = self.count
        first = self._first
        return UncertaintyEstimate(
            u=self._u / k,
            confidence=first.confidence,
            interval=(self._interval[0] / k, self._interval[1] / k),
            relative=self._relative / k if self._has_relative else None,
            spec_id=first.spec_id if self._same_spec else "average",
            point_estimate=self._point / k,
            estimator="average",
            self_referenced=self._self_referenced,
            bias=self._bias / k if self._has_bias else None,
            bias_interval=(self._bias_interval[0] / k, self._bias_interval[1] / k) if self._has_bias else None,
            n=self._n,
            provenance=(f"{'+'.join(_label(first))}..{self._last_label}",),
        )


def isolate_type_a(u_total, type_b_terms, mode=PropagationMode.AS_PRINTED):
    """
    Remove known Type B contributions from a total combined uncertainty

    Inverse of combine(): returns u_A such that combine([(1, u_A)] + terms)
    reproduces ``u_total``. Negative remainders clamp to 0 with a warning.

    Args:
        u_total: Combined uncertainty containing the Type B terms
        type_b_terms: SensitivityTerms to remove
        mode: PropagationMode used for the combination

    Returns:
        float: Remaining Type A uncertainty
    """
    if not u_total >= 0:
        raise OutOfRange(f"total uncertainty must be non-negative (got {u_total})")
    contributions = [term.contribution for term in type_b_terms]
    if PropagationMode(mode) is PropagationMode.GUM_SQUARED:
        remainder = u_total ** 2 - sum(c ** 2 for c in contributions)
        if remainder < 0:
            logger.warning("⚠️ Type B terms exceed the total uncertainty; Type A part clamped to 0")
            return 0.0
        return float(math.sqrt(remainder))
    remainder = u_total ** 2 - sum(contributions)
    if remainder < 0:
        logger.warning("⚠️ Type B terms exceed the total uncertainty; Type A part clamped to 0")
        return 0.0
    return float(remainder)


def relative_discrepancy(u_exp, u_ref):
    """|u_exp - u_ref| / u_ref, e.g. an experimental value against a data sheet"""
    if not u_ref > 0:
        raise OutOfRange(f"reference uncertainty must be > 0 (got {u_ref})")
    return abs(u_exp - u_ref) / u_ref


def attribute_to_joint(u_pair, share=DEFAULT_JOINT_SHARE):
    """
    Per-joint share of a joint-pair uncertainty

    Equal performance of both joints gives share 0.5, i.e. u_pair / sqrt(2).
    """
    if not 0 < share <= 1:
        raise OutOfRange(f"joint share must lie in (0, 1] (got {share})")
    if not u_pair >= 0:
        raise OutOfRange(f"pair uncertainty must be non-negative (got {u_pair})")
    return u_pair * math.sqrt(share)
