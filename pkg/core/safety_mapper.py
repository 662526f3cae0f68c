"""
Safety Mapper Module
Maps combined uncertainties onto a probability of dangerous failure per hour
and compares it with a safety limit
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

from scipy.stats import norm

from core.exceptions import ConfigurationError, OutOfRange

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-6
DEFAULT_LABEL = "ISO 13849 PFH_max"

# Name of the uncertainty -> PFH identification carried in every verdict
DIRECT_MAPPING = "direct-identification"


@dataclass(frozen=True)
class SafetyLimit:
    """Tolerated probability of a dangerous failure per hour"""
    lam: float = DEFAULT_LAMBDA
    label: str = DEFAULT_LABEL

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"safety limit must be > 0 (got {self.lam})")


@dataclass(frozen=True)
class RiskModel:
    """Severity constant and the biomechanical scaling of u_C"""
    l_bio: float
    severity_constant: float = 1.0

    def __post_init__(self):
        if not self.l_bio > 0:
            raise ConfigurationError(f"l_bio must be > 0 (got {self.l_bio})")
        if not self.severity_constant > 0:
            raise ConfigurationError(f"severity constant must be > 0 (got {self.severity_constant})")


@dataclass(frozen=True)
class SafetyVerdict:
    """Pass/fail of r = u_C * l_bio against the limit"""
    pfh: float
    r: float
    passed: bool
    limit: SafetyLimit
    margin_orders: Optional[float]
    risk: float
    mapping: str = DIRECT_MAPPING

    def to_dict(self):
        """Report representation (margin_orders omitted when undefined)"""
        data = {
            "pfh": self.pfh,
            "r": self.r,
            "pass": self.passed,
            "lambda": self.limit.lam,
            "label": self.limit.label,
            "risk": self.risk,
            "mapping": self.mapping,
        }
        if self.margin_orders is not None:
            data["margin_orders"] = self.margin_orders
        return data


def map_to_pfh(u_relative):
    """
    Read a relative uncertainty directly as a dangerous-failure probability per hour

    Args:
        u_relative: Fraction in [0, 1]

    Returns:
        float: Failures per hour (same numeric value)
    """
    if not 0.0 <= u_relative <= 1.0:
        raise OutOfRange(f"relative uncertainty must lie in [0, 1] (got {u_relative})")
    return float(u_relative)


def check_limit(u_C, model, limit):
    """
    Safety verdict for one combined uncertainty

    Args:
        u_C: Combined (relative) uncertainty
        model: RiskModel
        limit: SafetyLimit

    Returns:
        SafetyVerdict: pass iff u_C * l_bio <= lambda
    """
    r = float(u_C) * model.l_bio
    if 0.0 <= r <= 1.0:
        pfh = map_to_pfh(r)
    else:
        logger.warning(f"⚠️ r={r:.3g} is not a probability; reported unmapped")
        pfh = r
    margin = math.log10(limit.lam / pfh) if pfh > 0 else None
    return SafetyVerdict(
        pfh=pfh,
        r=r,
        passed=r <= limit.lam,
        limit=limit,
        margin_orders=margin,
        risk=model.severity_constant * pfh,
    )


def distance_constraint_probability(d_hr, u_d, d_min):
    """
    Probability that the true human-robot distance is at most ``d_min``

    Gaussian model centred at ``d_hr`` with standard deviation ``u_d``;
    ``u_d == 0`` reduces to an indicator.

    Returns:
        float: Probability in [0, 1]
    """
    if not u_d >= 0:
        raise OutOfRange(f"distance uncertainty must be non-negative (got {u_d})")
    if u_d == 0:
        return 1.0 if d_hr <= d_min else 0.0
    return float(norm.cdf((d_min - d_hr) / u_d))
