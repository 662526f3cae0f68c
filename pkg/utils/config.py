"""
Configuration Module
Application settings, defaults and the pipeline configuration loader
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

from dotenv import dotenv_values

from core.exceptions import ConfigurationError
from core.models import (
    ConservationSpec,
    GenericConstant,
    JointPairDistance,
    ReferencePolicy,
    StaticScan,
)
from core.propagation import (
    ConstantAbsolute,
    ConstantRelative,
    LinearInRange,
    PropagationMode,
    TypeBRegistry,
    TypeBSpec,
)
from core.safety_mapper import RiskModel, SafetyLimit
from core.synth_oracle import GroundTruth
from utils.validators import PAIR_PATTERN, Validators

logger = logging.getLogger(__name__)


class Config:
    """
    Application configuration class
    """

    # Application Info
    APP_NAME = "ConserveAI"
    VERSION = "1.0.0"
    SCHEMA_VERSION = 1

    # Built-in values; file values and CLI flags override them
    DEFAULTS = {
        "WINDOW_SIZE": "10",
        "BOOTSTRAP_RESAMPLES": "10000",
        "SEED": "0",
        "CONFIDENCE": "0.95",
        "ALPHA": "0.05",
        "PERMUTATIONS": "2000",
        "COVARIATES": "velocity",
        "ESTIMATION_MODE": "conservation",
        "PROPAGATION_MODE": "as-printed",
        "REFERENCE_POLICY": "ground_truth",
        "SEVERITY": "1.0",
        "SAFETY_LAMBDA": "1e-6",
        "SAFETY_LABEL": "ISO 13849 PFH_max",
        "MAX_RANGE": "49.0",
        "SCAN_FOV": "275.0",
        "WORKERS": "1",
        "HISTOGRAM_BINS": "50",
        "JOINT_SHARE": "0.5",
    }

    ESTIMATION_MODES = ("conservation", "baseline")
    PROPAGATION_MODES = tuple(m.value for m in PropagationMode)
    REFERENCE_POLICIES = tuple(p.value for p in ReferencePolicy)
    SPEC_KINDS = ("joint_pair", "static_scan", "generic")
    TYPE_B_MODELS = ("absolute", "relative", "linear")
    COVARIATES = ("velocity",)


# --- VALUE PARSING ---

def _split(text):
    return [part.strip() for part in (text or "").split(",") if part.strip()]


def _float(values, key, default=None):
    raw = values.get(key)
    if raw is None or str(raw).strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: '{raw}' is not a number")


def _int(values, key):
    raw = values.get(key)
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: '{raw}' is not an integer")


def _floats(text, key):
    try:
        return [float(part) for part in _split(text)]
    except ValueError:
        raise ConfigurationError(f"{key}: '{text}' is not a comma-separated number list")


def _pairs(text, key):
    pairs = []
    for part in _split(text):
        is_valid, message = Validators.validate_pair(part)
        if not is_valid:
            raise ConfigurationError(f"{key}: {message}")
        match = PAIR_PATTERN.match(part)
        pairs.append((int(match.group(1)), int(match.group(2))))
    if not pairs:
        raise ConfigurationError(f"{key}: at least one joint pair is required")
    return tuple(pairs)


def load_truth(path):
    """Read a GroundTruth sidecar written by the synth verb"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return GroundTruth.from_dict(json.load(f))
    except (OSError, ValueError, KeyError) as e:
        raise ConfigurationError(f"cannot read ground truth '{path}': {e}")


def _parse_spec(values, spec_id, default_policy, base_dir):
    prefix = f"SPEC_{spec_id.upper()}_"
    kind = values.get(prefix + "KIND", "")
    policy_text = values.get(prefix + "POLICY") or default_policy
    try:
        policy = ReferencePolicy(policy_text)
    except ValueError:
        raise ConfigurationError(f"{prefix}POLICY: unknown reference policy '{policy_text}'")

    reference_text = (values.get(prefix + "REFERENCE") or "").strip()
    truth = None
    if reference_text.startswith("file:"):
        truth_path = Path(reference_text[len("file:"):])
        if not truth_path.is_absolute():
            truth_path = base_dir / truth_path
        truth = load_truth(truth_path)

    if kind == "joint_pair":
        pairs = _pairs(values.get(prefix + "PAIRS"), prefix + "PAIRS")
        if truth is not None:
            reference = tuple(truth.pair_reference(p) for p in pairs)
        elif reference_text:
            reference = tuple(_floats(reference_text, prefix + "REFERENCE"))
            if len(reference) == 1:
                reference = reference * len(pairs)
        else:
            reference = ()
        return ConservationSpec(spec_id, JointPairDistance(pairs, reference), policy)

    if kind == "static_scan":
        if truth is not None:
            scan_kind = StaticScan(reference=tuple(truth.references["scan"]))
        elif reference_text:
            reference = _floats(reference_text, prefix + "REFERENCE")
            if len(reference) == 1:
                scan_kind = StaticScan(uniform_reference=reference[0])
            else:
                scan_kind = StaticScan(reference=tuple(reference))
        else:
            scan_kind = StaticScan()
        return ConservationSpec(spec_id, scan_kind, policy)

    if kind == "generic":
        channel = values.get(prefix + "CHANNEL")
        if not channel:
            raise ConfigurationError(f"{prefix}CHANNEL is required for generic specs")
        return ConservationSpec(spec_id, GenericConstant(channel, _float(values, prefix + "REFERENCE")), policy)

    raise ConfigurationError(f"{prefix}KIND must be one of {', '.join(Config.SPEC_KINDS)} (got '{kind}')")


def _parse_type_b(values, source_id, operating_range):
    prefix = f"TYPE_B_{source_id.upper()}_"
    kind = values.get(prefix + "MODEL", "")
    if kind == "absolute":
        model = ConstantAbsolute(_float(values, prefix + "U", 0.0))
    elif kind == "relative":
        model = ConstantRelative(_float(values, prefix + "FRACTION", 0.0))
    elif kind == "linear":
        model = LinearInRange(_float(values, prefix + "SLOPE", 0.0), _float(values, prefix + "INTERCEPT", 0.0))
    else:
        raise ConfigurationError(f"{prefix}MODEL must be one of {', '.join(Config.TYPE_B_MODELS)} (got '{kind}')")

    valid_range = None
    if values.get(prefix + "RANGE"):
        bounds = _floats(values[prefix + "RANGE"], prefix + "RANGE")
        if len(bounds) != 2:
            raise ConfigurationError(f"{prefix}RANGE must be 'lo,hi'")
        valid_range = (bounds[0], bounds[1])

    return TypeBSpec(
        source_id=source_id,
        model=model,
        valid_range=valid_range,
        sensitivity=_float(values, prefix + "SENSITIVITY", 1.0),
        operating_point=_float(values, prefix + "AT", operating_range),
    )


# --- PIPELINE CONFIGURATION ---

@dataclass(frozen=True)
class PipelineConfig:
    """
    Immutable configuration of one pipeline run
    """
    specs: Tuple[ConservationSpec, ...] = ()
    window_size: int = 10
    resamples: int = 10000
    seed: int = 0
    confidence: float = 0.95
    alpha: float = 0.05
    permutations: int = 2000
    covariates: Tuple[str, ...] = ("velocity",)
    estimation_mode: str = "conservation"
    propagation_mode: PropagationMode = PropagationMode.AS_PRINTED
    operating_range: Optional[float] = None
    risk_model: Optional[RiskModel] = None
    safety_limit: SafetyLimit = field(default_factory=SafetyLimit)
    type_b: TypeBRegistry = field(default_factory=TypeBRegistry)
    max_range: float = 49.0
    scan_fov: float = 275.0
    workers: int = 1
    histogram_bins: int = 50
    joint_share: float = 0.5
    detection_source: Optional[str] = None
    robot_position: Optional[Tuple[float, float, float]] = None
    robot_source: Optional[str] = None
    hr_joint: Optional[int] = None
    d_min: Optional[float] = None
    subtract_sources: Tuple[str, ...] = ()

    @classmethod
    def from_file(cls, path=None, overrides=None):
        """
        Load configuration from a KEY=value file

        Args:
            path: Config file path (optional; defaults only when None)
            overrides: {KEY: value} from command-line flags

        Returns:
            PipelineConfig
        """
        values = dict(Config.DEFAULTS)
        base_dir = Path.cwd()
        if path is not None:
            is_valid, message = Validators.validate_file_path(path)
            if not is_valid:
                raise ConfigurationError(f"config file: {message}")
            path = Path(path)
            values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
            base_dir = path.parent
        values.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(values, base_dir)

    @classmethod
    def from_mapping(cls, values, base_dir=None):
        """Build a configuration from string values (defaults already merged)"""
        values = {**Config.DEFAULTS, **values}
        base_dir = Path(base_dir or Path.cwd())

        policy = values["REFERENCE_POLICY"]
        operating_range = _float(values, "OPERATING_RANGE")

        try:
            mode = PropagationMode(values["PROPAGATION_MODE"])
        except ValueError:
            raise ConfigurationError(f"PROPAGATION_MODE: unknown mode '{values['PROPAGATION_MODE']}'")

        l_bio = _float(values, "L_BIO")
        risk_model = RiskModel(l_bio, _float(values, "SEVERITY", 1.0)) if l_bio is not None else None

        robot_position = None
        if values.get("ROBOT_POSITION"):
            is_valid, message = Validators.validate_vector(values["ROBOT_POSITION"])
            if not is_valid:
                raise ConfigurationError(f"ROBOT_POSITION: {message}")
            robot_position = tuple(_floats(values["ROBOT_POSITION"], "ROBOT_POSITION"))

        return cls(
            specs=tuple(_parse_spec(values, s, policy, base_dir) for s in _split(values.get("SPECS"))),
            window_size=_int(values, "WINDOW_SIZE"),
            resamples=_int(values, "BOOTSTRAP_RESAMPLES"),
            seed=_int(values, "SEED"),
            confidence=_float(values, "CONFIDENCE"),
            alpha=_float(values, "ALPHA"),
            permutations=_int(values, "PERMUTATIONS"),
            covariates=tuple(_split(values.get("COVARIATES"))),
            estimation_mode=values["ESTIMATION_MODE"],
            propagation_mode=mode,
            operating_range=operating_range,
            risk_model=risk_model,
            safety_limit=SafetyLimit(_float(values, "SAFETY_LAMBDA"), values["SAFETY_LABEL"]),
            type_b=TypeBRegistry(_parse_type_b(values, s, operating_range) for s in _split(values.get("TYPE_B"))),
            max_range=_float(values, "MAX_RANGE"),
            scan_fov=_float(values, "SCAN_FOV"),
            workers=_int(values, "WORKERS"),
            histogram_bins=_int(values, "HISTOGRAM_BINS"),
            joint_share=_float(values, "JOINT_SHARE"),
            detection_source=values.get("DETECTION_SOURCE") or None,
            robot_position=robot_position,
            robot_source=values.get("ROBOT_SOURCE") or None,
            hr_joint=_int(values, "HR_JOINT") if values.get("HR_JOINT") else None,
            d_min=_float(values, "D_MIN"),
            subtract_sources=tuple(_split(values.get("SUBTRACT_SOURCES"))),
        )

    def with_overrides(self, **changes):
        """Copy with some fields replaced"""
        return replace(self, **changes)

    def validate_config(self):
        """
        Validate configuration settings

        Returns:
            tuple: (is_valid, errors_list)
        """
        errors = []
        checks = [
            Validators.validate_window_size(self.window_size),
            Validators.validate_count(self.resamples, "BOOTSTRAP_RESAMPLES"),
            Validators.validate_count(self.permutations, "PERMUTATIONS"),
            Validators.validate_count(self.workers, "WORKERS"),
            Validators.validate_count(self.histogram_bins, "HISTOGRAM_BINS"),
            Validators.validate_seed(self.seed),
            Validators.validate_open_fraction(self.confidence, "CONFIDENCE"),
            Validators.validate_open_fraction(self.alpha, "ALPHA"),
            Validators.validate_positive(self.max_range, "MAX_RANGE"),
            Validators.validate_positive(self.scan_fov, "SCAN_FOV"),
            Validators.validate_choice(self.estimation_mode, Config.ESTIMATION_MODES, "ESTIMATION_MODE"),
        ]
        if self.operating_range is not None:
            checks.append(Validators.validate_positive(self.operating_range, "OPERATING_RANGE"))
        if self.d_min is not None:
            checks.append(Validators.validate_positive(self.d_min, "D_MIN"))
        if not 0 < self.joint_share <= 1:
            checks.append((False, f"JOINT_SHARE must lie in (0, 1] (got {self.joint_share})"))
        for covariate in self.covariates:
            checks.append(Validators.validate_choice(covariate, Config.COVARIATES, "COVARIATES"))
        errors.extend(message for is_valid, message in checks if not is_valid)

        if not self.specs:
            errors.append("SPECS names no conservation spec")
        ids = [spec.id for spec in self.specs]
        if len(set(ids)) != len(ids):
            errors.append("SPECS contains duplicate ids")
        for spec in self.specs:
            if spec.reference_policy is ReferencePolicy.GROUND_TRUTH and not _has_reference(spec):
                errors.append(f"spec '{spec.id}': ground_truth policy needs SPEC_{spec.id.upper()}_REFERENCE")

        for name in [self.detection_source, self.robot_source, *self.subtract_sources]:
            if name is not None and name not in self.type_b:
                errors.append(f"Type B source '{name}' is not listed in TYPE_B")
        if self.detection_source in self.type_b:
            detection = self.type_b.get(self.detection_source)
            if not isinstance(detection.model, ConstantRelative) and detection.operating_point is None:
                errors.append(
                    f"DETECTION_SOURCE '{self.detection_source}' needs TYPE_B_{self.detection_source.upper()}_AT or OPERATING_RANGE"
                )

        if (self.robot_position is None) != (self.hr_joint is None):
            errors.append("ROBOT_POSITION and HR_JOINT must be set together")
        if self.hr_joint is not None and not 0 <= self.hr_joint < 25:
            errors.append(f"HR_JOINT must be a Body25 joint id (got {self.hr_joint})")
        if self.d_min is not None and self.robot_position is None:
            errors.append("D_MIN needs ROBOT_POSITION and HR_JOINT")

        if self.risk_model is None:
            logger.warning("⚠️ L_BIO not set: reports will carry no safety verdict")

        is_valid = len(errors) == 0
        return is_valid, errors

    def get_config_summary(self):
        """
        Get configuration summary as dictionary

        Returns:
            dict: Configuration summary
        """
        return {
            "app_name": Config.APP_NAME,
            "version": Config.VERSION,
            "specs": [spec.id for spec in self.specs],
            "window_size": self.window_size,
            "resamples": self.resamples,
            "seed": self.seed,
            "confidence": self.confidence,
            "alpha": self.alpha,
            "permutations": self.permutations,
            "covariates": list(self.covariates),
            "estimation_mode": self.estimation_mode,
            "propagation_mode": self.propagation_mode.value,
            "operating_range": self.operating_range,
            "l_bio": self.risk_model.l_bio if self.risk_model else None,
            "safety_lambda": self.safety_limit.lam,
            "type_b_sources": [spec.source_id for spec in self.type_b],
            "workers": self.workers,
        }

    def print_config(self):
        """Log configuration summary"""
        logger.info("=" * 60)
        logger.info(f"📐 {Config.APP_NAME} v{Config.VERSION}")
        logger.info("=" * 60)
        for key, value in self.get_config_summary().items():
            logger.info(f"{key}: {value}")
        logger.info("=" * 60)


def _has_reference(spec):
    kind = spec.kind
    if isinstance(kind, JointPairDistance):
        return all(r is not None for r in kind.reference)
    if isinstance(kind, StaticScan):
        return kind.reference is not None or kind.uniform_reference is not None
    return kind.reference is not None
