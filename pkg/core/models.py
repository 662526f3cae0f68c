"""
Models Module
Shared immutable data types: measurement frames, conservation specs,
deviation series and sensitivity terms
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import ConserveAIError, NonPositiveReference

# Body25 keypoint model
BODY25_JOINTS = 25

Vector3 = Tuple[float, float, float]


class FrameKind(Enum):
    """Payload kind carried by a measurement frame"""
    SKELETON = "skeleton"
    SCAN = "scan"
    GENERIC = "generic"


class ReferencePolicy(Enum):
    """Where the conserved reference value comes from"""
    GROUND_TRUTH = "ground_truth"
    WINDOW_MEAN = "window_mean"


class UncertaintyKind(Enum):
    """GUM evaluation type of an uncertainty contribution"""
    TYPE_A = "A"
    TYPE_B = "B"


# --- FRAMES ---

@dataclass(frozen=True)
class Joint:
    """One detected keypoint; confidence is optional"""
    position: Vector3
    confidence: Optional[float] = None

    @property
    def is_valid(self):
        if self.confidence is not None and self.confidence <= 0.0:
            return False
        return all(math.isfinite(c) for c in self.position)


@dataclass(frozen=True)
class SkeletonFrame:
    """Body25 skeleton: joint id (0..24) -> Joint"""
    joints: Mapping[int, Joint]

    def __post_init__(self):
        for joint_id in self.joints:
            if not 0 <= joint_id < BODY25_JOINTS:
                raise ConserveAIError(f"joint id {joint_id} outside Body25 range 0..24")
        object.__setattr__(self, "joints", MappingProxyType(dict(self.joints)))

    def valid_joint(self, joint_id):
        """Return the joint when present and valid, else None"""
        joint = self.joints.get(joint_id)
        if joint is None or not joint.is_valid:
            return None
        return joint


@dataclass(frozen=True, eq=False)
class ScanFrame:
    """
    One laser scan. Invalid beams are NaN in ``ranges``.

    Angles are in degrees; ranges in meters.
    """
    angle_start: float
    angle_step: float
    ranges: np.ndarray

    def __post_init__(self):
        ranges = np.array(self.ranges, dtype=float)
        if np.any(ranges[~np.isnan(ranges)] < 0):
            raise ConserveAIError("scan ranges must be non-negative")
        ranges.flags.writeable = False
        object.__setattr__(self, "ranges", ranges)

    @property
    def beam_count(self):
        return int(self.ranges.shape[0])

    @property
    def valid_mask(self):
        return ~np.isnan(self.ranges)


@dataclass(frozen=True)
class GenericFrame:
    """Named scalar channels"""
    channels: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "channels", MappingProxyType(dict(self.channels)))


Payload = Union[SkeletonFrame, ScanFrame, GenericFrame]


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """One timestamped sensor observation"""
    timestamp: float
    payload: Payload

    @property
    def kind(self):
        if isinstance(self.payload, SkeletonFrame):
            return FrameKind.SKELETON
        if isinstance(self.payload, ScanFrame):
            return FrameKind.SCAN
        return FrameKind.GENERIC


def scan_beam_count(fov_deg, angle_step_deg):
    """Beam count of a scanner covering ``fov_deg`` in steps of ``angle_step_deg``"""
    return int(math.floor(fov_deg / angle_step_deg + 1e-9)) + 1


# --- CONSERVATION SPECS ---

def pair_label(pair):
    return f"{pair[0]}-{pair[1]}"


@dataclass(frozen=True)
class JointPairDistance:
    """Constant distance between joint pairs"""
    pairs: Tuple[Tuple[int, int], ...]
    reference: Tuple[Optional[float], ...] = ()

    def __post_init__(self):
        pairs = tuple((int(j), int(k)) for j, k in self.pairs)
        if not pairs:
            raise ConserveAIError("joint_pair spec needs at least one pair")
        for j, k in pairs:
            if j == k:
                raise ConserveAIError(f"pair {j}-{k} must join two distinct joints")
            for joint_id in (j, k):
                if not 0 <= joint_id < BODY25_JOINTS:
                    raise ConserveAIError(f"joint id {joint_id} outside Body25 range 0..24")
        reference = tuple(self.reference) or (None,) * len(pairs)
        if len(reference) != len(pairs):
            raise ConserveAIError("one reference per pair is required")
        _check_positive(reference)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "reference", reference)

    def targets(self):
        return [pair_label(p) for p in self.pairs]


@dataclass(frozen=True)
class StaticScan:
    """Static scene: each beam keeps its range"""
    reference: Optional[Tuple[Optional[float], ...]] = None
    uniform_reference: Optional[float] = None

    def __post_init__(self):
        if self.reference is not None:
            object.__setattr__(self, "reference", tuple(self.reference))
            _check_positive(self.reference)
        if self.uniform_reference is not None:
            _check_positive((self.uniform_reference,))

    def reference_for(self, beam_count):
        """Per-beam reference list (None where absent)"""
        if self.reference is not None:
            return list(self.reference)
        return [self.uniform_reference] * beam_count


@dataclass(frozen=True)
class GenericConstant:
    """A scalar channel that should stay constant"""
    channel: str
    reference: Optional[float] = None


SpecKind = Union[JointPairDistance, StaticScan, GenericConstant]


@dataclass(frozen=True)
class ConservationSpec:
    """A declared invariant of the observed system"""
    id: str
    kind: SpecKind
    reference_policy: ReferencePolicy = ReferencePolicy.GROUND_TRUTH

    @property
    def frame_kind(self):
        if isinstance(self.kind, JointPairDistance):
            return FrameKind.SKELETON
        if isinstance(self.kind, StaticScan):
            return FrameKind.SCAN
        return FrameKind.GENERIC


def _check_positive(values):
    for value in values:
        if value is not None and not value > 0:
            raise NonPositiveReference(f"reference must be strictly positive (got {value})")


# --- DEVIATION SERIES ---

@dataclass(frozen=True, eq=False)
class DeviationSeries:
    """
    Signed deviations of one conservation spec over one window.

    ``targets`` labels each value (pair "1-8", beam "beam:12", channel name).
    Timestamps are strictly increasing per target and non-decreasing overall.
    """
    spec_id: str
    window_id: int
    values: np.ndarray
    timestamps: np.ndarray
    targets: Tuple[str, ...] = ()
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    self_referenced: bool = False
    mode: str = "conservation"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        timestamps = np.asarray(self.timestamps, dtype=float)
        targets = tuple(self.targets) or (self.spec_id,) * len(values)
        if len(timestamps) != len(values) or len(targets) != len(values):
            raise ConserveAIError("values, timestamps and targets must have equal length")
        covariates = {}
        for name, column in self.covariates.items():
            column = np.asarray(column, dtype=float)
            if len(column) != len(values):
                raise ConserveAIError(f"covariate '{name}' length differs from values")
            covariates[name] = column
        _check_ordering(timestamps, targets)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "covariates", MappingProxyType(covariates))

    def __len__(self):
        return int(self.values.shape[0])

    @property
    def abs_values(self):
        return np.abs(self.values)


def _check_ordering(timestamps, targets):
    if len(timestamps) > 1 and np.any(np.diff(timestamps) < 0):
        raise ConserveAIError("timestamps must be non-decreasing within a window")
    last: Dict[str, float] = {}
    for t, target in zip(timestamps, targets):
        previous = last.get(target)
        if previous is not None and not t > previous:
            raise ConserveAIError(f"timestamps must be strictly increasing for target {target}")
        last[target] = t


def concat_series(series_list: Sequence[DeviationSeries], spec_id="pooled"):
    """Pool several series into one, prefixing targets with their spec id"""
    if not series_list:
        return None
    values = np.concatenate([s.values for s in series_list])
    timestamps = np.concatenate([s.timestamps for s in series_list])
    targets = tuple(f"{s.spec_id}/{t}" for s in series_list for t in s.targets)
    order = np.argsort(timestamps, kind="stable")
    return DeviationSeries(
        spec_id=spec_id,
        window_id=series_list[0].window_id,
        values=values[order],
        timestamps=timestamps[order],
        targets=tuple(targets[i] for i in order),
        self_referenced=any(s.self_referenced for s in series_list),
        mode=series_list[0].mode,
    )


# --- PROPAGATION TERMS ---

@dataclass(frozen=True)
class SensitivityTerm:
    """One summand |da/dx| * u(x) of a combined uncertainty"""
    symbol: str
    sensitivity: float
    u: float
    kind: UncertaintyKind = UncertaintyKind.TYPE_B

    def __post_init__(self):
        for name in ("sensitivity", "u"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConserveAIError(f"{self.symbol}: {name} must be finite and non-negative")

    @property
    def contribution(self):
        return self.sensitivity * self.u
