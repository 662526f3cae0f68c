"""
Conservation Engine Module
Evaluates conservation equations over measurement windows and produces
deviation series (plus the no-conservation baseline)
"""

import logging
from dataclasses import dataclass
from typing import List, Mapping

import numpy as np

from core.exceptions import (
    ConfigurationError,
    DegenerateTimestamps,
    InsufficientSamples,
    LengthMismatch,
    MissingChannel,
    MissingJoint,
    NonPositiveReference,
)
from core.models import (
    DeviationSeries,
    JointPairDistance,
    ReferencePolicy,
    StaticScan,
    pair_label,
)

logger = logging.getLogger(__name__)

# Beyond S3000 physics; longer returns are dropouts
DEFAULT_MAX_RANGE = 49.0

VELOCITY = "velocity"


@dataclass(frozen=True)
class ScanDeviations:
    """Deviations of the valid beams, with their beam indices"""
    values: np.ndarray
    beams: np.ndarray


@dataclass(frozen=True)
class ReferenceEstimate:
    """Per-target references taken from the window itself"""
    values: Mapping[str, float]
    self_referenced: bool = True


def mark_invalid_beams(ranges, max_range=DEFAULT_MAX_RANGE):
    """
    Replace dropouts and max-range returns with NaN

    Args:
        ranges: Iterable of ranges in meters, None for missing beams
        max_range: Returns at or beyond this range are treated as invalid

    Returns:
        np.ndarray: Ranges with invalid beams set to NaN
    """
    values = np.array([np.nan if r is None else r for r in ranges], dtype=float)
    with np.errstate(invalid="ignore"):
        values[values >= max_range] = np.nan
    return values


# --- SINGLE-FRAME EVALUATION ---

def measure_joint_pair(frame, pair):
    """Euclidean distance between the two joints of ``pair``"""
    j, k = pair
    joint_j = frame.valid_joint(j)
    joint_k = frame.valid_joint(k)
    if joint_j is None or joint_k is None:
        missing = j if joint_j is None else k
        raise MissingJoint(f"joint {missing} absent or invalid")
    delta = np.subtract(joint_j.position, joint_k.position, dtype=float)
    return float(np.linalg.norm(delta))


def evaluate_joint_pair(frame, pair, reference):
    """
    Signed deviation of a joint-pair distance from its reference

    Args:
        frame: SkeletonFrame
        pair: (joint_id, joint_id)
        reference: Conserved distance in meters

    Returns:
        float: |p_j - p_k| - reference
    """
    if not reference > 0:
        raise NonPositiveReference(f"pair {pair_label(pair)}: reference must be > 0 (got {reference})")
    return measure_joint_pair(frame, pair) - reference


def measure_static_scan(frame):
    """Indices and ranges of the valid beams of a ScanFrame"""
    beams = np.flatnonzero(frame.valid_mask)
    return beams, frame.ranges[beams]


def evaluate_static_scan(frame, reference):
    """
    Element-wise range minus reference over the valid beams

    Args:
        frame: ScanFrame
        reference: Per-beam reference ranges (None/NaN where unknown)

    Returns:
        ScanDeviations: values and the beam index of each value
    """
    ref = np.array([np.nan if r is None else r for r in reference], dtype=float)
    if ref.shape[0] != frame.beam_count:
        raise LengthMismatch(f"reference has {ref.shape[0]} beams, scan has {frame.beam_count}")
    beams, ranges = measure_static_scan(frame)
    known = ~np.isnan(ref[beams])
    beams = beams[known]
    return ScanDeviations(values=ranges[known] - ref[beams], beams=beams)


def evaluate_generic(frame, channel, reference):
    """Deviation of a generic channel from its constant reference"""
    if channel not in frame.channels:
        raise MissingChannel(f"channel '{channel}' absent")
    return float(frame.channels[channel]) - reference


def compute_velocity(frames, joint_id):
    """
    Speed of one joint over consecutive frames

    Central differences ||r[i+1] - r[i-1]|| / (t[i+1] - t[i-1]) in the
    interior, one-sided differences at both ends.

    Args:
        frames: MeasurementFrames with skeleton payloads, joint present in each
        joint_id: Body25 joint id

    Returns:
        np.ndarray: m/s, one value per frame
    """
    if len(frames) < 2:
        raise InsufficientSamples("velocity needs at least two frames")

    positions = []
    for frame in frames:
        joint = frame.payload.valid_joint(joint_id)
        if joint is None:
            raise MissingJoint(f"joint {joint_id} absent at t={frame.timestamp}")
        positions.append(joint.position)
    positions = np.asarray(positions, dtype=float)
    times = np.asarray([frame.timestamp for frame in frames], dtype=float)

    dt = np.diff(times)
    if np.any(dt <= 0):
        raise DegenerateTimestamps("velocity needs strictly increasing timestamps")

    speed = np.empty(len(frames))
    step = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    speed[0] = step[0] / dt[0]
    speed[-1] = step[-1] / dt[-1]
    if len(frames) > 2:
        span = np.linalg.norm(positions[2:] - positions[:-2], axis=1)
        speed[1:-1] = span / (times[2:] - times[:-2])
    return speed


# --- WINDOW-LEVEL MEASUREMENT ---

@dataclass
class _TargetSamples:
    """Raw conserved quantity per target across a window, frame-major"""
    labels: List[str]
    frame_index: np.ndarray
    target_index: np.ndarray
    timestamps: np.ndarray
    measured: np.ndarray


def _collect_samples(window, spec):
    frames = [f for f in window if f.kind == spec.frame_kind]
    kind = spec.kind

    if isinstance(kind, StaticScan):
        if not frames:
            return _empty_samples([]), frames
        beam_count = frames[0].payload.beam_count
        for frame in frames:
            if frame.payload.beam_count != beam_count:
                raise LengthMismatch("scan geometry changed inside a window")
        rows, cols, values = [], [], []
        for i, frame in enumerate(frames):
            beams, ranges = measure_static_scan(frame.payload)
            rows.append(np.full(len(beams), i, dtype=int))
            cols.append(beams)
            values.append(ranges)
        rows = np.concatenate(rows)
        times = np.asarray([f.timestamp for f in frames], dtype=float)
        labels = [f"beam:{b}" for b in range(beam_count)]
        return _TargetSamples(labels, rows, np.concatenate(cols), times[rows], np.concatenate(values)), frames

    if isinstance(kind, JointPairDistance):
        labels = kind.targets()
        rows, cols, values = [], [], []
        for i, frame in enumerate(frames):
            for p, pair in enumerate(kind.pairs):
                try:
                    values.append(measure_joint_pair(frame.payload, pair))
                except MissingJoint:
                    continue
                rows.append(i)
                cols.append(p)
    else:
        labels = [kind.channel]
        rows, cols, values = [], [], []
        for i, frame in enumerate(frames):
            if kind.channel in frame.payload.channels:
                rows.append(i)
                cols.append(0)
                values.append(float(frame.payload.channels[kind.channel]))

    rows = np.asarray(rows, dtype=int)
    times = np.asarray([f.timestamp for f in frames], dtype=float)
    return _TargetSamples(
        labels,
        rows,
        np.asarray(cols, dtype=int),
        times[rows] if len(rows) else np.empty(0),
        np.asarray(values, dtype=float),
    ), frames


def _empty_samples(labels):
    empty = np.empty(0)
    return _TargetSamples(labels, empty.astype(int), empty.astype(int), empty, empty)


def _given_references(spec, n_targets):
    kind = spec.kind
    if isinstance(kind, StaticScan):
        reference = kind.reference_for(n_targets)
        if n_targets and len(reference) != n_targets:
            raise LengthMismatch(f"spec '{spec.id}': {len(reference)} reference beams, scan has {n_targets}")
        return reference
    if isinstance(kind, JointPairDistance):
        return list(kind.reference)
    return [kind.reference]


def _window_means(samples, strict):
    n_targets = len(samples.labels)
    counts = np.bincount(samples.target_index, minlength=n_targets)
    sums = np.bincount(samples.target_index, weights=samples.measured, minlength=n_targets)
    means = np.full(n_targets, np.nan)
    enough = counts >= 2
    if strict and not np.all(enough):
        short = [samples.labels[i] for i in np.flatnonzero(~enough)][:5]
        raise InsufficientSamples(f"fewer than 2 valid samples for {short}")
    if not np.any(enough):
        raise InsufficientSamples("no target has 2 valid samples in this window")
    means[enough] = sums[enough] / counts[enough]
    return means


def estimate_reference(window, spec, strict=True):
    """
    Window-mean reference for every target of ``spec``

    Args:
        window: Sequence of MeasurementFrames
        spec: ConservationSpec with the window_mean policy
        strict: Require 2 samples for every target (otherwise such targets are skipped)

    Returns:
        ReferenceEstimate: self-referenced per-target means
    """
    if spec.reference_policy is not ReferencePolicy.WINDOW_MEAN:
        raise ConfigurationError(f"spec '{spec.id}' does not use the window_mean policy")
    samples, _ = _collect_samples(window, spec)
    means = _window_means(samples, strict)
    values = {
        label: float(means[i]) for i, label in enumerate(samples.labels) if not np.isnan(means[i])
    }
    return ReferenceEstimate(values=values)


def baseline_spread(window, spec, window_id=0):
    """
    Deviations of the raw measurements from their own window mean, with
    no conservation reference

    Args:
        window: Sequence of MeasurementFrames
        spec: ConservationSpec naming the targets
        window_id: Window counter

    Returns:
        DeviationSeries: mode "baseline"
    """
    return ConservationEngine(covariates=()).deviation_series(window, spec, window_id, mode="baseline")


class ConservationEngine:
    """
    Turns a window of frames into the DeviationSeries of one spec
    """

    def __init__(self, covariates=(VELOCITY,)):
        """
        Initialize ConservationEngine

        Args:
            covariates: Covariate names to attach when the spec supports them
        """
        self.covariates = tuple(covariates)

    def deviation_series(self, window, spec, window_id=0, mode="conservation"):
        """
        Evaluate ``spec`` over ``window``

        Args:
            window: Sequence of MeasurementFrames
            spec: ConservationSpec
            window_id: Window counter
            mode: "conservation" (reference-based) or "baseline" (window-mean spread)

        Returns:
            DeviationSeries
        """
        samples, frames = _collect_samples(window, spec)
        if mode == "baseline":
            if len(samples.measured) < 2:
                raise InsufficientSamples(f"spec '{spec.id}': baseline needs at least 2 samples")
            reference = _window_means(samples, strict=False)
            self_referenced = True
        else:
            reference, self_referenced = self._resolve_references(samples, spec)

        ref = reference[samples.target_index] if len(samples.target_index) else np.empty(0)
        keep = ~np.isnan(ref)
        values = samples.measured[keep] - ref[keep]

        covariates = {}
        if VELOCITY in self.covariates and isinstance(spec.kind, JointPairDistance):
            velocity = self._pair_velocity(frames, spec.kind, samples)
            if velocity is not None:
                covariates[VELOCITY] = velocity[keep]

        return DeviationSeries(
            spec_id=spec.id,
            window_id=window_id,
            values=values,
            timestamps=samples.timestamps[keep],
            targets=tuple(samples.labels[i] for i in samples.target_index[keep]),
            covariates=covariates,
            self_referenced=self_referenced,
            mode=mode,
        )

    def _resolve_references(self, samples, spec):
        given = _given_references(spec, len(samples.labels))
        reference = np.array([np.nan if r is None else r for r in given], dtype=float)
        missing = np.isnan(reference)
        if not np.any(missing):
            return reference, False
        if spec.reference_policy is not ReferencePolicy.WINDOW_MEAN:
            raise ConfigurationError(
                f"spec '{spec.id}': reference missing for {int(missing.sum())} target(s) "
                "under the ground_truth policy"
            )
        means = _window_means(samples, strict=False)
        reference[missing] = means[missing]
        return reference, True

    def _pair_velocity(self, frames, kind, samples):
        """Mean speed of the two joints, aligned with ``samples``"""
        velocity = np.full(len(samples.measured), np.nan)
        for p, pair in enumerate(kind.pairs):
            positions = np.flatnonzero(samples.target_index == p)
            if len(positions) < 2:
                continue
            pair_frames = [frames[i] for i in samples.frame_index[positions]]
            try:
                speed = (compute_velocity(pair_frames, pair[0]) + compute_velocity(pair_frames, pair[1])) / 2.0
            except DegenerateTimestamps as e:
                logger.warning(f"⚠️ Velocity unavailable for pair {pair_label(pair)}: {e}")
                return None
            velocity[positions] = speed
        return velocity

