"""
Pipeline Module
Windows a frame stream and runs the full estimation loop per window:
deviations, bootstrap, dependency tests, propagation and safety verdict
"""

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np

from core.conservation import ConservationEngine
from core.exceptions import ConserveAIError, EmptySeries, InsufficientSamples
from core.models import JointPairDistance, SensitivityTerm, UncertaintyKind, concat_series
from core.propagation import (
    DistanceUncertainty,
    PropagationMode,
    RunningAverage,
    attribute_to_joint,
    hr_distance_breakdown,
    hr_distance_combined,
    human_position_uncertainty,
    isolate_type_a,
    split_detection,
    type_b_fraction,
)
from core.safety_mapper import SafetyVerdict, check_limit, distance_constraint_probability
from core.stats_engine import (
    BootstrapResult,
    DependencyReport,
    HypothesisResult,
    UncertaintyEstimate,
    bootstrap,
    dependency_report,
    derive_seed,
    spread_estimate,
    test_dependency,
    uncertainty_at,
)

logger = logging.getLogger(__name__)

POOLED = "pooled"


# --- WINDOWING ---

@dataclass(frozen=True)
class Window:
    window_id: int
    frames: Tuple


class WindowStream:
    """
    Non-overlapping windows of exactly ``window_size`` frames

    Holds at most one window of frames; the trailing partial window is
    counted in ``skipped`` and logged.
    """

    def __init__(self, frames, window_size):
        if window_size < 2:
            raise ConserveAIError(f"window size must be >= 2 (got {window_size})")
        self.frames = frames
        self.window_size = window_size
        self.skipped = 0
        self.emitted = 0

    def __iter__(self):
        buffer = []
        for frame in self.frames:
            buffer.append(frame)
            if len(buffer) == self.window_size:
                yield Window(self.emitted, tuple(buffer))
                self.emitted += 1
                buffer = []
        self.skipped = len(buffer)
        if buffer:
            logger.warning(f"⚠️ Skipped trailing partial window of {len(buffer)} frame(s)")


def window_stream(frames, window_size):
    """Tumbling windows over ``frames`` (see WindowStream)"""
    return WindowStream(frames, window_size)


# --- REPORT TYPES ---

def _estimate_dict(estimate):
    data = {
        "u": estimate.u,
        "confidence": estimate.confidence,
        "interval": list(estimate.interval),
        "point_estimate": estimate.point_estimate,
        "estimator": estimate.estimator,
        "self_referenced": estimate.self_referenced,
        "n": estimate.n,
    }
    if estimate.relative is not None:
        data["relative"] = estimate.relative
    if estimate.bias is not None:
        data["bias"] = estimate.bias
        data["bias_interval"] = list(estimate.bias_interval)
    if estimate.provenance:
        data["provenance"] = list(estimate.provenance)
    return data


def _term_dict(term):
    return {"symbol": term.symbol, "sensitivity": term.sensitivity, "u": term.u, "kind": term.kind.value}


@dataclass(frozen=True)
class WindowTiming:
    """Stream-time extent of a window"""
    t_start: float
    t_end: float
    n_frames: int
    n_samples: int


@dataclass(frozen=True)
class PropagationBreakdown:
    """Type A and Type B terms and the combined values derived from them"""
    mode: PropagationMode
    terms: Tuple[SensitivityTerm, ...]
    u_type_a: float
    u_position: float
    u_cross_check: float
    u_total: float
    u_joint: Optional[float] = None
    distance: Optional[DistanceUncertainty] = None
    distance_combined: Optional[float] = None
    constraint_probability: Optional[float] = None

    def to_dict(self):
        data = {
            "mode": self.mode.value,
            "terms": [_term_dict(t) for t in self.terms],
            "u_type_a": self.u_type_a,
            "u_position": self.u_position,
            "u_cross_check": self.u_cross_check,
            "u_total": self.u_total,
        }
        if self.u_joint is not None:
            data["u_joint"] = self.u_joint
        if self.distance is not None:
            data["distance"] = {
                "d_hr": self.distance.d_hr,
                "prefactor": self.distance.prefactor,
                "u": self.distance.u,
                "u_abs": self.distance.u_abs,
                "u_combined": self.distance_combined,
            }
        if self.constraint_probability is not None:
            data["constraint_probability"] = self.constraint_probability
        return data


@dataclass(frozen=True)
class WindowReport:
    """Everything computed for one window"""
    window_id: int
    mode: str
    timing: WindowTiming
    estimates: Mapping[str, UncertaintyEstimate] = field(default_factory=dict)
    pooled: Optional[UncertaintyEstimate] = None
    hypotheses: Tuple[HypothesisResult, ...] = ()
    dependencies: Tuple[DependencyReport, ...] = ()
    propagation: Optional[PropagationBreakdown] = None
    verdict: Optional[SafetyVerdict] = None
    errors: Tuple[str, ...] = ()
    bootstraps: Mapping[str, BootstrapResult] = field(default_factory=dict)

    def to_dict(self):
        """Report representation; absent sections are omitted, never null"""
        data = {
            "window_id": self.window_id,
            "mode": self.mode,
            "timing": {
                "t_start": self.timing.t_start,
                "t_end": self.timing.t_end,
                "n_frames": self.timing.n_frames,
                "n_samples": self.timing.n_samples,
            },
            "estimates": {spec_id: _estimate_dict(e) for spec_id, e in self.estimates.items()},
        }
        if self.pooled is not None:
            data["pooled"] = _estimate_dict(self.pooled)
        if self.hypotheses:
            data["hypotheses"] = [
                {
                    "spec_id": h.spec_id,
                    "covariate": h.covariate,
                    "statistic": h.statistic,
                    "p_value": h.p_value,
                    "alpha": h.alpha,
                    "rejected": h.rejected,
                    "n": h.n,
                    "n_perm": h.n_perm,
                }
                for h in self.hypotheses
            ]
        if self.dependencies:
            data["dependencies"] = [
                {"spec_id": d.spec_id, "covariate": d.covariate, "covariance": d.covariance,
                 "pearson_r": d.pearson_r, "n": d.n}
                for d in self.dependencies
            ]
        if self.propagation is not None:
            data["propagation"] = self.propagation.to_dict()
        if self.verdict is not None:
            data["verdict"] = self.verdict.to_dict()
        if self.errors:
            data["errors"] = list(self.errors)
        return data


@dataclass
class RunSummary:
    """Stream-level totals, filled while the reports are consumed"""
    windows: int = 0
    failed_windows: int = 0
    verdicts: int = 0
    verdict_failures: int = 0
    rejections: int = 0
    skipped_frames: int = 0
    average: Optional[UncertaintyEstimate] = None
    elapsed_s: float = 0.0
    pooled: RunningAverage = field(default_factory=RunningAverage, repr=False)

    @property
    def passed(self):
        return self.verdict_failures == 0

    def to_dict(self):
        data = {
            "windows": self.windows,
            "failed_windows": self.failed_windows,
            "verdicts": self.verdicts,
            "verdict_failures": self.verdict_failures,
            "rejections": self.rejections,
            "skipped_frames": self.skipped_frames,
        }
        if self.average is not None:
            data["average"] = _estimate_dict(self.average)
        return data


# --- WINDOW ANALYSIS ---

def _timing(frames, n_samples):
    return WindowTiming(
        t_start=float(frames[0].timestamp) if frames else 0.0,
        t_end=float(frames[-1].timestamp) if frames else 0.0,
        n_frames=len(frames),
        n_samples=n_samples,
    )


def _estimate(config, series, seed):
    if config.estimation_mode == "baseline":
        return spread_estimate(series, config.confidence, config.operating_range), None
    result = bootstrap(series, config.resamples, seed)
    estimate = uncertainty_at(result, config.confidence, config.operating_range, series.self_referenced)
    return estimate, result


def _human_position(frames, joint_id):
    points = [f.payload.valid_joint(joint_id) for f in frames if hasattr(f.payload, "valid_joint")]
    points = [j.position for j in points if j is not None]
    if not points:
        raise InsufficientSamples(f"joint {joint_id} never seen in this window")
    return np.mean(np.asarray(points, dtype=float), axis=0)


def propagate(config, pooled, frames):
    """
    Combine the pooled Type A estimate with the configured Type B sources

    Args:
        config: PipelineConfig
        pooled: Pooled UncertaintyEstimate of the window
        frames: Window frames (for the human position)

    Returns:
        PropagationBreakdown
    """
    mode = config.propagation_mode
    registry = config.type_b
    distance_mode = config.robot_position is not None and config.hr_joint is not None

    u_a = pooled.u
    if config.operating_range and not distance_mode:
        u_a = pooled.relative

    if config.subtract_sources:
        u_a = isolate_type_a(u_a, registry.terms(config.subtract_sources), mode)

    if config.detection_source:
        scanner = registry.get(config.detection_source)
        point = scanner.operating_point if scanner.operating_point is not None else config.operating_range
        det = split_detection(u_a, 1.0, type_b_fraction(scanner, point), scanner.sensitivity)
    else:
        det = SensitivityTerm("det", 1.0, u_a, UncertaintyKind.TYPE_A)

    reserved = {config.detection_source, config.robot_source, *config.subtract_sources}
    env = registry.terms([spec.source_id for spec in registry if spec.source_id not in reserved])
    position = human_position_uncertainty(det, env, config.confidence, mode)

    u_joint = None
    if any(isinstance(spec.kind, JointPairDistance) for spec in config.specs):
        u_joint = attribute_to_joint(pooled.u, config.joint_share)

    distance = combined = probability = None
    u_total = position.u
    if distance_mode:
        u_robot = registry.terms([config.robot_source])[0].u if config.robot_source else 0.0
        r_h = _human_position(frames, config.hr_joint)
        distance = hr_distance_breakdown(r_h, config.robot_position, position.u, u_robot)
        combined = hr_distance_combined(position.u, u_robot, mode)
        if config.d_min is not None:
            probability = distance_constraint_probability(distance.d_hr, distance.u_abs, config.d_min)
        u_total = distance.u_abs / config.operating_range if config.operating_range else distance.u_abs

    return PropagationBreakdown(
        mode=mode,
        terms=position.components,
        u_type_a=u_a,
        u_position=position.u,
        u_cross_check=position.u_cross_check,
        u_total=u_total,
        u_joint=u_joint,
        distance=distance,
        distance_combined=combined,
        constraint_probability=probability,
    )


def analyze_window(config, window):
    """
    Run every analysis of one window

    A failing spec or stage is recorded in ``errors``; it never raises.

    Args:
        config: PipelineConfig
        window: Window

    Returns:
        WindowReport
    """
    frames = window.frames
    wid = window.window_id
    mode = config.estimation_mode
    engine = ConservationEngine(covariates=config.covariates)
    errors = []
    series = {}

    for spec in config.specs:
        try:
            deviations = engine.deviation_series(frames, spec, wid, mode=mode)
            if len(deviations) == 0:
                raise EmptySeries("no valid samples in this window")
            series[spec.id] = deviations
        except ConserveAIError as e:
            errors.append(f"{spec.id}: {e}")

    estimates, bootstraps, hypotheses, dependencies = {}, {}, [], []
    for index, spec in enumerate(config.specs):
        if spec.id not in series:
            continue
        s = series[spec.id]
        try:
            estimates[spec.id], result = _estimate(config, s, derive_seed(config.seed, wid, 2 * index))
        except ConserveAIError as e:
            errors.append(f"{spec.id}: {e}")
            continue
        if result is not None:
            bootstraps[spec.id] = result

        for covariate in config.covariates:
            if covariate not in s.covariates:
                continue
            try:
                hypothesis = test_dependency(
                    s, covariate, config.alpha, derive_seed(config.seed, wid, 2 * index + 1), config.permutations
                )
            except ConserveAIError as e:
                logger.warning(f"⚠️ Window {wid}, spec '{spec.id}': no {covariate} test ({e})")
                continue
            hypotheses.append(hypothesis)
            if hypothesis.rejected:
                dependencies.append(dependency_report(s, covariate))

    pooled = None
    if len(estimates) == 1:
        pooled = next(iter(estimates.values()))
    elif len(estimates) > 1:
        try:
            merged = concat_series([series[spec_id] for spec_id in estimates], spec_id=POOLED)
            pooled, result = _estimate(config, merged, derive_seed(config.seed, wid, 2 * len(config.specs)))
            if result is not None:
                bootstraps[POOLED] = result
        except ConserveAIError as e:
            errors.append(f"{POOLED}: {e}")

    propagation = verdict = None
    if pooled is not None:
        try:
            propagation = propagate(config, pooled, frames)
            if config.risk_model is not None:
                verdict = check_limit(propagation.u_total, config.risk_model, config.safety_limit)
        except ConserveAIError as e:
            errors.append(f"propagation: {e}")

    return WindowReport(
        window_id=wid,
        mode=mode,
        timing=_timing(frames, sum(len(s) for s in series.values())),
        estimates=estimates,
        pooled=pooled,
        hypotheses=tuple(hypotheses),
        dependencies=tuple(dependencies),
        propagation=propagation,
        verdict=verdict,
        errors=tuple(errors),
        bootstraps=bootstraps,
    )


# --- ORCHESTRATION ---

def _ordered_map(fn, items, workers):
    """Map with a thread pool, keeping input order and a bounded backlog"""
    if workers <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= 2 * workers:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


class PipelineRunner:
    """
    Drives the estimation loop over a frame stream and keeps the run summary
    """

    def __init__(self, config):
        """
        Initialize PipelineRunner

        Args:
            config: Validated PipelineConfig
        """
        self.config = config
        self.summary = RunSummary()

    def run(self, frames):
        """
        Yield one WindowReport per complete window, in window order

        Args:
            frames: Iterable of MeasurementFrame (consumed lazily)
        """
        started = time.perf_counter()
        windows = window_stream(frames, self.config.window_size)
        for report in _ordered_map(lambda w: analyze_window(self.config, w), windows, self.config.workers):
            self._record(report)
            yield report
        self.summary.skipped_frames = windows.skipped
        self.summary.elapsed_s = time.perf_counter() - started
        self._finish()

    def _record(self, report):
        summary = self.summary
        summary.windows += 1
        if report.errors:
            summary.failed_windows += 1
            for message in report.errors:
                logger.warning(f"⚠️ Window {report.window_id}: {message}")
        summary.rejections += sum(1 for h in report.hypotheses if h.rejected)
        if report.verdict is not None:
            summary.verdicts += 1
            if not report.verdict.passed:
                summary.verdict_failures += 1
        if report.pooled is not None:
            try:
                summary.pooled.add(report.pooled)
            except ConserveAIError as e:
                logger.warning(f"⚠️ Window {report.window_id} left out of the run average: {e}")

    def _finish(self):
        summary = self.summary
        if summary.pooled.count:
            summary.average = summary.pooled.result()
        logger.info(
            f"✅ Processed {summary.windows} window(s) in {summary.elapsed_s:.2f}s, "
            f"{summary.verdict_failures} verdict failure(s)"
        )


def run_pipeline(config, frames):
    """
    Run the full estimation loop over a frame stream

    Args:
        config: Validated PipelineConfig
        frames: Iterable of MeasurementFrame

    Returns:
        generator: WindowReport per window, emitted as each window completes
    """
    return PipelineRunner(config).run(frames)
