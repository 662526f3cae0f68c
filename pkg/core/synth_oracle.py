"""
Synth Oracle Module
Synthetic measurement streams with known ground truth, and brute-force
oracles used to check the estimation path from the outside
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import InvalidSpec, UnsupportedSpec
from core.models import (
    GenericFrame,
    Joint,
    MeasurementFrame,
    ReferencePolicy,
    ScanFrame,
    SkeletonFrame,
    pair_label,
    scan_beam_count,
)

logger = logging.getLogger(__name__)

# S3000-like geometry
DEFAULT_FOV = 275.0
DEFAULT_ANGLE_STEP = 0.385
DEFAULT_ANGLE_START = -47.5
DEFAULT_MAX_RANGE = 49.0

DEFAULT_ORACLE_WINDOWS = 100000

NOISE_KINDS = ("gaussian", "uniform")

# Body25 tree: (parent, child) -> (unit direction, length in meters)
BODY25_BONES = {
    (1, 0): ((0.0, 1.0, 0.0), 0.25),
    (1, 2): ((-1.0, 0.0, 0.0), 0.18),
    (2, 3): ((0.0, -1.0, 0.0), 0.30),
    (3, 4): ((0.0, -1.0, 0.0), 0.25),
    (1, 5): ((1.0, 0.0, 0.0), 0.18),
    (5, 6): ((0.0, -1.0, 0.0), 0.30),
    (6, 7): ((0.0, -1.0, 0.0), 0.25),
    (1, 8): ((0.0, -1.0, 0.0), 0.50),
    (8, 9): ((-1.0, 0.0, 0.0), 0.10),
    (9, 10): ((0.0, -1.0, 0.0), 0.42),
    (10, 11): ((0.0, -1.0, 0.0), 0.40),
    (8, 12): ((1.0, 0.0, 0.0), 0.10),
    (12, 13): ((0.0, -1.0, 0.0), 0.42),
    (13, 14): ((0.0, -1.0, 0.0), 0.40),
    (0, 15): ((-1.0, 0.0, 0.0), 0.03),
    (0, 16): ((1.0, 0.0, 0.0), 0.03),
    (15, 17): ((-1.0, 0.0, 0.0), 0.07),
    (16, 18): ((1.0, 0.0, 0.0), 0.07),
    (14, 19): ((0.0, 0.0, 1.0), 0.15),
    (19, 20): ((1.0, 0.0, 0.0), 0.05),
    (14, 21): ((0.0, 0.0, -1.0), 0.06),
    (11, 22): ((0.0, 0.0, 1.0), 0.15),
    (22, 23): ((-1.0, 0.0, 0.0), 0.05),
    (11, 24): ((0.0, 0.0, -1.0), 0.06),
}

# Neck height of the template at rest
NECK_HEIGHT = 1.45


# --- SCENARIOS ---

@dataclass(frozen=True)
class StaticScanScenario:
    """Static scene seen by a laser scanner"""
    range_profile: Union[float, Sequence[float]] = 4.0
    noise_sigma: float = 0.002
    n_frames: int = 100
    fov: float = DEFAULT_FOV
    angle_step: float = DEFAULT_ANGLE_STEP
    angle_start: float = DEFAULT_ANGLE_START
    frame_rate: float = 10.0
    noise: str = "gaussian"
    dropout_rate: float = 0.0
    max_range: float = DEFAULT_MAX_RANGE
    seed: int = 0

    @property
    def beam_count(self):
        return scan_beam_count(self.fov, self.angle_step)

    def profile(self):
        """True range per beam"""
        profile = np.asarray(self.range_profile, dtype=float)
        if profile.ndim and profile.shape != (self.beam_count,):
            raise InvalidSpec(f"range profile has {profile.shape[0]} beams, geometry gives {self.beam_count}")
        return np.broadcast_to(profile, (self.beam_count,)).copy()


@dataclass(frozen=True)
class DriftingScan(StaticScanScenario):
    """Static scan whose ranges drift linearly, meters per frame"""
    drift_per_frame: float = 0.0


@dataclass(frozen=True)
class ConstantNoise:
    sigma: float


@dataclass(frozen=True)
class VelocityCoupledNoise:
    """Per-axis sigma = sigma0 + gain * true speed"""
    sigma0: float
    gain: float


@dataclass(frozen=True)
class SkeletonWalk:
    """
    Rigid Body25 skeleton translated along a piecewise-linear path

    ``waypoints`` are (time_s, (x, y, z)) pairs for the neck offset; the
    body holds still before the first and after the last waypoint.
    """
    noise: Union[ConstantNoise, VelocityCoupledNoise] = ConstantNoise(0.01)
    bone_lengths: Mapping[Tuple[int, int], float] = field(default_factory=dict)
    waypoints: Sequence[Tuple[float, Tuple[float, float, float]]] = ((0.0, (0.0, 0.0, 0.0)),)
    n_frames: int = 100
    frame_rate: float = 30.0
    noise_kind: str = "gaussian"
    seed: int = 0


ScenarioSpec = Union[StaticScanScenario, DriftingScan, SkeletonWalk]


@dataclass(eq=False)
class GroundTruth:
    """
    Sidecar of a generated stream

    ``references`` maps "scan" to the per-beam profile or "template" to the
    joint positions of the rigid skeleton at rest.
    """
    kind: str
    sigma: float
    references: Dict[str, list]
    noise_scale: Optional[np.ndarray] = None
    true_speed: Optional[np.ndarray] = None
    drift_per_frame: float = 0.0
    seed: int = 0

    def pair_reference(self, pair):
        """True distance between two template joints"""
        template = self.references["template"]
        j, k = (str(pair[0]), str(pair[1]))
        return float(np.linalg.norm(np.subtract(template[j], template[k], dtype=float)))

    def pair_references(self, pairs):
        return {pair_label(p): self.pair_reference(p) for p in pairs}

    def to_dict(self):
        data = {
            "kind": self.kind,
            "sigma": self.sigma,
            "references": self.references,
            "drift_per_frame": self.drift_per_frame,
            "seed": self.seed,
        }
        if self.noise_scale is not None:
            data["noise_scale"] = self.noise_scale.tolist()
        if self.true_speed is not None:
            data["true_speed"] = self.true_speed.tolist()
        return data

    @classmethod
    def from_dict(cls, data):
        def optional(key):
            return np.asarray(data[key], dtype=float) if key in data else None

        return cls(
            kind=data["kind"],
            sigma=float(data["sigma"]),
            references=data["references"],
            noise_scale=optional("noise_scale"),
            true_speed=optional("true_speed"),
            drift_per_frame=float(data.get("drift_per_frame", 0.0)),
            seed=int(data.get("seed", 0)),
        )


# --- SKELETON GEOMETRY ---

def _tree_edge(pair):
    j, k = pair
    if (j, k) in BODY25_BONES:
        return j, k
    if (k, j) in BODY25_BONES:
        return k, j
    raise InvalidSpec(f"bone {j}-{k} is not an edge of the Body25 tree")


def body25_template(bone_lengths=None):
    """
    Joint positions of the rigid skeleton at rest

    Args:
        bone_lengths: Optional {(j, k): meters} overrides for tree edges

    Returns:
        np.ndarray: (25, 3) positions, neck at (0, NECK_HEIGHT, 0)
    """
    lengths = {edge: length for edge, (_, length) in BODY25_BONES.items()}
    for pair, length in (bone_lengths or {}).items():
        if not length > 0:
            raise InvalidSpec(f"bone {pair_label(pair)} length must be > 0 (got {length})")
        lengths[_tree_edge(pair)] = float(length)

    positions = np.full((25, 3), np.nan)
    positions[1] = (0.0, NECK_HEIGHT, 0.0)
    # parents precede children in BODY25_BONES
    for (parent, child), (direction, _) in BODY25_BONES.items():
        positions[child] = positions[parent] + lengths[(parent, child)] * np.asarray(direction)
    return positions


def _path(waypoints, times):
    """Neck offset and true speed at each time"""
    if not waypoints:
        raise InvalidSpec("trajectory needs at least one waypoint")
    knots = np.asarray([w[0] for w in waypoints], dtype=float)
    points = np.asarray([w[1] for w in waypoints], dtype=float)
    if np.any(np.diff(knots) <= 0):
        raise InvalidSpec("waypoint times must be strictly increasing")
    offsets = np.column_stack([np.interp(times, knots, points[:, axis]) for axis in range(3)])

    speed = np.zeros(len(times))
    if len(knots) > 1:
        segment_speed = np.linalg.norm(np.diff(points, axis=0), axis=1) / np.diff(knots)
        segment = np.searchsorted(knots, times, side="right") - 1
        moving = (segment >= 0) & (segment < len(segment_speed))
        speed[moving] = segment_speed[segment[moving]]
    return offsets, speed


def _draw_noise(rng, kind, scale, size):
    if kind == "uniform":
        half_width = np.asarray(scale) * math.sqrt(3.0)
        return rng.uniform(-1.0, 1.0, size=size) * half_width
    return rng.normal(0.0, 1.0, size=size) * np.asarray(scale)


# --- GENERATION ---

def _validate(spec):
    if spec.n_frames < 2:
        raise InvalidSpec(f"n_frames must be >= 2 (got {spec.n_frames})")
    if not spec.frame_rate > 0:
        raise InvalidSpec("frame rate must be > 0")
    if isinstance(spec, SkeletonWalk):
        noise = spec.noise
        sigmas = (noise.sigma,) if isinstance(noise, ConstantNoise) else (noise.sigma0, noise.gain)
        kind = spec.noise_kind
    else:
        sigmas = (spec.noise_sigma,)
        kind = spec.noise
        if not 0.0 <= spec.dropout_rate < 1.0:
            raise InvalidSpec(f"dropout rate must lie in [0, 1) (got {spec.dropout_rate})")
        if not spec.angle_step > 0:
            raise InvalidSpec("angle step must be > 0")
        if np.any(spec.profile() <= 0):
            raise InvalidSpec("range profile must be > 0")
    if any(not s >= 0 for s in sigmas):
        raise InvalidSpec("noise parameters must be >= 0")
    if kind not in NOISE_KINDS:
        raise InvalidSpec(f"noise must be one of {NOISE_KINDS} (got '{kind}')")


def _generate_scan(spec, rng):
    truth = spec.profile()
    drift = getattr(spec, "drift_per_frame", 0.0)
    frames = []
    for k in range(spec.n_frames):
        ranges = truth + drift * k + _draw_noise(rng, spec.noise, spec.noise_sigma, truth.shape)
        if spec.dropout_rate > 0:
            ranges[rng.random(truth.shape) < spec.dropout_rate] = np.nan
        with np.errstate(invalid="ignore"):
            ranges[ranges >= spec.max_range] = np.nan
        frames.append(MeasurementFrame(k / spec.frame_rate, ScanFrame(spec.angle_start, spec.angle_step, ranges)))

    sidecar = GroundTruth(
        kind="drifting_scan" if drift else "static_scan",
        sigma=spec.noise_sigma,
        references={"scan": truth.tolist()},
        drift_per_frame=drift,
        seed=spec.seed,
    )
    return frames, sidecar


def _generate_skeleton(spec, rng):
    template = body25_template(spec.bone_lengths)
    times = np.arange(spec.n_frames) / spec.frame_rate
    offsets, speed = _path(spec.waypoints, times)

    if isinstance(spec.noise, ConstantNoise):
        scale = np.full(spec.n_frames, float(spec.noise.sigma))
    else:
        scale = spec.noise.sigma0 + spec.noise.gain * speed

    noise = _draw_noise(rng, spec.noise_kind, scale[:, np.newaxis, np.newaxis], (spec.n_frames, 25, 3))
    positions = template[np.newaxis, :, :] + offsets[:, np.newaxis, :] + noise

    frames = []
    for k in range(spec.n_frames):
        joints = {j: Joint(tuple(float(c) for c in positions[k, j])) for j in range(25)}
        frames.append(MeasurementFrame(float(times[k]), SkeletonFrame(joints)))

    sidecar = GroundTruth(
        kind="skeleton_walk",
        sigma=float(scale.max()),
        references={"template": {str(j): template[j].tolist() for j in range(25)}},
        noise_scale=scale,
        true_speed=speed,
        seed=spec.seed,
    )
    return frames, sidecar


def generate(spec):
    """
    Generate a synthetic stream and its ground truth

    Args:
        spec: StaticScanScenario, DriftingScan or SkeletonWalk

    Returns:
        tuple: (list of MeasurementFrame, GroundTruth)
    """
    _validate(spec)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if isinstance(spec, SkeletonWalk):
        frames, sidecar = _generate_skeleton(spec, rng)
    else:
        frames, sidecar = _generate_scan(spec, rng)
    logger.info(f"✅ Generated {len(frames)} {sidecar.kind} frames (seed {spec.seed})")
    return frames, sidecar


def generic_stream(n_frames, channel="value", reference=1.0, sigma=0.01, seed=0):
    """
    Lazily yield generic single-channel frames

    Used for long streams where materialising every frame is not wanted.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    for k in range(n_frames):
        value = reference + sigma * float(rng.standard_normal())
        yield MeasurementFrame(float(k), GenericFrame({channel: value}))


# --- ORACLES ---

def _window_deviations(spec, window_size, pairs, rng, count):
    """Deviations of ``count`` independent windows, shape (count, samples)"""
    if isinstance(spec, SkeletonWalk):
        template = body25_template(spec.bone_lengths)
        sigma = spec.noise.sigma
        columns = []
        for j, k in pairs:
            delta = template[j] - template[k]
            eps = _draw_noise(rng, spec.noise_kind, sigma, (count, window_size, 2, 3))
            noisy = delta + eps[:, :, 0, :] - eps[:, :, 1, :]
            columns.append(np.linalg.norm(noisy, axis=2) - np.linalg.norm(delta))
        return np.stack(columns, axis=2)

    beams = spec.beam_count
    noise = _draw_noise(rng, spec.noise, spec.noise_sigma, (count, window_size, beams))
    if spec.dropout_rate > 0:
        noise[rng.random(noise.shape) < spec.dropout_rate] = np.nan
    return noise


def oracle_expected_uncertainty(
    spec,
    window_size=10,
    confidence=0.95,
    reference_policy=ReferencePolicy.GROUND_TRUTH,
    pairs=None,
    n_windows=DEFAULT_ORACLE_WINDOWS,
    seed=0,
):
    """
    Monte Carlo value of the window uncertainty estimator

    Simulates ``n_windows`` independent windows of the scenario, reduces
    each to its mean absolute deviation (from the true reference, or from the
    per-target window mean) and returns the ``confidence``-quantile of those
    window values.

    Args:
        spec: StaticScanScenario or SkeletonWalk with ConstantNoise
        window_size: Frames per window
        confidence: Quantile level
        reference_policy: ReferencePolicy
        pairs: Joint pairs (SkeletonWalk only)
        n_windows: Simulated window count
        seed: Seed of the oracle's own generator

    Returns:
        float: Expected uncertainty in measurement units
    """
    if isinstance(spec, DriftingScan) or (
        isinstance(spec, SkeletonWalk) and not isinstance(spec.noise, ConstantNoise)
    ):
        raise UnsupportedSpec(f"no oracle for {type(spec).__name__} with this noise model")
    _validate(spec)
    if isinstance(spec, SkeletonWalk) and not pairs:
        raise UnsupportedSpec("skeleton oracle needs the joint pairs under analysis")
    if window_size > spec.n_frames:
        raise InvalidSpec(f"window of {window_size} frames exceeds the {spec.n_frames}-frame scenario")

    rng = np.random.Generator(np.random.PCG64(seed))
    samples_per_window = window_size * (len(pairs) if isinstance(spec, SkeletonWalk) else spec.beam_count)
    chunk = max(1, (1 << 22) // samples_per_window)
    window_mad = np.empty(n_windows)
    for start in range(0, n_windows, chunk):
        count = min(n_windows, start + chunk) - start
        dev = _window_deviations(spec, window_size, pairs, rng, count)
        if ReferencePolicy(reference_policy) is ReferencePolicy.WINDOW_MEAN:
            dev = dev - np.nanmean(dev, axis=1, keepdims=True)
        window_mad[start:start + count] = np.nanmean(np.abs(dev).reshape(count, -1), axis=1)

    return float(np.quantile(window_mad, confidence))


def oracle_mc_propagation(terms, n_samples=100000, seed=0):
    """
    Empirical standard deviation of sum(s_j * e_j), e_j ~ N(0, u_j^2)

    Args:
        terms: Independent SensitivityTerms
        n_samples: Monte Carlo draws
        seed: Generator seed

    Returns:
        float
    """
    s = np.asarray([t.sensitivity for t in terms], dtype=float)
    u = np.asarray([t.u for t in terms], dtype=float)
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = rng.normal(0.0, 1.0, size=(n_samples, len(terms))) * u
    return float(np.std(eps @ s, ddof=1))
