"""
Synthetic Stream and Oracle Tests
"""

import json
import math
import unittest
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import InvalidSpec, UnsupportedSpec
from core.models import FrameKind, ReferencePolicy, SensitivityTerm
from core.synth_oracle import (
    NECK_HEIGHT,
    ConstantNoise,
    DriftingScan,
    GroundTruth,
    SkeletonWalk,
    StaticScanScenario,
    VelocityCoupledNoise,
    body25_template,
    generate,
    generic_stream,
    oracle_expected_uncertainty,
    oracle_mc_propagation,
)

WALK = ((0.0, (0.0, 0.0, 0.0)), (1.0, (0.0, 0.0, 0.0)), (2.0, (1.5, 0.0, 0.0)))


def scan_matrix(frames):
    return np.stack([frame.payload.ranges for frame in frames])


def pair_distances(frames, pair):
    j, k = pair
    return np.array([
        np.linalg.norm(np.subtract(f.payload.joints[j].position, f.payload.joints[k].position))
        for f in frames
    ])


class TestScanScenarios(unittest.TestCase):
    """Test laser scan generation"""

    def test_geometry(self):
        """S3000-like field of view"""
        frames, truth = generate(StaticScanScenario(n_frames=3))
        self.assertEqual(len(frames), 3)
        self.assertEqual(frames[0].payload.beam_count, 715)
        self.assertEqual(frames[0].kind, FrameKind.SCAN)
        self.assertEqual(len(truth.references["scan"]), 715)
        self.assertEqual([f.timestamp for f in frames], [0.0, 0.1, 0.2])

    def test_noiseless(self):
        """sigma 0 reproduces the profile exactly"""
        frames, _ = generate(StaticScanScenario(noise_sigma=0.0, n_frames=5))
        self.assertTrue(np.all(scan_matrix(frames) == 4.0))

    def test_per_beam_sigma(self):
        """Per-beam sample deviation recovers sigma"""
        frames, _ = generate(StaticScanScenario(noise_sigma=0.002, n_frames=200, seed=3))
        per_beam = np.std(scan_matrix(frames), axis=0, ddof=1)
        self.assertAlmostEqual(float(np.median(per_beam)) / 0.002, 1.0, delta=0.05)

    def test_uniform_noise_sigma(self):
        """Uniform noise keeps the requested standard deviation"""
        frames, _ = generate(StaticScanScenario(noise_sigma=0.002, n_frames=200, noise="uniform", seed=4))
        deviations = scan_matrix(frames) - 4.0
        self.assertAlmostEqual(float(np.std(deviations)) / 0.002, 1.0, delta=0.02)
        self.assertLessEqual(float(np.max(np.abs(deviations))), 0.002 * math.sqrt(3.0) + 1e-12)

    def test_determinism(self):
        """Same seed, same stream"""
        a, _ = generate(StaticScanScenario(n_frames=4, seed=9))
        b, _ = generate(StaticScanScenario(n_frames=4, seed=9))
        c, _ = generate(StaticScanScenario(n_frames=4, seed=10))
        np.testing.assert_array_equal(scan_matrix(a), scan_matrix(b))
        self.assertFalse(np.array_equal(scan_matrix(a), scan_matrix(c)))

    def test_dropout_and_max_range(self):
        """Dropped beams and out-of-range returns are invalid"""
        frames, _ = generate(StaticScanScenario(n_frames=10, dropout_rate=0.5, seed=1))
        missing = float(np.mean(np.isnan(scan_matrix(frames))))
        self.assertGreater(missing, 0.45)
        self.assertLess(missing, 0.55)

        frames, _ = generate(StaticScanScenario(range_profile=50.0, noise_sigma=0.0, n_frames=2))
        self.assertTrue(np.all(np.isnan(scan_matrix(frames))))

    def test_drift(self):
        """Linear drift per frame"""
        frames, truth = generate(DriftingScan(noise_sigma=0.0, n_frames=4, drift_per_frame=0.01))
        np.testing.assert_allclose(scan_matrix(frames)[:, 0], [4.0, 4.01, 4.02, 4.03])
        self.assertEqual(truth.kind, "drifting_scan")
        self.assertEqual(truth.drift_per_frame, 0.01)

    def test_invalid(self):
        """Invalid scenario parameters"""
        for scenario in (
            StaticScanScenario(n_frames=1),
            StaticScanScenario(dropout_rate=1.0),
            StaticScanScenario(noise="laplace"),
            StaticScanScenario(noise_sigma=-0.001),
            StaticScanScenario(range_profile=[4.0, 4.0, 4.0]),
            StaticScanScenario(range_profile=0.0),
        ):
            with self.assertRaises(InvalidSpec):
                generate(scenario)


class TestSkeletonWalk(unittest.TestCase):
    """Test skeleton generation"""

    def test_template(self):
        """Rigid Body25 template"""
        template = body25_template()
        self.assertEqual(template.shape, (25, 3))
        self.assertFalse(np.any(np.isnan(template)))
        np.testing.assert_allclose(template[1], (0.0, NECK_HEIGHT, 0.0))
        self.assertAlmostEqual(float(np.linalg.norm(template[1] - template[8])), 0.5)

    def test_bone_override(self):
        """Overridden bone moves the subtree"""
        _, truth = generate(SkeletonWalk(bone_lengths={(8, 1): 0.6}, n_frames=2))
        self.assertAlmostEqual(truth.pair_reference((1, 8)), 0.6)
        self.assertAlmostEqual(truth.pair_reference((8, 9)), 0.1)

        with self.assertRaises(InvalidSpec):
            body25_template({(1, 4): 0.3})
        with self.assertRaises(InvalidSpec):
            body25_template({(1, 8): 0.0})

    def test_frames(self):
        """Every frame carries all 25 joints"""
        frames, truth = generate(SkeletonWalk(n_frames=6, frame_rate=30.0))
        self.assertEqual(len(frames), 6)
        self.assertTrue(all(len(f.payload.joints) == 25 for f in frames))
        self.assertAlmostEqual(frames[3].timestamp, 0.1)
        self.assertEqual(truth.kind, "skeleton_walk")
        np.testing.assert_array_equal(truth.true_speed, np.zeros(6))

    def test_walk_speed(self):
        """True speed follows the waypoints"""
        _, truth = generate(SkeletonWalk(waypoints=WALK, n_frames=75, frame_rate=30.0))
        self.assertEqual(truth.true_speed[0], 0.0)
        self.assertAlmostEqual(truth.true_speed[45], 1.5)
        self.assertEqual(truth.true_speed[-1], 0.0)

        with self.assertRaises(InvalidSpec):
            generate(SkeletonWalk(waypoints=((1.0, (0, 0, 0)), (1.0, (1, 0, 0)))))

    def test_velocity_coupled_noise(self):
        """|deviation| correlates with the true speed"""
        spec = SkeletonWalk(
            noise=VelocityCoupledNoise(0.001, 0.02), waypoints=WALK, n_frames=60, frame_rate=30.0, seed=5
        )
        frames, truth = generate(spec)
        self.assertAlmostEqual(float(truth.noise_scale[0]), 0.001)
        self.assertAlmostEqual(float(truth.noise_scale[40]), 0.031)

        deviation = np.abs(pair_distances(frames, (1, 8)) - truth.pair_reference((1, 8)))
        self.assertGreater(np.corrcoef(deviation, truth.true_speed)[0, 1], 0.3)

    def test_truth_round_trip(self):
        """Sidecar survives JSON"""
        _, truth = generate(SkeletonWalk(waypoints=WALK, n_frames=40))
        restored = GroundTruth.from_dict(json.loads(json.dumps(truth.to_dict())))
        self.assertEqual(restored.pair_reference((2, 3)), truth.pair_reference((2, 3)))
        np.testing.assert_array_equal(restored.true_speed, truth.true_speed)
        self.assertEqual(restored.kind, truth.kind)


class TestGenericStream(unittest.TestCase):
    """Test the lazy generic stream"""

    def test_lazy(self):
        """Frames are produced on demand"""
        stream = generic_stream(10 ** 9, channel="mass", reference=2.0, sigma=0.0)
        first = [next(stream) for _ in range(3)]
        self.assertEqual([f.timestamp for f in first], [0.0, 1.0, 2.0])
        self.assertTrue(all(f.payload.channels["mass"] == 2.0 for f in first))


class TestOracles(unittest.TestCase):
    """Test the brute-force oracles"""

    def test_noiseless_oracle(self):
        """No noise, no uncertainty"""
        spec = StaticScanScenario(noise_sigma=0.0)
        self.assertEqual(oracle_expected_uncertainty(spec, n_windows=50), 0.0)

    def test_homogeneity(self):
        """Doubling sigma doubles the oracle"""
        u1 = oracle_expected_uncertainty(StaticScanScenario(noise_sigma=0.002), n_windows=200, seed=1)
        u2 = oracle_expected_uncertainty(StaticScanScenario(noise_sigma=0.004), n_windows=200, seed=1)
        self.assertAlmostEqual(u2 / u1, 2.0, places=9)

    def test_gaussian_level(self):
        """Window MAD of Gaussian noise sits near sigma * sqrt(2 / pi)"""
        u = oracle_expected_uncertainty(StaticScanScenario(noise_sigma=0.002), n_windows=500, seed=2)
        self.assertAlmostEqual(u / (0.002 * math.sqrt(2.0 / math.pi)), 1.0, delta=0.05)

    def test_window_mean_policy(self):
        """Self-referenced windows read lower"""
        spec = StaticScanScenario(noise_sigma=0.002)
        truth = oracle_expected_uncertainty(spec, n_windows=300, seed=3)
        centred = oracle_expected_uncertainty(spec, n_windows=300, seed=3, reference_policy=ReferencePolicy.WINDOW_MEAN)
        self.assertLess(centred, truth)

    def test_skeleton_oracle(self):
        """Pair deviations of a constant-noise skeleton"""
        spec = SkeletonWalk(noise=ConstantNoise(0.01))
        u = oracle_expected_uncertainty(spec, pairs=[(1, 8)], n_windows=500, seed=4)
        self.assertGreater(u, 0.008)
        self.assertLess(u, 0.02)

    def test_unsupported(self):
        """Drift, velocity coupling and missing pairs have no oracle"""
        with self.assertRaises(UnsupportedSpec):
            oracle_expected_uncertainty(DriftingScan(drift_per_frame=1e-4))
        with self.assertRaises(UnsupportedSpec):
            oracle_expected_uncertainty(SkeletonWalk(noise=VelocityCoupledNoise(0.001, 0.02)), pairs=[(1, 8)])
        with self.assertRaises(UnsupportedSpec):
            oracle_expected_uncertainty(SkeletonWalk())
        with self.assertRaises(InvalidSpec):
            oracle_expected_uncertainty(StaticScanScenario(n_frames=5), window_size=10)

    def test_mc_propagation(self):
        """Monte Carlo matches the quadrature sum"""
        terms = [SensitivityTerm("a", 1.0, 0.04), SensitivityTerm("b", 2.0, 0.05)]
        expected = math.sqrt(0.04 ** 2 + 0.1 ** 2)
        self.assertAlmostEqual(oracle_mc_propagation(terms, seed=1) / expected, 1.0, delta=0.02)
        self.assertEqual(oracle_mc_propagation(terms, seed=1), oracle_mc_propagation(terms, seed=1))
        self.assertEqual(oracle_mc_propagation([SensitivityTerm("z", 1.0, 0.0)], n_samples=100), 0.0)


if __name__ == '__main__':
    unittest.main()
