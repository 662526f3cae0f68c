"""
Propagation Tests
"""

import math
import unittest
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import (
    CoincidentPositions,
    ConfigurationError,
    EmptyTerms,
    MixedConfidence,
    OutOfRange,
)
from core.models import SensitivityTerm
from core.propagation import (
    ConstantAbsolute,
    ConstantRelative,
    LinearInRange,
    PropagationMode,
    RunningAverage,
    TypeBRegistry,
    TypeBSpec,
    attribute_to_joint,
    average_estimates,
    combine,
    hr_distance,
    hr_distance_breakdown,
    hr_distance_combined,
    hr_distance_uncertainty,
    human_position_uncertainty,
    isolate_type_a,
    relative_discrepancy,
    split_detection,
    type_b_eval,
    type_b_fraction,
    type_b_term,
)
from core.stats_engine import UncertaintyEstimate

GUM = PropagationMode.GUM_SQUARED
KINECT = TypeBSpec("kinect", LinearInRange(8e-4, -1e-4), valid_range=(0.1, 4.5))


def estimate(u, relative=None, confidence=0.95, spec_id="s", window_id=0):
    return UncertaintyEstimate(
        u=u, confidence=confidence, interval=(u / 2, u * 2), relative=relative,
        spec_id=spec_id, window_id=window_id, point_estimate=u,
    )


class TestTypeB(unittest.TestCase):
    """Test Type B models"""

    def test_linear_model(self):
        """Kinect depth model at 2 m"""
        self.assertAlmostEqual(type_b_eval(KINECT, 2.0), 0.0015, delta=1e-15)

    def test_constant_models(self):
        """Absolute and relative models"""
        ur10e = TypeBSpec("ur10e", ConstantAbsolute(0.1e-3))
        self.assertEqual(type_b_eval(ur10e, 0.0), 0.0001)
        self.assertEqual(type_b_eval(ur10e, 3.7), 0.0001)

        realsense = TypeBSpec("realsense", ConstantRelative(0.02))
        self.assertAlmostEqual(type_b_eval(realsense, 3.0), 0.06)

    def test_linear_clamps_below_crossover(self):
        """Negative evaluations clamp to 0 with a warning"""
        with self.assertLogs("core.propagation", level="WARNING"):
            self.assertEqual(type_b_eval(KINECT, 0.1), 0.0)

    def test_linear_is_affine(self):
        """Midpoint evaluation is the mean of the endpoints"""
        mid = type_b_eval(KINECT, 2.5)
        ends = (type_b_eval(KINECT, 1.0) + type_b_eval(KINECT, 4.0)) / 2
        self.assertAlmostEqual(mid, ends, places=15)

    def test_out_of_range(self):
        """Operating point outside the data-sheet range"""
        with self.assertRaises(OutOfRange):
            type_b_eval(KINECT, 5.0)

    def test_relative_fraction(self):
        """Relative value of a source, independent of its units"""
        self.assertEqual(type_b_fraction(TypeBSpec("lidar", ConstantRelative(0.02)), 4.0), 0.02)
        self.assertEqual(type_b_fraction(TypeBSpec("lidar", ConstantRelative(0.02))), 0.02)
        self.assertAlmostEqual(type_b_fraction(KINECT, 2.0), 0.00075, delta=1e-15)
        with self.assertRaises(ConfigurationError):
            type_b_fraction(TypeBSpec("ur10e", ConstantAbsolute(1e-4)))

    def test_term_and_registry(self):
        """Registry lookups produce sensitivity terms"""
        registry = TypeBRegistry([
            TypeBSpec("ur10e", ConstantAbsolute(1e-4), sensitivity=2.0),
            TypeBSpec("kinect", LinearInRange(8e-4, -1e-4), operating_point=2.0),
        ])
        self.assertEqual(len(registry), 2)
        self.assertIn("kinect", registry)
        terms = registry.terms(["ur10e", "kinect"])
        self.assertEqual(terms[0].contribution, 2e-4)
        self.assertAlmostEqual(terms[1].u, 0.0015, delta=1e-15)

        with self.assertRaises(ConfigurationError):
            registry.get("missing")
        with self.assertRaises(ConfigurationError):
            TypeBRegistry([TypeBSpec("a", ConstantAbsolute(1.0)), TypeBSpec("a", ConstantAbsolute(2.0))])
        with self.assertRaises(ConfigurationError):
            type_b_term(TypeBSpec("rel", ConstantRelative(0.02)))


class TestCombine(unittest.TestCase):
    """Test combined standard uncertainty"""

    def test_as_printed(self):
        """Square root of the summed contributions"""
        self.assertAlmostEqual(combine([SensitivityTerm("a", 1.0, 0.04)]), 0.2, places=15)
        terms = [SensitivityTerm("a", 1.0, 0.04), SensitivityTerm("b", 1.0, 0.05)]
        self.assertAlmostEqual(combine(terms), 0.3, places=15)

    def test_gum_squared(self):
        """Quadrature sum"""
        terms = [SensitivityTerm("a", 1.0, 0.04), SensitivityTerm("b", 1.0, 0.05)]
        self.assertAlmostEqual(combine(terms, GUM), math.sqrt(0.0041), places=15)

    def test_monotone(self):
        """Adding a positive contribution increases u_C"""
        terms = [SensitivityTerm("a", 1.0, 0.04)]
        self.assertGreater(combine(terms + [SensitivityTerm("b", 0.5, 1e-6)]), combine(terms))

    def test_empty(self):
        """No terms, no combination"""
        with self.assertRaises(EmptyTerms):
            combine([])

    def test_split_detection(self):
        """Multiplicative detection term"""
        self.assertEqual(split_detection(0.0038, 1.0, 0.0, 1.0).contribution, 0.0)
        self.assertAlmostEqual(split_detection(0.0038, 1.0, 0.0038, 1.0).contribution, 1.444e-5, places=18)
        self.assertEqual(split_detection(0.003, 2.0, 1.0, 1.0).contribution, 0.006)
        self.assertEqual(split_detection(0.1, 1.0, 0.2, 1.0).symbol, "det")
        with self.assertRaises(OutOfRange):
            split_detection(-0.1, 1.0, 0.1, 1.0)

    def test_human_position(self):
        """Detection term plus environmental terms"""
        det = SensitivityTerm("det", 1.0, 0.0001)
        self.assertAlmostEqual(human_position_uncertainty(det).u, 0.01, places=15)
        self.assertEqual(
            human_position_uncertainty(det, [SensitivityTerm("rho", 1.0, 0.0)]).u,
            human_position_uncertainty(det).u,
        )

        position = human_position_uncertainty(
            SensitivityTerm("det", 1.0, 0.04), [SensitivityTerm("rho", 1.0, 0.05)]
        )
        self.assertAlmostEqual(position.u, 0.3, places=15)
        self.assertEqual(position.u, combine(position.components))
        self.assertAlmostEqual(position.u_cross_check, math.sqrt(0.0041), places=15)

        with self.assertRaises(EmptyTerms):
            human_position_uncertainty(None)


class TestDistance(unittest.TestCase):
    """Test human-robot distance formulas"""

    def test_distance(self):
        """Euclidean distance examples"""
        self.assertEqual(hr_distance((1, 0, 0), (0, 0, 0)), 1.0)
        self.assertEqual(hr_distance((2, 3, 4), (2, 3, 4)), 0.0)
        self.assertAlmostEqual(hr_distance((1, 2, 3), (0, 0, 0)), math.sqrt(14))

    def test_distance_is_metric(self):
        """Symmetry, non-negativity and triangle inequality on random triples"""
        rng = np.random.default_rng(4)
        for _ in range(50):
            a, b, c = rng.normal(size=(3, 3))
            self.assertEqual(hr_distance(a, b), hr_distance(b, a))
            self.assertGreaterEqual(hr_distance(a, b), 0.0)
            self.assertLessEqual(hr_distance(a, c), hr_distance(a, b) + hr_distance(b, c) + 1e-12)

    def test_distance_uncertainty(self):
        """Summed direction cosines times the summed position uncertainties"""
        u = hr_distance_uncertainty((1, 1, 1), (0, 0, 0), 0.01, 0.001)
        self.assertAlmostEqual(u / (0.011 * math.sqrt(3)), 1.0, delta=1e-12)
        self.assertEqual(hr_distance_uncertainty((1, 2, 0), (0, 0, 0), 0.0, 0.0), 0.0)

    def test_signed_prefactor(self):
        """Cancelling components warn; negative prefactors keep an absolute variant"""
        with self.assertLogs("core.propagation", level="WARNING"):
            self.assertEqual(hr_distance_uncertainty((1, -1, 0), (0, 0, 0), 0.01, 0.001), 0.0)

        breakdown = hr_distance_breakdown((0, 0, 0), (1, 1, 1), 0.01, 0.001)
        self.assertLess(breakdown.u, 0.0)
        self.assertAlmostEqual(breakdown.u_abs, -breakdown.u)

    def test_coincident(self):
        """Zero distance has no gradient"""
        with self.assertRaises(CoincidentPositions):
            hr_distance_uncertainty((1, 1, 1), (1, 1, 1), 0.01, 0.001)

    def test_combined_form(self):
        """Unit-sensitivity combination of both positions"""
        self.assertAlmostEqual(hr_distance_combined(0.01, 0.001), math.sqrt(0.011))
        self.assertAlmostEqual(hr_distance_combined(0.01, 0.001, GUM), math.sqrt(1e-4 + 1e-6))


class TestEstimateArithmetic(unittest.TestCase):
    """Test averaging and Type A isolation"""

    def test_average(self):
        """Arithmetic mean with provenance"""
        averaged = average_estimates([estimate(8e-5, 8e-5, spec_id="a"), estimate(1.5e-4, 1.5e-4, spec_id="b")])
        self.assertAlmostEqual(averaged.u, 1.15e-4)
        self.assertAlmostEqual(averaged.relative, 1.15e-4)
        self.assertEqual(averaged.provenance, ("a@0", "b@0"))
        self.assertEqual(averaged.estimator, "average")

        single = estimate(0.01)
        self.assertIs(average_estimates([single]), single)
        self.assertAlmostEqual(average_estimates([estimate(0.01)] * 3).u, 0.01)

    def test_average_errors(self):
        """Mixed confidence levels and empty input"""
        with self.assertRaises(MixedConfidence):
            average_estimates([estimate(0.01), estimate(0.01, confidence=0.9)])
        with self.assertRaises(EmptyTerms):
            average_estimates([])

    def test_running_average(self):
        """Streaming average matches the batch average"""
        estimates = [estimate(u, u / 4, spec_id="pooled", window_id=k) for k, u in enumerate((0.01, 0.02, 0.04))]
        running = RunningAverage()
        for e in estimates:
            running.add(e)
        streamed, batch = running.result(), average_estimates(estimates)
        self.assertAlmostEqual(streamed.u, batch.u, delta=1e-15)
        self.assertAlmostEqual(streamed.relative, batch.relative, delta=1e-15)
        self.assertAlmostEqual(streamed.interval[1], batch.interval[1], delta=1e-15)
        self.assertEqual(streamed.spec_id, "pooled")
        self.assertEqual(streamed.provenance, ("pooled@0..pooled@2",))

        single = RunningAverage()
        single.add(estimates[0])
        self.assertIs(single.result(), estimates[0])
        with self.assertRaises(MixedConfidence):
            single.add(estimate(0.01, confidence=0.9))
        self.assertEqual(single.count, 1)
        with self.assertRaises(EmptyTerms):
            RunningAverage().result()

    def test_isolate_inverts_combine(self):
        """Removing Type B terms recovers the Type A part"""
        type_b = [SensitivityTerm("lidar", 1.0, 0.002), SensitivityTerm("air", 2.0, 0.001)]
        for mode in PropagationMode:
            total = combine([SensitivityTerm("A", 1.0, 0.003)] + type_b, mode)
            self.assertAlmostEqual(isolate_type_a(total, type_b, mode), 0.003, places=12)

    def test_isolate_clamps(self):
        """Type B larger than the total clamps to 0"""
        with self.assertLogs("core.propagation", level="WARNING"):
            self.assertEqual(isolate_type_a(0.001, [SensitivityTerm("b", 1.0, 0.01)], GUM), 0.0)

    def test_relative_discrepancy(self):
        """Experimental versus reference value"""
        self.assertAlmostEqual(relative_discrepancy(0.0012, 0.001), 0.2)
        self.assertEqual(relative_discrepancy(0.001, 0.001), 0.0)
        with self.assertRaises(OutOfRange):
            relative_discrepancy(0.001, 0.0)

    def test_attribute_to_joint(self):
        """Equal share gives u / sqrt(2)"""
        self.assertAlmostEqual(attribute_to_joint(0.02), 0.02 / math.sqrt(2))
        self.assertEqual(attribute_to_joint(0.02, share=1.0), 0.02)
        with self.assertRaises(OutOfRange):
            attribute_to_joint(0.02, share=0.0)


if __name__ == '__main__':
    unittest.main()
