"""
Safety Mapper Tests
"""

import unittest
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.exceptions import ConfigurationError, OutOfRange
from core.safety_mapper import (
    DIRECT_MAPPING,
    RiskModel,
    SafetyLimit,
    check_limit,
    distance_constraint_probability,
    map_to_pfh,
)


class TestPFHMapping(unittest.TestCase):
    """Test the uncertainty to PFH identification"""

    def test_identity(self):
        """Relative uncertainty reads directly as failures per hour"""
        self.assertEqual(map_to_pfh(9e-5), 9e-5)
        self.assertEqual(map_to_pfh(0.0), 0.0)
        self.assertEqual(map_to_pfh(1e-6), 1e-6)

    def test_out_of_range(self):
        """Not a fraction"""
        for value in (-1e-9, 1.5):
            with self.assertRaises(OutOfRange):
                map_to_pfh(value)


class TestVerdict(unittest.TestCase):
    """Test limit checks"""

    def setUp(self):
        """Set up test environment"""
        self.model = RiskModel(l_bio=1.0)
        self.limit = SafetyLimit()

    def test_exceeds_by_two_orders(self):
        """0.009% against 1e-6/h fails by about two orders"""
        verdict = check_limit(9e-5, self.model, self.limit)
        self.assertFalse(verdict.passed)
        self.assertGreater(verdict.margin_orders, -2.05)
        self.assertLess(verdict.margin_orders, -1.90)
        self.assertEqual(verdict.mapping, DIRECT_MAPPING)

    def test_boundary_passes(self):
        """r equal to lambda passes"""
        verdict = check_limit(1e-6, self.model, self.limit)
        self.assertTrue(verdict.passed)
        self.assertEqual(verdict.margin_orders, 0.0)

    def test_zero_passes(self):
        """No uncertainty, no margin"""
        verdict = check_limit(0.0, self.model, SafetyLimit(lam=1e-9))
        self.assertTrue(verdict.passed)
        self.assertIsNone(verdict.margin_orders)
        self.assertNotIn("margin_orders", verdict.to_dict())

    def test_monotone(self):
        """Larger u_C never turns a failure into a pass"""
        previous = True
        for k in range(40):
            passed = check_limit(k * 1e-7, self.model, self.limit).passed
            self.assertFalse(passed and not previous)
            previous = passed

    def test_margin_scale_invariance(self):
        """Rescaling r and lambda together keeps the margin"""
        a = check_limit(3e-5, RiskModel(l_bio=1.0), SafetyLimit(lam=1e-6))
        b = check_limit(3e-5, RiskModel(l_bio=10.0), SafetyLimit(lam=1e-5))
        self.assertAlmostEqual(a.margin_orders, b.margin_orders, places=12)

    def test_risk_and_dict(self):
        """Severity scales the risk; report keys"""
        verdict = check_limit(2e-7, RiskModel(l_bio=2.0, severity_constant=3.0), self.limit)
        self.assertAlmostEqual(verdict.r, 4e-7)
        self.assertAlmostEqual(verdict.risk, 1.2e-6)

        data = verdict.to_dict()
        self.assertIs(data["pass"], True)
        self.assertEqual(data["lambda"], 1e-6)
        self.assertEqual(data["label"], "ISO 13849 PFH_max")
        self.assertIn("margin_orders", data)

    def test_unmapped_r(self):
        """r above 1 is reported without the identification"""
        with self.assertLogs("core.safety_mapper", level="WARNING"):
            verdict = check_limit(0.5, RiskModel(l_bio=4.0), self.limit)
        self.assertEqual(verdict.pfh, 2.0)
        self.assertFalse(verdict.passed)

    def test_invalid_configuration(self):
        """Non-positive parameters are rejected"""
        with self.assertRaises(ConfigurationError):
            RiskModel(l_bio=0.0)
        with self.assertRaises(ConfigurationError):
            RiskModel(l_bio=1.0, severity_constant=-1.0)
        with self.assertRaises(ConfigurationError):
            SafetyLimit(lam=0.0)


class TestDistanceConstraint(unittest.TestCase):
    """Test the Gaussian distance constraint"""

    def test_examples(self):
        """Centre, degenerate and two-sigma cases"""
        self.assertAlmostEqual(distance_constraint_probability(0.5, 0.01, 0.5), 0.5)
        self.assertEqual(distance_constraint_probability(0.6, 0.0, 0.5), 0.0)
        self.assertEqual(distance_constraint_probability(0.4, 0.0, 0.5), 1.0)
        self.assertAlmostEqual(distance_constraint_probability(0.52, 0.01, 0.5), 0.02275, places=5)

    def test_monotone(self):
        """Decreasing in distance, increasing in u_d beyond d_min"""
        probabilities = [distance_constraint_probability(0.5 + 0.01 * k, 0.02, 0.5) for k in range(10)]
        self.assertTrue(all(a >= b for a, b in zip(probabilities, probabilities[1:])))

        widening = [distance_constraint_probability(0.6, 0.01 * k, 0.5) for k in range(1, 10)]
        self.assertTrue(all(a <= b for a, b in zip(widening, widening[1:])))

    def test_negative_uncertainty(self):
        """u_d must be non-negative"""
        with self.assertRaises(OutOfRange):
            distance_constraint_probability(0.6, -0.01, 0.5)


if __name__ == '__main__':
    unittest.main()
