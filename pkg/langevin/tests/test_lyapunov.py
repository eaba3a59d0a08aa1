import numpy as np
from django.test import SimpleTestCase

from langevin.dynamics import ModelParams, State
from langevin.exceptions import ConfigurationError
from langevin.lyapunov import (
    LyapunovParams,
    calibrate_envelope,
    dissipativity_check,
    drift_check,
    drift_constant,
    generator_apply_V,
    gronwall_envelope,
    lyapunov_bounds_check,
    lyapunov_value,
    quadratic_sandwich_check,
    stationary_log_density,
    stationary_moments,
)
from langevin.objective import CosinePerturbedQuadratic, QuadraticWell


def finite_difference_generator(p, lp, obj, m, x, h=1e-5):
    """𝒜V por diferencias centradas sobre V."""
    def V(mm, xx):
        return float(lyapunov_value(p, lp, obj, State(mm, xx)))

    basis = np.eye(len(m))
    grad_m = np.array([(V(m + h * e, x) - V(m - h * e, x)) / (2 * h) for e in basis])
    grad_x = np.array([(V(m, x + h * e) - V(m, x - h * e)) / (2 * h) for e in basis])
    k = 1e-3
    laplacian = sum((V(m + k * e, x) - 2 * V(m, x) + V(m - k * e, x)) / k ** 2 for e in basis)
    drift = p.gamma * m + obj.grad(x)
    return -grad_m @ drift + grad_x @ m + 0.5 * p.beta ** 2 * laplacian


class LyapunovValueTests(SimpleTestCase):
    def test_example_value(self):
        p = ModelParams(2.0, 1.0)
        value = lyapunov_value(p, LyapunovParams(0.25, 0.0), QuadraticWell(1), State([1.0], [0.0]))
        self.assertAlmostEqual(float(value), 0.5, places=14)

    def test_zero_at_origin(self):
        p = ModelParams(5.0, 1.0, dim=3)
        lp = LyapunovParams.default(QuadraticWell(3).constants, 5.0)
        self.assertEqual(float(lyapunov_value(p, lp, QuadraticWell(3), State(np.zeros(3), np.zeros(3)))), 0.0)

    def test_generator_at_origin(self):
        p = ModelParams(5.0, 0.8, dim=2)
        lp = LyapunovParams.default(QuadraticWell(2).constants, 5.0)
        value = generator_apply_V(p, lp, QuadraticWell(2), State(np.zeros(2), np.zeros(2)))
        self.assertAlmostEqual(float(value), 2 * 0.8 ** 2 / 2, places=14)

    def test_generator_matches_finite_differences(self):
        p = ModelParams(5.0, 1.0, dim=2)
        rng = np.random.default_rng(0)
        for obj in (QuadraticWell(2), CosinePerturbedQuadratic(2, amplitude=0.4)):
            lp = LyapunovParams.default(obj.constants, p.gamma)
            for _ in range(5):
                m, x = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
                exact = float(generator_apply_V(p, lp, obj, State(m, x)))
                numeric = finite_difference_generator(p, lp, obj, m, x)
                self.assertLess(abs(exact - numeric), 1e-5 * max(1.0, abs(exact)))


class LyapunovParamsTests(SimpleTestCase):
    def test_default_lambda(self):
        lp = LyapunovParams.default(QuadraticWell(1).constants, 5.0)
        self.assertAlmostEqual(lp.lam, 1 / 29)
        self.assertEqual(lp.ring_a, 0.0)

    def test_lambda_above_maximum_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            LyapunovParams(0.3, 0.0).validate(QuadraticWell(1).constants, 5.0)

    def test_ring_a_below_minimum_is_rejected(self):
        constants = CosinePerturbedQuadratic(1, amplitude=0.2).constants
        with self.assertRaises(ConfigurationError):
            LyapunovParams(0.01, 0.0).validate(constants, 5.0)

    def test_drift_constant(self):
        self.assertAlmostEqual(drift_constant(ModelParams(5.0, 1.0), LyapunovParams(0.1, 2.0), 3), 6.5)


class DriftCheckTests(SimpleTestCase):
    def test_default_parameters_satisfy_drift(self):
        for dim in (1, 4):
            for obj in (QuadraticWell(dim), CosinePerturbedQuadratic(dim, amplitude=0.3)):
                p = ModelParams(5.0, 1.0, dim=dim)
                lp = LyapunovParams.default(obj.constants, p.gamma)
                report = drift_check(p, lp, obj, sample_count=10000, radius=10.0, seed=dim)
                self.assertTrue(report.passed, report.violating_points[:3])
                self.assertEqual(report.points, 10000)

    def test_lower_bounds_hold(self):
        obj = CosinePerturbedQuadratic(2, amplitude=0.3)
        p = ModelParams(5.0, 1.0, dim=2)
        report = lyapunov_bounds_check(p, LyapunovParams.default(obj.constants, 5.0), obj, 10000, 10.0)
        self.assertTrue(report.passed)

    def test_dissipativity_chain(self):
        obj = QuadraticWell(2)
        p = ModelParams(5.0, 1.0, dim=2)
        self.assertTrue(dissipativity_check(obj, LyapunovParams.default(obj.constants, 5.0), p, 2000, 10.0).passed)

    def test_oversized_lambda_breaks_dissipativity_chain(self):
        obj = QuadraticWell(2)
        report = dissipativity_check(obj, LyapunovParams(0.9, 0.0), ModelParams(5.0, 1.0, dim=2), 2000, 10.0)
        check = report.get('dissipativity_lyapunov')
        self.assertFalse(check.passed)
        self.assertIn('x', check.witness)
        self.assertTrue(report.get('dissipativity_lower').passed)

    def test_quadratic_sandwich(self):
        for obj in (QuadraticWell(2), CosinePerturbedQuadratic(2, amplitude=0.1)):
            self.assertTrue(quadratic_sandwich_check(obj, 5000, 20.0).passed)


class StationaryTests(SimpleTestCase):
    def test_log_density_example(self):
        value = stationary_log_density(ModelParams(5.0, 1.0), QuadraticWell(1), State([1.0], [0.0]))
        self.assertAlmostEqual(float(value), -5.0, places=14)

    def test_zero_temperature_has_no_density(self):
        with self.assertRaises(ConfigurationError):
            stationary_log_density(ModelParams(5.0, 0.0), QuadraticWell(1), State([1.0], [0.0]))

    def test_quadratic_moments(self):
        moments = stationary_moments(ModelParams(5.0, 1.0), QuadraticWell(1))
        self.assertAlmostEqual(moments['var_m'], 0.1)
        self.assertAlmostEqual(moments['var_x'], 0.1)

    def test_vanishing_perturbation_recovers_quadratic(self):
        moments = stationary_moments(ModelParams(5.0, 1.0), CosinePerturbedQuadratic(1, amplitude=1e-9))
        self.assertAlmostEqual(moments['var_x'], 0.1, places=6)

    def test_perturbation_narrows_position_law(self):
        moments = stationary_moments(ModelParams(5.0, 1.0), CosinePerturbedQuadratic(1, amplitude=0.5))
        self.assertLess(moments['var_x'], 0.1)


class EnvelopeTests(SimpleTestCase):
    def test_calibrated_envelope_covers_its_trace(self):
        times = np.linspace(0, 10, 101)
        means = 3.0 * np.exp(-0.5 * times) + 0.4 * (1 - np.exp(-2 * times))
        envelope = calibrate_envelope(times, means, v0=3.0, rate=0.5, dim=2)
        self.assertEqual(envelope.violations(times, means, factor=1 + 1e-12).size, 0)
        self.assertGreaterEqual(envelope.c_hat * 2, means[-1] - 1e-12)

    def test_gronwall_envelope_limits(self):
        p = ModelParams(5.0, 1.0)
        lp = LyapunovParams(0.1, 0.0)
        envelope = gronwall_envelope(p, lp, v0=2.0, dim=1)
        self.assertAlmostEqual(float(envelope.bound(0.0)), 2.0)
        self.assertAlmostEqual(float(envelope.bound(1e3)), 0.5 / 0.5)
