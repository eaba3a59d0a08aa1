import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from langevin.choices import NoiseKind
from langevin.exceptions import ArgumentError, ConfigurationError, DomainError
from langevin.objective import (
    CosinePerturbedQuadratic,
    GradNoiseModel,
    QuadraticWell,
    build_objective,
    declare_constants,
    grad_f,
    loss_sample,
    minibatch_grad,
    stoch_grad,
    verify_assumptions,
)

coordinates = st.floats(min_value=-50, max_value=50, allow_nan=False)


class ObjectiveTests(SimpleTestCase):
    def test_quadratic_constants_are_exact(self):
        obj = QuadraticWell(3, scale=2.0)
        c = obj.constants
        self.assertEqual((c.L, c.a, c.b, c.A, c.B), (2.0, 2.0, 0.0, 0.0, 0.0))
        self.assertEqual(c.K, 0.0)

    def test_cosine_constants(self):
        obj = CosinePerturbedQuadratic(2, scale=1.0, amplitude=0.1)
        c = obj.constants
        self.assertAlmostEqual(c.L, 1.1)
        self.assertAlmostEqual(c.a, 0.95)
        self.assertAlmostEqual(c.b, 0.1 * 2 * 2.1)
        self.assertAlmostEqual(c.B2, 0.1)

    def test_cosine_amplitude_must_stay_below_scale(self):
        with self.assertRaises(ConfigurationError):
            CosinePerturbedQuadratic(1, scale=1.0, amplitude=1.0)

    def test_value_is_zero_at_minimizer(self):
        for obj in (QuadraticWell(2), CosinePerturbedQuadratic(2)):
            self.assertEqual(float(obj.value(obj.minimizer())), 0.0)

    def test_gradient_matches_finite_differences(self):
        obj = CosinePerturbedQuadratic(3, scale=1.0, amplitude=0.4)
        x = np.array([0.3, -1.2, 2.5])
        h = 1e-6
        numeric = np.array([(obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(grad_f(obj, x), numeric, rtol=1e-6, atol=1e-8)

    def test_hessian_matches_finite_differences(self):
        obj = CosinePerturbedQuadratic(2, scale=1.5, amplitude=0.7)
        x = np.array([0.8, -2.0])
        h = 1e-6
        numeric = np.array([(obj.grad(x + h * e) - obj.grad(x - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(obj.hessian(x), numeric, rtol=1e-6, atol=1e-8)

    def test_non_finite_point_is_rejected(self):
        with self.assertRaises(DomainError):
            grad_f(QuadraticWell(2), np.array([np.nan, 0.0]))

    def test_wrong_dimension_is_rejected(self):
        with self.assertRaises(ArgumentError):
            grad_f(QuadraticWell(2), np.zeros(3))


class StochasticGradientTests(SimpleTestCase):
    def setUp(self):
        self.obj = QuadraticWell(2)
        self.noise = GradNoiseModel(scale=0.5)

    def test_single_draw_batch_equals_stochastic_gradient(self):
        x = np.array([1.0, -2.0])
        xi = np.array([[0.3, 0.7]])
        np.testing.assert_array_equal(minibatch_grad(self.obj, self.noise, x, xi),
                                      stoch_grad(self.obj, self.noise, x, xi[0]))

    def test_zero_draws_give_exact_gradient(self):
        x = np.array([1.0, -2.0])
        np.testing.assert_array_equal(minibatch_grad(self.obj, self.noise, x, np.zeros((5, 2))), grad_f(self.obj, x))

    def test_empty_batch_is_rejected(self):
        with self.assertRaises(ArgumentError):
            minibatch_grad(self.obj, self.noise, np.zeros(2), np.zeros((0, 2)))

    def test_loss_sample_gradient_is_stochastic_gradient(self):
        obj = CosinePerturbedQuadratic(2, amplitude=0.3)
        x, xi = np.array([0.4, 1.1]), np.array([-0.8, 0.2])
        h = 1e-6
        numeric = np.array([(loss_sample(obj, self.noise, x + h * e, xi) - loss_sample(obj, self.noise, x - h * e, xi))
                            / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(stoch_grad(obj, self.noise, x, xi), numeric, rtol=1e-6, atol=1e-8)

    def test_stochastic_gradient_is_unbiased(self):
        noise = GradNoiseModel(scale=1.0)
        x = np.array([1.0, -2.0])
        xi = noise.sample(np.random.default_rng(11), (10 ** 6, 2))
        mean = stoch_grad(self.obj, noise, x, xi).mean(axis=0)
        np.testing.assert_allclose(mean, grad_f(self.obj, x), rtol=0, atol=5e-3)

    def test_empirical_noise_second_moment(self):
        noise = GradNoiseModel(scale=1.0)
        x = np.array([1.0, -2.0])
        xi = noise.sample(np.random.default_rng(12), (10 ** 6, 2))
        deviation = stoch_grad(self.obj, noise, x, xi) - grad_f(self.obj, x)
        self.assertAlmostEqual(math.sqrt(np.mean(np.sum(deviation ** 2, axis=1))), math.sqrt(2), delta=0.01)

    def test_student_t_empirical_second_moment_matches_closed_form(self):
        noise = GradNoiseModel(NoiseKind.STUDENT_T, scale=1.0, dof=9.0)
        xi = noise.sample(np.random.default_rng(13), (10 ** 6, 2))
        empirical = math.sqrt(np.mean(np.sum(noise.noise(xi) ** 2, axis=1)))
        self.assertAlmostEqual(empirical, noise.moment_bound(2, 2), delta=0.01 * noise.moment_bound(2, 2))

    def test_minibatch_variance_shrinks_with_batch_size(self):
        noise = GradNoiseModel(scale=1.0)
        x = np.array([1.0, -2.0])
        batch = noise.sample(np.random.default_rng(14), (10 ** 5, 10, 2))
        error = minibatch_grad(self.obj, noise, x, batch) - grad_f(self.obj, x)
        self.assertAlmostEqual(np.mean(np.sum(error ** 2, axis=1)), 2 / 10, delta=0.05 * 2 / 10)

    def test_gaussian_second_moment_is_sigma_root_d(self):
        self.assertAlmostEqual(GradNoiseModel(scale=2.0).moment_bound(2, 4), 4.0, places=12)

    def test_student_t_second_moment(self):
        noise = GradNoiseModel(NoiseKind.STUDENT_T, scale=1.0, dof=9.0)
        self.assertAlmostEqual(noise.moment_bound(2, 3), math.sqrt(3 * 9 / 7), places=12)

    def test_student_t_needs_more_dof_than_high_moment(self):
        noise = GradNoiseModel(NoiseKind.STUDENT_T, scale=1.0, dof=4.5)
        with self.assertRaises(ConfigurationError):
            declare_constants(QuadraticWell(1), noise, qp=5.0)

    def test_zero_noise_has_zero_moments(self):
        obj = build_objective('quadratic_well', 2, noise=GradNoiseModel(scale=0.0))
        self.assertEqual((obj.constants.A0, obj.constants.A0p), (0.0, 0.0))


class VerifyAssumptionsTests(SimpleTestCase):
    def test_exact_constants_pass(self):
        for kind in ('quadratic_well', 'cosine_perturbed_quadratic'):
            noise = GradNoiseModel(scale=1.0)
            obj = build_objective(kind, 2, amplitude=0.3, noise=noise)
            report = verify_assumptions(obj, noise, sample_count=4000, radius=10.0, seed=3)
            self.assertTrue(report.passed, [c.as_dict() for c in report.failures])

    def test_student_t_constants_pass(self):
        noise = GradNoiseModel(NoiseKind.STUDENT_T, scale=0.5, dof=9.0)
        obj = build_objective('quadratic_well', 3, noise=noise)
        report = verify_assumptions(obj, noise, sample_count=4000, radius=5.0, seed=1)
        self.assertTrue(report.get('gradient_noise_moment').passed)
        self.assertTrue(report.get('gradient_noise_high_moment').passed)

    def test_understated_smoothness_is_reported_with_witness(self):
        noise = GradNoiseModel(scale=1.0)
        obj = build_objective('cosine_perturbed_quadratic', 2, noise=noise, L=0.5)
        report = verify_assumptions(obj, noise, sample_count=500, radius=10.0)
        smoothness = report.get('smoothness')
        self.assertFalse(smoothness.passed)
        self.assertLess(smoothness.worst_margin, 0)
        self.assertIn('x', smoothness.witness)
        self.assertIn('y', smoothness.witness)

    def test_grid_scan_respects_lipschitz_constant(self):
        obj = CosinePerturbedQuadratic(1, scale=1.0, amplitude=0.6)
        grid = np.linspace(-20, 20, 20001)[:, None]
        slopes = np.abs(np.diff(obj.grad(grid)[:, 0])) / np.diff(grid[:, 0])
        self.assertLessEqual(slopes.max(), obj.constants.L + 1e-9)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(coordinates, min_size=2, max_size=2), st.lists(coordinates, min_size=2, max_size=2))
    def test_cosine_dissipativity_holds_for_any_pair(self, x, y):
        obj = CosinePerturbedQuadratic(2, scale=1.0, amplitude=0.5)
        x, y = np.array(x), np.array(y)
        c = obj.constants
        inner = float(np.dot(x - y, obj.grad(x) - obj.grad(y)))
        self.assertGreaterEqual(inner - c.a * float(np.dot(x - y, x - y)) + c.b, -1e-9 * (1 + abs(inner)))
