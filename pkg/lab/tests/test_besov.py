# lab/tests/test_besov.py
import math

import numpy as np
from django.test import SimpleTestCase

from lab.exceptions import HTooSmallForGrid, ParamOutOfRange
from lab.services.besov import (
    HolderBump,
    WeierstrassPartialSum,
    besov_norm,
    default_h_grid,
    delta_m_h,
    density_criterion_slope,
    density_criterion_statistic,
    difference_l1,
    gaussian_derivative_l1,
    holder_difference_constant,
    lambda_max,
    predicted_exponents,
    smoothness_exponent,
)
from lab.services.grid_function import GridFunction
from lab.services.residuals import SmoothBump


class DifferenceOperatorTest(SimpleTestCase):
    def test_polynomials_are_annihilated(self):
        x = np.linspace(-2.0, 2.0, 41)
        for m in range(1, 5):
            coefficients = np.arange(1.0, m + 1.0)
            poly = np.polynomial.Polynomial(coefficients)  # degree m - 1
            for method in ('binomial', 'recursive'):
                with self.subTest(m=m, method=method):
                    values = delta_m_h(poly, m, 0.5, x=x, method=method)
                    np.testing.assert_allclose(values, 0.0, atol=1e-9)

    def test_first_difference_of_linear(self):
        values = delta_m_h(lambda x: 3.0 * x, 1, 0.25, x=np.array([0.0, 1.0]))
        np.testing.assert_allclose(values, [0.75, 0.75])

    def test_grid_methods_agree(self):
        f = GridFunction.from_function(lambda x: np.exp(-x) * np.sin(3 * x) ** 2, 200, 4.0)
        for m in (1, 2, 3):
            with self.subTest(m=m):
                np.testing.assert_allclose(delta_m_h(f, m, 0.1, method='binomial'),
                                           delta_m_h(f, m, 0.1, method='recursive'), atol=1e-12)

    def test_grid_output_covers_support(self):
        f = GridFunction(np.ones(10), 1.0)
        out = delta_m_h(f, 2, 0.2)
        # pad of m * 2 cells on each side
        self.assertEqual(len(out), 10 + 2 * 4)
        self.assertAlmostEqual(float(out.sum()), 0.0)
        self.assertAlmostEqual(difference_l1(f, 1, 0.2), 2 * 0.2)

    def test_adjoint_identity(self):
        x = np.arange(-1000, 5001) * 1e-3
        f, g = SmoothBump(1.5, 0.6), SmoothBump(2.0, 0.8)
        for m in (1, 2, 3):
            with self.subTest(m=m):
                left = float(np.sum(delta_m_h(f, m, 0.05, x=x) * g(x))) * 1e-3
                right = float(np.sum(f(x) * delta_m_h(g, m, -0.05, x=x))) * 1e-3
                self.assertLessEqual(abs(left - right), 1e-8)

    def test_bad_arguments(self):
        with self.assertRaises(ValueError):
            delta_m_h(np.sin, 0, 0.1, x=np.zeros(2))
        with self.assertRaises(ValueError):
            delta_m_h(np.sin, 1, 0.1)
        with self.assertRaises(ValueError):
            delta_m_h(np.sin, 1, 0.1, x=np.zeros(2), method='forward')


class SmoothnessFitTest(SimpleTestCase):
    def test_indicator_has_slope_one(self):
        f = GridFunction.from_function(lambda x: ((x > 1.0) & (x < 3.0)).astype(float), 400, 8.0)
        profile = smoothness_exponent(f, 1)
        self.assertAlmostEqual(profile.slope, 1.0, places=6)
        self.assertGreater(profile.ci[0], 0.0)
        self.assertAlmostEqual(profile.r_squared, 1.0, places=8)

    def test_smooth_function_second_order(self):
        f = GridFunction.from_function(lambda x: np.exp(-((x - 4.0) / 0.7) ** 2), 1600, 8.0)
        profile = smoothness_exponent(f, 2, h_grid=np.geomspace(0.2, 0.02, 8))
        self.assertGreater(profile.slope, 1.8)

    def test_shift_floor(self):
        f = GridFunction.from_function(np.exp, 100, 1.0)
        with self.assertRaises(HTooSmallForGrid):
            smoothness_exponent(f, 1, h_grid=[0.5, 0.1, 0.015])
        with self.assertRaises(HTooSmallForGrid):
            default_h_grid(0.3)

    def test_besov_norm(self):
        f = GridFunction.from_function(lambda x: ((x > 1.0) & (x < 3.0)).astype(float), 400, 8.0)
        norm = besov_norm(f, 0.5, 1)
        self.assertGreater(norm, 2.0)
        self.assertTrue(math.isfinite(norm))
        with self.assertRaises(ValueError):
            besov_norm(f, 1.0, 1)


class PredictedExponentsTest(SimpleTestCase):
    def test_closed_form_for_first_order(self):
        for alpha in (0.01, 0.05, 0.1, 0.2, 0.3):
            with self.subTest(alpha=alpha):
                exponents = predicted_exponents(alpha, 1.0, 1, 0)
                self.assertAlmostEqual(exponents.s, alpha * (1 - 3 * alpha) / (2 + 3 * alpha), places=14)
                self.assertAlmostEqual(exponents.total, alpha + exponents.s)

    def test_lambda_max(self):
        alpha, value = lambda_max()
        self.assertAlmostEqual(value, (5.0 - 2.0 * math.sqrt(6.0)) / 3.0, delta=1e-10)
        self.assertAlmostEqual(predicted_exponents(alpha, 1.0, 1, 0).s, value, delta=1e-10)

    def test_constant_c_alpha_k(self):
        self.assertEqual(predicted_exponents(0.2, 1.0, 2, 3).c_alpha_k, 1.0)
        self.assertEqual(predicted_exponents(0.2, 1.0, 2, 0).c_alpha_k, 0.2)

    def test_out_of_range(self):
        for args in ((0.0, 1.0, 1, 0), (1.0, 1.0, 1, 0), (0.4, 1.0, 1, 0), (0.1, 0.0, 1, 0), (0.1, 1.0, 1, -1)):
            with self.subTest(args=args):
                with self.assertRaises(ParamOutOfRange):
                    predicted_exponents(*args)


class GaussianDerivativeTest(SimpleTestCase):
    def test_first_derivative(self):
        for sigma in (0.1, 1.0, 10.0):
            with self.subTest(sigma=sigma):
                expected = math.sqrt(2.0 / math.pi) / sigma
                self.assertLessEqual(abs(gaussian_derivative_l1(1, sigma) - expected) / expected, 1e-8)

    def test_scaling(self):
        for m in (1, 2, 3):
            scaled = [gaussian_derivative_l1(m, sigma) * sigma ** m for sigma in (0.1, 1.0, 10.0)]
            with self.subTest(m=m):
                self.assertLessEqual(max(scaled) - min(scaled), 1e-6 * max(scaled))

    def test_bad_arguments(self):
        with self.assertRaises(ValueError):
            gaussian_derivative_l1(0, 1.0)


class HolderFamilyTest(SimpleTestCase):
    def test_difference_bound(self):
        x = np.linspace(-3.0, 3.0, 6001)
        for phi in (HolderBump(0.0, 0.3), WeierstrassPartialSum(0.5, terms=6)):
            for m in (1, 2):
                for h in (0.3, 0.01, 0.001):
                    with self.subTest(phi=type(phi).__name__, m=m, h=h):
                        worst = float(np.abs(delta_m_h(phi, m, h, x=x)).max())
                        self.assertLessEqual(worst, holder_difference_constant(m) * h ** phi.alpha * phi.norm)

    def test_criterion_statistic(self):
        samples = np.random.default_rng(5).exponential(1.0, 5000)
        phi = HolderBump(1.0, 0.2)
        statistic = density_criterion_statistic(samples, np.sqrt, phi, 0.2, 1, 0.05)
        self.assertEqual(statistic.n, 5000)
        self.assertGreaterEqual(statistic.normalized, 0.0)
        with self.assertRaises(ValueError):
            density_criterion_statistic(np.empty(0), np.sqrt, phi, 0.2, 1, 0.05)

    def test_criterion_slope_for_a_smooth_density(self):
        samples = np.random.default_rng(6).gamma(4.0, 0.25, 50_000)
        # bump sits in the decreasing tail, so the statistic keeps one sign over the h-grid
        slope = density_criterion_slope(samples, np.sqrt, HolderBump(3.0, 0.2), 1, np.geomspace(0.5, 0.05, 6),
                                        50, np.random.default_rng(7))
        self.assertEqual(len(slope.statistics), 6)
        self.assertLessEqual(slope.ci[0], slope.ci[1])
        self.assertGreater(slope.slope, 0.2)
