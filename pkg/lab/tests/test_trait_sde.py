# lab/tests/test_trait_sde.py
import math

import numpy as np
from django.test import SimpleTestCase, tag
from scipy import stats

from lab.exceptions import FamilyNotDifferentiable
from lab.services.coefficients import custom_coefficients
from lab.services.trait_sde import (
    ResourcePath,
    TransitionDensityProvider,
    comparison_cdf,
    coupled_gap,
    density_from_samples,
    feynman_kac,
    integrate_trait,
    moment_envelope,
    simulate_comparison_z,
    weighted_feynman_kac,
)
from lab.tests.helpers import coefficients_for, shipped_config


def pure_drift(speed=1.0):
    return custom_coefficients(
        zeta=lambda x, r: speed + 0.0 * x * r,
        diff=lambda x, r: 0.0 * x * r,
        birth=lambda x, r: 0.0 * x * r,
        death=lambda x: 1.0 + 0.0 * x,
        chi=lambda x, r: 0.0 * x * r,
        r_in=1.0, x_max=8.0, r_bar=1.0,
    )


class ResourcePathTest(SimpleTestCase):
    def test_interpolates(self):
        path = ResourcePath(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        self.assertAlmostEqual(path.at(0.25), 0.75)
        self.assertEqual(ResourcePath.constant(0.4, 2.0).at(1.7), 0.4)

    def test_rejects_bad_paths(self):
        with self.assertRaises(ValueError):
            ResourcePath(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        with self.assertRaises(ValueError):
            ResourcePath(np.array([0.0, 1.0]), np.array([1.0, -0.1]))


class TraitPathTest(SimpleTestCase):
    def setUp(self):
        self.c = coefficients_for(shipped_config('reference'))
        self.rpath = ResourcePath.constant(1.0, 2.0)

    def test_paths_are_reproducible_and_nonnegative(self):
        a = integrate_trait(0.0, 0.0, 1.0, self.rpath, self.c, 1e-2, np.random.default_rng(5), n_paths=500)
        b = integrate_trait(0.0, 0.0, 1.0, self.rpath, self.c, 1e-2, np.random.default_rng(5), n_paths=500)
        np.testing.assert_array_equal(a.values, b.values)
        self.assertGreaterEqual(float(a.values.min()), 0.0)
        self.assertTrue(np.all(a.running_max >= a.values))

    def test_recorded_path(self):
        ensemble = integrate_trait(1.0, 0.0, 0.1, self.rpath, self.c, 0.01, np.random.default_rng(0),
                                   n_paths=3, record_path=True)
        self.assertEqual(ensemble.path.shape, (11, 3))
        np.testing.assert_array_equal(ensemble.path[-1], ensemble.values)

    def test_interval_checks(self):
        with self.assertRaises(ValueError):
            integrate_trait(1.0, 1.0, 1.0, self.rpath, self.c, 0.01, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            integrate_trait(-1.0, 0.0, 1.0, self.rpath, self.c, 0.01, np.random.default_rng(0))

    def test_moment_envelope(self):
        ensembles = [
            integrate_trait(x0, 0.0, 1.0, self.rpath, self.c, 1e-2, np.random.default_rng(i), n_paths=2000)
            for i, x0 in enumerate((0.0, 1.0, 4.0))
        ]
        constant, ratios = moment_envelope(ensembles, 2)
        self.assertEqual(len(ratios), 3)
        self.assertEqual(constant, ratios.max())
        self.assertTrue(np.isfinite(constant))

    def test_coupled_paths_keep_order(self):
        gap = coupled_gap(1.1, 1.0, 0.0, 1.0, self.rpath, self.c, 1e-4, 200, np.random.default_rng(9))
        self.assertLess(gap.order_violations, 1e-3)
        self.assertGreater(gap.mean, 0.0)

    def test_coupled_gap_is_symmetric(self):
        forward = coupled_gap(1.3, 0.7, 0.0, 0.5, self.rpath, self.c, 1e-2, 300, np.random.default_rng(2))
        backward = coupled_gap(0.7, 1.3, 0.0, 0.5, self.rpath, self.c, 1e-2, 300, np.random.default_rng(2))
        self.assertEqual(forward.mean, backward.mean)
        self.assertEqual(forward.order_violations, backward.order_violations)

    def test_coupled_gap_vanishes_on_the_diagonal(self):
        gap = coupled_gap(0.9, 0.9, 0.0, 0.5, self.rpath, self.c, 1e-2, 300, np.random.default_rng(3))
        self.assertEqual(gap.mean, 0.0)
        self.assertEqual(gap.stderr, 0.0)
        self.assertEqual(gap.order_violations, 0.0)


class FeynmanKacTest(SimpleTestCase):
    def test_deterministic_flow(self):
        c = pure_drift(1.0)
        estimate = feynman_kac(lambda x: x ** 2, 0.5, 0.0, 1.0, ResourcePath.constant(1.0), c, 1e-2, 10,
                               np.random.default_rng(0))
        self.assertAlmostEqual(estimate.mean, 2.25, places=10)
        self.assertAlmostEqual(estimate.stderr, 0.0)

    def test_identity_with_noise(self):
        # far from the wall, E[X_1] = x + zeta * 1
        c = custom_coefficients(
            zeta=lambda x, r: 1.0 + 0.0 * x * r,
            diff=lambda x, r: 0.1 + 0.0 * x * r,
            birth=lambda x, r: 0.0 * x * r,
            death=lambda x: 1.0 + 0.0 * x,
            chi=lambda x, r: 0.0 * x * r,
            r_in=1.0, x_max=8.0, r_bar=1.0,
        )
        estimate = feynman_kac(lambda x: x, 3.0, 0.0, 1.0, ResourcePath.constant(1.0), c, 1e-2, 20_000,
                               np.random.default_rng(6))
        self.assertGreater(estimate.stderr, 0.0)
        self.assertLess(abs(estimate.mean - 4.0), 4.0 * estimate.stderr)

    def test_weighted_needs_derivatives(self):
        with self.assertRaises(FamilyNotDifferentiable):
            weighted_feynman_kac(np.cos, 1.0, 0.0, 1.0, ResourcePath.constant(1.0), pure_drift(), 1e-2, 10,
                                 np.random.default_rng(0))

    def test_weighted_reduces_without_drift_slope(self):
        # zeta does not depend on x here, so the exponential weight is 1
        c = coefficients_for(shipped_config('reference'))
        rpath = ResourcePath.constant(1.0, 1.0)
        estimate = weighted_feynman_kac(lambda x: np.ones_like(x), 1.0, 0.0, 1.0, rpath, c, 1e-2, 100,
                                        np.random.default_rng(0))
        self.assertAlmostEqual(estimate.mean, 1.0, places=12)


class ComparisonProcessTest(SimpleTestCase):
    def test_cdf(self):
        self.assertEqual(float(comparison_cdf(0.0, 1.0, 1.0)), 0.0)
        self.assertAlmostEqual(float(comparison_cdf(2.0, 0.5, 4.0)), 1.0 - math.exp(-1.0))

    def test_rejects_nonpositive_rate(self):
        with self.assertRaises(ValueError):
            simulate_comparison_z(0.0, 1.0, 0.0, 10, 1e-2, np.random.default_rng(0))

    @tag('slow')
    def test_exponential_law_from_zero(self):
        z = simulate_comparison_z(1.0, 1.0, 0.0, 100_000, 1e-3, np.random.default_rng(2024))
        ks = stats.kstest(z.values, lambda y: comparison_cdf(y, 1.0, 1.0))
        self.assertLess(ks.statistic, 0.02)
        self.assertLess(float(np.mean(z.values <= 1e-4)), 5e-4)


class TransitionDensityTest(SimpleTestCase):
    def test_histogram_normalization(self):
        samples = np.concatenate([np.full(10, 0.0005), np.linspace(0.01, 3.99, 980), np.full(10, 5.0)])
        estimate = density_from_samples(samples, 40, 4.0)
        self.assertAlmostEqual(estimate.density.mass(), 1.0)
        self.assertAlmostEqual(estimate.tail_mass, 0.01)
        self.assertAlmostEqual(estimate.below_eps[1e-3], 0.01)
        self.assertAlmostEqual(float(estimate.probabilities().sum()), 0.99)
        self.assertEqual(estimate.bin_width, 0.1)
        self.assertTrue(np.all(estimate.bin_sd() >= 0.0))

    def test_too_few_bins(self):
        from lab.services.trait_sde import estimate_transition_density
        c = coefficients_for(shipped_config('reference'))
        with self.assertRaises(ValueError):
            estimate_transition_density(1.0, 0.0, 1.0, ResourcePath.constant(1.0), c, 1e-2, 10, 5,
                                        np.random.default_rng(0))

    def test_provider_is_order_independent(self):
        c = coefficients_for(shipped_config('reference'))
        provider = TransitionDensityProvider(ResourcePath.constant(1.0), c, 1e-2, 500, 20, 4.0, run_seed=11)
        first = provider(1.0, 0.0, 0.5, node=3)
        provider(2.0, 0.0, 0.5, node=0)
        again = provider(1.0, 0.0, 0.5, node=3)
        np.testing.assert_array_equal(first.counts, again.counts)
        self.assertEqual(first.n_paths, 500)
