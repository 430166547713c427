# lab/tests/test_measure_metrics.py
import numpy as np
from django.test import SimpleTestCase

from lab.services.initial_conditions import InitialLaw
from lab.services.measure_metrics import (
    EmpiricalMeasure,
    TestDictionary,
    bl_distance,
    moments,
    smooth_ramp,
    tail_mass,
)


class DictionaryTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.dictionary = TestDictionary(64)

    def test_composition(self):
        self.assertEqual(len(self.dictionary), 64)
        names = [member.name for member in self.dictionary]
        self.assertEqual(names[0], 'const')
        self.assertEqual(names[1], 'ramp(a=0.5,w=0.5)')
        self.assertEqual(len(set(names)), 64)
        self.assertEqual(self.dictionary.describe()['size'], 64)

    def test_small_dictionary(self):
        self.assertEqual(len(TestDictionary(4)), 4)
        with self.assertRaises(ValueError):
            TestDictionary(1)

    def test_distance_is_a_pseudometric(self):
        rng = np.random.default_rng(11)
        mus = [EmpiricalMeasure(rng.exponential(1.0, 300), 300) for _ in range(3)]
        d = lambda a, b: bl_distance(a, b, self.dictionary)  # noqa: E731
        self.assertEqual(d(mus[0], mus[0]), 0.0)
        self.assertAlmostEqual(d(mus[0], mus[1]), d(mus[1], mus[0]), places=14)
        self.assertLessEqual(d(mus[0], mus[2]), d(mus[0], mus[1]) + d(mus[1], mus[2]) + 1e-14)

    def test_dirac_masses(self):
        a, b = EmpiricalMeasure([1.0], 1), EmpiricalMeasure([1.3], 1)
        distance = bl_distance(a, b, self.dictionary)
        self.assertGreater(distance, 0.0)
        self.assertLessEqual(distance, 0.3 + 1e-12)

    def test_empirical_against_density_shrinks(self):
        law = InitialLaw('truncated_gaussian', 1.0, mean=1.0, std=0.25)
        density = law.density(640, 16.0)
        rng = np.random.default_rng(12)
        small = EmpiricalMeasure(law.sample(rng, 100), 100)
        large = EmpiricalMeasure(law.sample(rng, 10_000), 10_000)
        self.assertLess(bl_distance(large, density, self.dictionary), bl_distance(small, density, self.dictionary))

    def test_mass_difference_is_seen(self):
        mu = EmpiricalMeasure([1.0, 2.0], 2)
        nu = EmpiricalMeasure([1.0, 2.0], 4)
        # the constant 1/2 sees half the mass gap
        self.assertGreaterEqual(bl_distance(mu, nu, self.dictionary), 0.25)


class MomentsTest(SimpleTestCase):
    def test_moments(self):
        mu = EmpiricalMeasure([1.0, 2.0], 2)
        self.assertAlmostEqual(moments(mu, 2), 3.5)
        self.assertAlmostEqual(moments(mu, 0), 2.0)
        self.assertEqual(mu.mass(), 1.0)
        self.assertEqual(EmpiricalMeasure([], 5).integrate(np.exp), 0.0)

    def test_capacity_must_be_positive(self):
        with self.assertRaises(ValueError):
            EmpiricalMeasure([1.0], 0)

    def test_smooth_ramp(self):
        np.testing.assert_allclose(smooth_ramp([0.0, 0.5, 1.0, 3.0]), [0.0, 0.0, 1.0, 1.0])
        self.assertAlmostEqual(float(smooth_ramp(0.75)), 0.5)
        h = 1e-6
        self.assertAlmostEqual(float((smooth_ramp(1.0 + h) - smooth_ramp(1.0 - h)) / (2 * h)), 0.0, places=4)

    def test_tail_mass(self):
        mu = EmpiricalMeasure([0.1, 5.0], 2)
        self.assertAlmostEqual(tail_mass(mu, 2.0), 0.5)
        with self.assertRaises(ValueError):
            tail_mass(mu, 0)
