# lab/tests/test_residuals.py
import math

import numpy as np
from django.test import SimpleTestCase, tag

from lab.handlers.agreement_handler import support_bound
from lab.services.grid_function import GridFunction
from lab.services.pde_solver import PdeTrajectory, solve_pde
from lab.services.residuals import (
    SmoothBump,
    bump_battery,
    mild_residual,
    start_nodes,
    weak_form_residual,
)
from lab.services.trait_sde import ResourcePath, TransitionDensityProvider
from lab.tests.helpers import coefficients_for, kernel_for, shipped_config, shortened


class SmoothBumpTest(SimpleTestCase):
    def test_derivatives_match_differences(self):
        bump = SmoothBump(1.0, 0.5, amplitude=2.0)
        x = np.linspace(0.55, 1.45, 19)
        h = 1e-6
        np.testing.assert_allclose(bump.derivative(x), (bump(x + h) - bump(x - h)) / (2 * h), atol=1e-5)
        np.testing.assert_allclose(bump.second_derivative(x),
                                   (bump.derivative(x + h) - bump.derivative(x - h)) / (2 * h), atol=1e-4)

    def test_support(self):
        bump = SmoothBump(2.0, 0.5)
        self.assertEqual(bump.support, (1.5, 2.5))
        self.assertEqual(float(bump(1.5)), 0.0)
        self.assertEqual(float(bump(3.0)), 0.0)
        self.assertAlmostEqual(float(bump(2.0)), 1.0)
        with self.assertRaises(ValueError):
            SmoothBump(1.0, 0.0)

    def test_battery_inside_domain(self):
        for bump in bump_battery(16.0):
            low, high = bump.support
            self.assertGreater(low, 0.0)
            self.assertLess(high, 8.0)


class WeakResidualTest(SimpleTestCase):
    def test_reaction_free_residual_is_small(self):
        config = shortened('reaction_free', 0.2)
        c, kernel = coefficients_for(config), kernel_for(config)
        traj = solve_pde(config, c, kernel)
        bump = SmoothBump(1.0, 0.45)
        residual = weak_form_residual(traj, bump, c, kernel)
        self.assertEqual(residual[0], 0.0)
        self.assertEqual(len(residual), len(traj.times))
        self.assertLess(float(residual.max()), 1e-3)


class StartNodesTest(SimpleTestCase):
    def test_masses_add_up(self):
        grid = GridFunction.from_function(lambda x: np.exp(-((x - 2.0) / 0.5) ** 2), 200, 8.0)
        nodes = start_nodes(grid, 16)
        self.assertLessEqual(len(nodes), 16)
        self.assertAlmostEqual(sum(mass for mass, _ in nodes), grid.mass(), places=8)
        locations = [location for _, location in nodes]
        self.assertEqual(locations, sorted(locations))

    def test_signed_and_empty_grids(self):
        self.assertEqual(start_nodes(GridFunction.zeros(10, 1.0), 4), [])
        signed = GridFunction(np.array([1.0, -1.0, 0.0, 0.0]), 1.0)
        nodes = start_nodes(signed, 2)
        self.assertAlmostEqual(sum(mass for mass, _ in nodes), 0.0)


class MildResidualTest(SimpleTestCase):
    def test_zero_state_has_zero_residual(self):
        config = shipped_config('reference')
        c, kernel = coefficients_for(config), kernel_for(config)
        zero = GridFunction.zeros(40, 4.0)
        traj = PdeTrajectory(
            times=np.array([0.0, 1.0]), states=[zero, zero], resources=np.array([1.0, 1.0]),
            diagnostics={}, scheme='imex_heun', dt=1.0,
        )
        provider = TransitionDensityProvider(ResourcePath.constant(1.0), c, 1e-2, 100, 20, 4.0, run_seed=1)
        result = mild_residual(traj, provider, c, kernel, 1.0, time_nodes=2, space_nodes=4)
        self.assertEqual(result.residual, 0.0)
        self.assertEqual(result.n_nodes, 0)
        self.assertTrue(result.within_budget)
        self.assertEqual(set(result.as_dict()), {'residual', 'mc_error', 'histogram_bias',
                                                 'quadrature_bound', 'budget', 'n_nodes'})

    @tag('slow')
    def test_reaction_free_within_budget(self):
        config = shortened('reaction_free', 1.0)
        c, kernel = coefficients_for(config), kernel_for(config)
        traj = solve_pde(config, c, kernel)
        dx = config.numerics.dx
        upper = math.ceil(support_bound(traj) / dx) * dx
        mild = config.numerics.mild
        provider = TransitionDensityProvider(traj.resource_path(), c, config.numerics.dt_sde, mild.paths,
                                             mild.output_bins, upper, config.experiment.run_seed)
        result = mild_residual(traj, provider, c, kernel, 1.0, time_nodes=mild.time_nodes,
                               space_nodes=mild.space_nodes, tolerance=mild.tolerance)
        self.assertTrue(result.within_budget, result.as_dict())
        self.assertEqual(result.quadrature_bound, 0.0)
