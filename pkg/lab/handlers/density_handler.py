# lab/handlers/density_handler.py
import logging
import math

import numpy as np
from scipy import stats

from lab.handlers.base_handler import BaseRunHandler
from lab.services.besov import (
    HolderBump,
    besov_norm,
    density_criterion_slope,
    gaussian_derivative_l1,
    lambda_max,
    predicted_exponents,
    smoothness_exponent,
)
from lab.services.coefficients import validate_coefficients
from lab.services.pde_solver import solve_pde
from lab.services.random_streams import DENSITY_STREAM, substream
from lab.services.trait_sde import (
    comparison_cdf,
    density_from_samples,
    integrate_trait,
    simulate_comparison_z,
)

logger = logging.getLogger(__name__)

KS_LIMIT = 0.02
ATOM_EPS = 1e-4
ATOM_LIMIT = 5e-4
ATOM_CHECK_EPS = 1e-3
ATOM_CHECK_LIMIT = 1e-3
CRITERION_SHIFTS = np.geomspace(0.5, 0.02, 8)
BOOTSTRAP_ROUNDS = 200
DIFFERENCE_ORDER = 1


class DensityHandler(BaseRunHandler):
    """Smoothing diagnostics: Besov slopes, atoms at zero, comparison process"""

    kind = "diagnose_density"

    def run(self):
        numerics = self.config.numerics
        report = self.new_report(seeds=[self.config.experiment.run_seed])
        c = self._get_coefficients()
        t = self.config.diagnostic_time

        validation = validate_coefficients(c, numerics.x_max, self.config.r_bar, grid_n=numerics.validation_grid)
        c_lower = validation.c_lower
        report.checks["lower_bound_holds"] = validation.entry("lower_bound").passed
        report.metrics["c_lower"] = c_lower

        alpha_star, lam = lambda_max()
        predicted = predicted_exponents(alpha_star, 1.0, DIFFERENCE_ORDER, 0)
        report.metrics["lambda_max"] = {"alpha": alpha_star, "value": lam}
        report.metrics["predicted"] = predicted.as_dict()

        traj = solve_pde(self.config, coefficients=c, kernel=self._get_kernel())
        report.series["pde"] = traj.series()
        u_t, r_t = traj.at(t)
        weighted = u_t.with_values(np.sqrt(np.maximum(c.diff_at(u_t.centers, r_t), 0.0)) * u_t.values)

        h_grid = numerics.h_grid
        profile_u = smoothness_exponent(weighted, DIFFERENCE_ORDER, h_grid)
        report.metrics["weighted_density_profile"] = profile_u.as_dict()
        report.metrics["weighted_density_besov"] = besov_norm(weighted, predicted.s, DIFFERENCE_ORDER, h_grid)
        report.checks["density_is_function"] = bool(np.isfinite(report.metrics["weighted_density_besov"]))
        report.checks["smoothing_above_floor"] = bool(profile_u.ci[1] >= predicted.s)
        report.checks["smoothness_exponent_positive"] = bool(profile_u.ci[0] > 0.0)

        start = self._start_point()
        rng = substream(self.config.experiment.run_seed, DENSITY_STREAM)
        ensemble = integrate_trait(start, 0.0, t, traj.resource_path(), c, numerics.dt_sde, rng,
                                   n_paths=numerics.sde_paths)
        estimate = density_from_samples(ensemble.values, numerics.density_bins, numerics.x_max,
                                        numerics.epsilons)
        report.metrics["transition_below_eps"] = estimate.below_eps
        report.metrics["transition_tail_mass"] = estimate.tail_mass
        if estimate.below_eps:
            atom_eps = ATOM_CHECK_EPS if ATOM_CHECK_EPS in estimate.below_eps else min(estimate.below_eps)
            report.checks["no_atom_at_zero"] = bool(estimate.below_eps[atom_eps] < ATOM_CHECK_LIMIT)
        try:
            report.metrics["transition_profile"] = smoothness_exponent(
                estimate.density, DIFFERENCE_ORDER, h_grid).as_dict()
        except ValueError as e:
            logger.warning(f"⚠️ Transition density profile skipped: {e}")
        report.series["density"] = {
            "x": u_t.centers, "u": u_t.values, "weighted": weighted.values,
        }
        report.series["transition_density"] = {
            "x": estimate.density.centers, "density": estimate.density.values,
        }

        atom_u = float(u_t.integrate(lambda x: (x <= numerics.epsilons[-1]).astype(float)))
        report.metrics["density_mass_near_zero"] = atom_u

        if c_lower > 0:
            self._comparison_process(c_lower, t, estimate, report)

        phi = HolderBump(start, alpha_star, scale=1.0)
        slope = density_criterion_slope(
            ensemble, lambda x: np.sqrt(np.maximum(c.diff_at(x, r_t), 0.0)) ** DIFFERENCE_ORDER,
            phi, DIFFERENCE_ORDER, CRITERION_SHIFTS, BOOTSTRAP_ROUNDS,
            substream(self.config.experiment.run_seed, DENSITY_STREAM, 1),
        )
        report.metrics["density_criterion"] = slope.as_dict()
        report.checks["criterion_slope_at_least_alpha"] = bool(slope.ci[1] >= alpha_star)

        report.metrics["gaussian_l1_scaled"] = {
            str(m): [gaussian_derivative_l1(m, sigma) * sigma ** m for sigma in (0.1, 1.0, 10.0)]
            for m in (1, 2, 3)
        }
        return self.finish(report)

    def _start_point(self):
        initial = self.config.initial
        if initial.shape == "point":
            return initial.x0
        if initial.shape == "truncated_gaussian":
            return max(initial.mean, 0.0)
        return float(np.mean([x for x, _ in initial.profile]))

    def _comparison_process(self, c_lower, t, estimate, report):
        numerics = self.config.numerics
        rng = substream(self.config.experiment.run_seed, DENSITY_STREAM, 2)
        z = simulate_comparison_z(c_lower, t, 0.0, numerics.sde_paths, numerics.dt_sde, rng)
        ks = stats.kstest(z.values, lambda y: comparison_cdf(y, c_lower, t))
        atom = float(np.mean(z.values <= ATOM_EPS))
        report.metrics["comparison"] = {"ks_statistic": float(ks.statistic), "atom_mass": atom,
                                        "mean": float(z.values.mean()), "expected_mean": c_lower * t}
        report.checks["comparison_law"] = bool(ks.statistic < KS_LIMIT)
        report.checks["comparison_no_atom"] = bool(atom < ATOM_LIMIT)

        # excess of P(X_t <= eps) over the comparison law, reported only
        n = estimate.n_paths
        worst = 0.0
        for eps, observed in estimate.below_eps.items():
            bound = float(comparison_cdf(eps, c_lower, t))
            allowance = bound + 3.0 * math.sqrt(max(bound * (1.0 - bound), 1.0 / n) / n)
            worst = max(worst, observed - allowance)
        report.metrics["transition_atom_excess"] = worst
