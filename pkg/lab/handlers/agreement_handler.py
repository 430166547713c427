# lab/handlers/agreement_handler.py
import logging
import math

import numpy as np

from lab.handlers.base_handler import BaseRunHandler
from lab.services.pde_solver import solve_backward_kolmogorov, solve_pde
from lab.services.random_streams import COUPLING_STREAM, MILD_STREAM, substream
from lab.services.residuals import SmoothBump, bump_battery, mild_residual, weak_form_residual
from lab.services.trait_sde import TransitionDensityProvider, coupled_gap, feynman_kac

logger = logging.getLogger(__name__)

REFINEMENT_FACTOR = 2.0
LIPSCHITZ_GAPS = (0.01, 0.1, 1.0)
LIPSCHITZ_SPREAD = 2.0
LIPSCHITZ_PATHS = 4000
ORDER_DT = 1e-4
ORDER_PATHS = 1000
ORDER_VIOLATION_LIMIT = 1e-3
SUPPORT_TAIL = 1e-8
# dual-solve grid error allowance on top of Monte Carlo noise
DUAL_SOLVE_SLACK = 1e-2
RESIDUAL_FLOOR = 1e-13


def support_bound(traj, tail=SUPPORT_TAIL):
    """Smallest face beyond which every stored state has at most ``tail`` of its mass."""
    bound = 0.0
    for u in traj.states:
        total = u.mass()
        if total <= 0:
            continue
        cumulative = u.cumulative()
        index = int(np.searchsorted(cumulative, (1.0 - tail) * total))
        bound = max(bound, u.faces[min(index, u.n)])
    return bound


class AgreementHandler(BaseRunHandler):
    """Independent solution paths of the same system must agree"""

    kind = "agree"

    def run(self):
        numerics = self.config.numerics
        report = self.new_report(seeds=[self.config.experiment.run_seed])
        c = self._get_coefficients()
        kernel = self._get_kernel()

        fine_config = self.config.with_numerics(dx=numerics.dx / 2.0, dt_pde=numerics.dt_pde / 2.0)
        coarse, fine = self.map_ordered(
            lambda cfg: solve_pde(cfg, coefficients=c, kernel=kernel), [self.config, fine_config])
        report.series["pde"] = coarse.series()
        report.series["pde_fine"] = fine.series()

        self._weak_residuals(coarse, fine, report)
        self._mild_residual(coarse, report)
        self._dual_solve(coarse, report)
        self._semigroup_lipschitz(coarse, report)
        self.resource_bracket_check(coarse.resources, float(coarse.diagnostics["mass"].max()), report, "pde")
        return self.finish(report)

    def _weak_residuals(self, coarse, fine, report):
        c, kernel = self._get_coefficients(), self._get_kernel()
        battery = bump_battery(self.config.numerics.x_max)
        coarse_max = [float(weak_form_residual(coarse, f, c, kernel).max()) for f in battery]
        fine_max = [float(weak_form_residual(fine, f, c, kernel).max()) for f in battery]
        total_coarse, total_fine = sum(coarse_max), sum(fine_max)
        ratio = total_coarse / total_fine if total_fine > RESIDUAL_FLOOR else math.inf
        report.metrics["weak_residual"] = {
            "coarse": coarse_max, "fine": fine_max, "ratio": ratio,
            "bumps": [(f.center, f.width) for f in battery],
        }
        report.checks["weak_residual_refines"] = bool(
            total_coarse <= RESIDUAL_FLOOR or ratio >= REFINEMENT_FACTOR)

    def _mild_residual(self, traj, report):
        numerics = self.config.numerics
        mild = numerics.mild
        t = self.config.diagnostic_time
        upper = support_bound(traj)
        if upper <= 0:
            report.metrics["mild_residual"] = {"residual": 0.0, "budget": 0.0, "n_nodes": 0}
            report.checks["mild_within_budget"] = True
            return
        # output range rounded up to whole cells, inside the solver grid
        dx = numerics.dx
        upper = min(math.ceil(upper / dx) * dx, numerics.x_max)
        provider = TransitionDensityProvider(
            traj.resource_path(), self._get_coefficients(), numerics.dt_sde, mild.paths,
            mild.output_bins, upper, self.config.experiment.run_seed, stream=MILD_STREAM,
            epsilons=numerics.epsilons,
        )
        result = mild_residual(traj, provider, self._get_coefficients(), self._get_kernel(), t,
                               time_nodes=mild.time_nodes, space_nodes=mild.space_nodes,
                               tolerance=mild.tolerance)
        report.metrics["mild_residual"] = result.as_dict()
        report.series["mild"] = {
            "x": result.target.centers, "target": result.target.values, "right_side": result.right_side.values,
        }
        report.checks["mild_within_budget"] = bool(result.within_budget)

    def _dual_solve(self, traj, report):
        """Feynman-Kac against the backward Kolmogorov solve for one bump."""
        numerics = self.config.numerics
        c = self._get_coefficients()
        t = self.config.diagnostic_time
        phi = SmoothBump(1.0, 0.75)
        start = 1.0
        rpath = traj.resource_path()
        rng = substream(self.config.experiment.run_seed, COUPLING_STREAM, len(LIPSCHITZ_GAPS))
        estimate = feynman_kac(phi, start, 0.0, t, rpath, c, numerics.dt_sde, numerics.sde_paths, rng)
        backward = solve_backward_kolmogorov(phi, rpath, c, numerics.x_max, numerics.dx, 0.0, t, numerics.dt_pde)
        dual = float(np.interp(start, backward.centers, backward.values))
        gap = abs(estimate.mean - dual)
        report.metrics["dual_solve"] = {"monte_carlo": estimate.mean, "stderr": estimate.stderr,
                                        "backward": dual, "gap": gap}
        report.checks["dual_solve_agrees"] = bool(gap <= 4.0 * estimate.stderr + DUAL_SOLVE_SLACK)

    def _semigroup_lipschitz(self, traj, report):
        numerics = self.config.numerics
        c = self._get_coefficients()
        rpath = traj.resource_path()
        run_seed = self.config.experiment.run_seed
        start = 1.0
        horizon = min(1.0, self.config.experiment.horizon)

        def gap_for(item):
            index, gap = item
            rng = substream(run_seed, COUPLING_STREAM, index)
            return coupled_gap(start, start + gap, 0.0, horizon, rpath, c, numerics.dt_sde, LIPSCHITZ_PATHS, rng)

        gaps = self.map_ordered(gap_for, list(enumerate(LIPSCHITZ_GAPS)))
        constants = [g.mean / size for g, size in zip(gaps, LIPSCHITZ_GAPS)]
        rng = substream(run_seed, COUPLING_STREAM, len(LIPSCHITZ_GAPS) + 1)
        ordered = coupled_gap(start + 0.1, start, 0.0, horizon, rpath, c, ORDER_DT, ORDER_PATHS, rng)

        report.metrics["semigroup_lipschitz"] = {
            "gaps": list(LIPSCHITZ_GAPS), "constants": constants,
            "order_violation_fraction": ordered.order_violations,
        }
        report.checks["semigroup_lipschitz_stable"] = bool(
            min(constants) > 0 and max(constants) / min(constants) <= LIPSCHITZ_SPREAD)
        report.checks["coupled_order_preserved"] = bool(ordered.order_violations < ORDER_VIOLATION_LIMIT)
