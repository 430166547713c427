# lab/handlers/convergence_handler.py
import logging

import numpy as np
from scipy import stats

from lab.exceptions import ParamOutOfRange
from lab.handlers.base_handler import BaseRunHandler
from lab.services.ibm_simulator import simulate_ibm
from lab.services.measure_metrics import TestDictionary, bl_distance
from lab.services.pde_solver import solve_pde

logger = logging.getLogger(__name__)

# K_max error over K_min error must not exceed this
ERROR_RATIO_LIMIT = 0.5
# the decay-rate fit needs two distinct capacities
MIN_CAPACITIES = 2


class ConvergenceHandler(BaseRunHandler):
    """Large-K sweep: IBM runs against one PDE solve at the snapshot times"""

    kind = "converge"

    def run(self):
        experiment = self.config.experiment
        if len(experiment.k_values) < MIN_CAPACITIES or not experiment.seeds:
            logger.error(f"❌ Convergence sweep got K={experiment.k_values} and {len(experiment.seeds)} seeds")
            raise ParamOutOfRange(
                f"convergence sweep needs at least {MIN_CAPACITIES} values in experiment.k_values "
                f"and one seed, got {len(experiment.k_values)} and {len(experiment.seeds)}"
            )
        if len(experiment.k_values) < 3 or len(experiment.seeds) < 3:
            logger.warning("⚠️ Convergence sweep needs at least 3 capacities and 3 seeds to be meaningful")
        report = self.new_report(seeds=experiment.seeds)
        c = self._get_coefficients()
        kernel = self._get_kernel()
        dictionary = TestDictionary(self.config.numerics.dictionary_size)
        times = list(experiment.snapshot_times) or [experiment.horizon]

        logger.info(f"🔄 Convergence sweep K={experiment.k_values} over {len(experiment.seeds)} seeds")
        pde = solve_pde(self.config, coefficients=c, kernel=kernel)
        jobs = [(k, seed) for k in experiment.k_values for seed in experiment.seeds]
        trajectories = self.map_ordered(
            lambda job: simulate_ibm(self.config, job[1], capacity=job[0], coefficients=c, kernel=kernel),
            jobs,
        )

        rows = {"time": [], "K": [], "seed": [], "bl_distance": [], "resource_error": []}
        for (k, seed), traj in zip(jobs, trajectories):
            for t in times:
                population, resource = traj.snapshot_at(t)
                u, r = pde.at(t)
                rows["time"].append(t)
                rows["K"].append(k)
                rows["seed"].append(seed)
                rows["bl_distance"].append(bl_distance(population.measure(), u, dictionary))
                rows["resource_error"].append(abs(resource - r))
        report.series["pde"] = pde.series()
        report.series["convergence"] = rows
        for k in experiment.k_values:
            report.series[f"ibm_mean_K{k}"] = self._mean_summary(
                [traj for (kk, _), traj in zip(jobs, trajectories) if kk == k])

        table = {name: np.asarray(values) for name, values in rows.items()}
        errors = {}
        for t in times:
            at_t = np.isclose(table["time"], t)
            means = [float(table["bl_distance"][at_t & (table["K"] == k)].mean()) for k in experiment.k_values]
            errors[t] = means
            decreasing = all(b < a for a, b in zip(means, means[1:]))
            report.checks[f"bl_decreasing_t{t:g}"] = decreasing
            report.checks[f"bl_ratio_t{t:g}"] = bool(means[-1] <= ERROR_RATIO_LIMIT * means[0])

        final = np.isclose(table["time"], times[-1])
        resource_means = [
            float(table["resource_error"][final & (table["K"] == k)].mean()) for k in experiment.k_values
        ]
        report.checks["resource_error_decreasing"] = all(
            b < a for a, b in zip(resource_means, resource_means[1:]))

        min_trait = min((float(s.traits.min()) for t in trajectories for s in t.snapshots if s.size),
                        default=0.0)
        report.checks["traits_nonnegative"] = bool(min_trait >= 0.0)
        self.resource_bracket_check(pde.resources, float(pde.diagnostics["mass"].max()), report, "pde")
        ibm_resources = np.concatenate([t.summary.resource for t in trajectories])
        ibm_mass = max(float(t.summary.mass.max()) for t in trajectories)
        self.resource_bracket_check(ibm_resources, ibm_mass, report, "ibm")

        decay = stats.linregress(np.log(experiment.k_values), np.log(np.maximum(errors[times[-1]], 1e-300)))
        report.metrics["bl_error_by_time"] = {f"{t:g}": dict(zip(map(str, experiment.k_values), v))
                                              for t, v in errors.items()}
        report.metrics["resource_error"] = dict(zip(map(str, experiment.k_values), resource_means))
        report.metrics["decay_rate"] = float(decay.slope)
        report.metrics["dictionary"] = dictionary.describe()
        logger.info(f"✅ Convergence decay rate {decay.slope:.3f} in K")
        return self.finish(report)

    @staticmethod
    def _mean_summary(trajectories):
        """Seed average of the per-step summaries."""
        first = trajectories[0].summary
        return {
            "time": first.time,
            "mass": np.mean([t.summary.mass for t in trajectories], axis=0),
            "moment1": np.mean([t.summary.moment1 for t in trajectories], axis=0),
            "resource": np.mean([t.summary.resource for t in trajectories], axis=0),
            "moment2": np.mean([t.summary.moment2 for t in trajectories], axis=0),
        }
