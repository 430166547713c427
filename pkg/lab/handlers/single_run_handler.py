# lab/handlers/single_run_handler.py
import logging
import math

import numpy as np

from lab.handlers.base_handler import BaseRunHandler
from lab.services.coefficients import validate_coefficients
from lab.services.fragmentation import fragmentation_identities
from lab.services.ibm_simulator import mass_moment_track, simulate_ibm
from lab.services.measure_metrics import TestDictionary
from lab.services.pde_solver import solve_pde

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-12
FRAGMENTATION_MASS_TOL = 1e-8
DUALITY_GAP_TOL = 1e-6
DUAL_IDENTITY_TOL = 1e-12


class ValidationHandler(BaseRunHandler):
    kind = "validate"

    def run(self):
        report = self.new_report()
        c = self._get_coefficients()
        numerics = self.config.numerics

        validation = validate_coefficients(c, numerics.x_max, self.config.r_bar,
                                           grid_n=numerics.validation_grid)
        for entry in validation.entries:
            if entry.severity == "error":
                report.checks[entry.assumption] = entry.passed
        report.metrics["validation"] = validation.as_dict()
        report.metrics["warnings"] = [e.assumption for e in validation.warnings()]

        kernel = self._get_kernel()
        identities = fragmentation_identities(kernel)
        report.metrics["kernel"] = kernel.describe()
        report.metrics["fragmentation"] = identities
        report.checks["fragmentation_mass"] = identities["mass_defect"] <= FRAGMENTATION_MASS_TOL
        report.checks["fragmentation_dual_identity"] = identities["dual_of_identity"] <= DUAL_IDENTITY_TOL
        report.checks["fragmentation_duality"] = identities["duality_gap"] <= DUALITY_GAP_TOL

        dictionary = TestDictionary(numerics.dictionary_size)
        report.metrics["dictionary"] = dictionary.describe()

        logger.info(f"🔄 Validated {c.family}: c_lower={validation.c_lower:.4g}")
        return self.finish(report)


class IbmRunHandler(BaseRunHandler):
    kind = "simulate_ibm"

    def run(self):
        experiment = self.config.experiment
        jobs = [(k, seed) for k in experiment.k_values for seed in experiment.seeds]
        report = self.new_report(seeds=experiment.seeds)
        c = self._get_coefficients()
        kernel = self._get_kernel()

        trajectories = self.map_ordered(
            lambda job: simulate_ibm(self.config, job[1], capacity=job[0], coefficients=c, kernel=kernel),
            jobs,
        )

        min_trait = math.inf
        resources = []
        masses = []
        for (k, seed), traj in zip(jobs, trajectories):
            report.series[f"ibm_K{k}_seed{seed}"] = traj.series()
            resources.append(traj.summary.resource)
            masses.append(traj.summary.mass)
            for snap in traj.snapshots:
                if snap.size:
                    min_trait = min(min_trait, float(snap.traits.min()))

        report.checks["traits_nonnegative"] = bool(min_trait >= 0.0)
        all_masses = np.concatenate(masses)
        self.resource_bracket_check(np.concatenate(resources), float(all_masses.max()), report, "ibm")

        # expected-mass envelope <nu_0, 1> e^{|b| T} at each K
        horizon = experiment.horizon
        envelope = self.config.initial.mass * math.exp(c.bounds.birth_sup * horizon)
        per_k = {}
        for k in experiment.k_values:
            finals = np.array([t.summary.mass[-1] for (kk, _), t in zip(jobs, trajectories) if kk == k])
            stderr = float(finals.std(ddof=1) / math.sqrt(len(finals))) if len(finals) > 1 else 0.0
            moments = [float(mass_moment_track(t, 1).max()) for (kk, _), t in zip(jobs, trajectories) if kk == k]
            per_k[str(k)] = {
                "mean_final_mass": float(finals.mean()),
                "stderr": stderr,
                "sup_first_moment": max(moments),
                "births": int(sum(t.summary.births.sum() for (kk, _), t in zip(jobs, trajectories) if kk == k)),
                "deaths": int(sum(t.summary.deaths.sum() for (kk, _), t in zip(jobs, trajectories) if kk == k)),
            }
            report.checks[f"mass_envelope_K{k}"] = bool(finals.mean() <= envelope + 3.0 * stderr)
        report.metrics["per_k"] = per_k
        report.metrics["mass_envelope"] = envelope
        report.metrics["min_trait"] = min_trait if math.isfinite(min_trait) else None
        return self.finish(report)


class PdeRunHandler(BaseRunHandler):
    kind = "solve_pde"

    def run(self):
        report = self.new_report()
        c = self._get_coefficients()
        traj = solve_pde(self.config, coefficients=c, kernel=self._get_kernel())
        report.series["pde"] = traj.series()

        mass = traj.diagnostics["mass"]
        report.metrics["final_mass"] = float(mass[-1])
        report.metrics["final_resource"] = float(traj.resources[-1])
        report.metrics["max_tail_mass"] = float(traj.diagnostics["tail_mass"].max())
        report.metrics["clipped_mass"] = float(traj.diagnostics["clipped_mass"].sum())
        report.metrics["courant"] = traj.metadata["courant"]
        report.metrics["scheme"] = traj.scheme
        report.checks["density_nonnegative"] = bool(all(u.values.min() >= 0.0 for u in traj.states))
        self.resource_bracket_check(traj.resources, float(mass.max()), report, "pde")

        if c.bounds.birth_sup == 0 and c.bounds.death_sup == 0 and c.bounds.chi_sup == 0:
            drift = abs(mass[-1] - mass[0]) / max(mass[0], np.finfo(float).tiny)
            report.metrics["mass_drift_per_time"] = drift / self.config.experiment.horizon
            report.checks["mass_conserved"] = bool(drift / self.config.experiment.horizon <= MASS_TOLERANCE)
        return self.finish(report)
