# lab/handlers/base_handler.py
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from lab.config.lab_config import LabConfig
from lab.services.coefficients import build_coefficients
from lab.services.kernels import FragmentationKernel
from lab.services.pde_solver import resource_bracket
from lab.services.persistence import ExperimentReport

logger = logging.getLogger(__name__)

RESOURCE_BRACKET_SLACK = 1e-6


class BaseRunHandler:
    """Shared plumbing: lazy coefficients and kernel, ordered fan-out, report shell"""

    kind = None

    def __init__(self, config, config_path="", threads=None):
        self.config = config
        self.config_path = str(config_path)
        self.threads = threads or LabConfig.get_default_threads()
        self._coefficients = None
        self._kernel = None
        self._started = None

    def _get_coefficients(self):
        if self._coefficients is None:
            numerics = self.config.numerics
            self._coefficients = build_coefficients(self.config.model, numerics.x_max, self.config.r_bar)
        return self._coefficients

    def _get_kernel(self):
        if self._kernel is None:
            self._kernel = FragmentationKernel.from_config(self.config.kernel, self.config.numerics.n_quad)
        return self._kernel

    def map_ordered(self, fn, items):
        """fn over items on the worker pool; results come back in item order"""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = [pool.submit(fn, item) for item in items]
            return [future.result() for future in futures]

    def new_report(self, seeds=()):
        self._started = time.perf_counter()
        return ExperimentReport(
            kind=self.kind,
            config=self.config,
            config_path=self.config_path,
            seeds=list(seeds),
            tolerances=LabConfig.get_tolerances(self.config.numerics),
        )

    def finish(self, report):
        report.wall_clock_seconds = time.perf_counter() - (self._started or time.perf_counter())
        failed = report.failed_checks()
        if failed:
            logger.warning(f"⚠️ {self.kind}: failed checks {', '.join(failed)}")
        else:
            logger.info(f"✅ {self.kind}: all {len(report.checks)} checks passed")
        return report

    def resource_bracket_check(self, resources, sup_mass, report, prefix):
        """Record the resource bracket for a series of resource values."""
        c = self._get_coefficients()
        r0 = float(self.config.initial.resource)
        lower, upper = resource_bracket(c, r0, self.config.experiment.horizon, sup_mass)
        resources = np.asarray(resources, dtype=float)
        report.metrics[f"{prefix}_resource_bracket"] = {
            "lower": lower, "upper": upper,
            "min": float(resources.min()), "max": float(resources.max()),
        }
        report.checks[f"{prefix}_resource_in_range"] = bool(
            resources.min() >= 0.0 and resources.max() <= upper + RESOURCE_BRACKET_SLACK
        )
        report.checks[f"{prefix}_resource_lower_bound"] = bool(
            resources.min() >= lower - RESOURCE_BRACKET_SLACK
        )
