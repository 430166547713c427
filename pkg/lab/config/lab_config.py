# lab/config/lab_config.py
import os
from pathlib import Path

from django.conf import settings

from lab import __version__
from lab.services import ibm_simulator, measure_metrics, pde_solver

MAX_DEFAULT_THREADS = 8


class LabConfig:
    """Process-level settings for the lab commands"""

    @staticmethod
    def get_output_dir():
        default = Path(getattr(settings, 'BASE_DIR', Path.cwd())) / 'runs'
        return Path(getattr(settings, 'LAB_OUTPUT_DIR', None) or default)

    @staticmethod
    def get_default_threads():
        value = os.getenv('LAB_DEFAULT_THREADS')
        if value:
            return int(value)
        return min(os.cpu_count() or 1, MAX_DEFAULT_THREADS)

    @staticmethod
    def get_log_level():
        return os.getenv('LAB_LOG_LEVEL', 'INFO').upper()

    @staticmethod
    def get_tool_version():
        return __version__

    @staticmethod
    def get_tolerances(numerics):
        """Tolerance table embedded in every run record, for the run's numerics section"""
        return {
            'mass_conservation': 1e-12,
            'negativity_clipping': pde_solver.NEGATIVITY_TOL,
            'resource_clamp_fraction': ibm_simulator.CLAMP_FRACTION_LIMIT,
            'truncation_tail': numerics.truncation_tol,
            'dictionary_certification': measure_metrics.CERTIFICATION_SLACK,
            'cfl_limit': pde_solver.CFL_LIMIT,
            'splitting_guard': ibm_simulator.SPLITTING_GUARD,
            'resource_bracket_slack': 1e-6,
        }

    @staticmethod
    def validate_config():
        """Check the environment settings, raising ValueError listing every problem"""
        problems = []

        threads = os.getenv('LAB_DEFAULT_THREADS')
        if threads is not None:
            try:
                if int(threads) < 1:
                    problems.append('LAB_DEFAULT_THREADS must be at least 1')
            except ValueError:
                problems.append(f'LAB_DEFAULT_THREADS is not an integer: {threads!r}')

        level = LabConfig.get_log_level()
        if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            problems.append(f'LAB_LOG_LEVEL is not a logging level: {level!r}')

        output_dir = LabConfig.get_output_dir()
        if output_dir.exists() and not output_dir.is_dir():
            problems.append(f'LAB_OUTPUT_DIR points at a file: {output_dir}')

        if problems:
            raise ValueError(f"Invalid lab settings: {'; '.join(problems)}")

        return True

    @staticmethod
    def get_config_summary():
        """Get configuration summary for logging"""
        return {
            'tool_version': LabConfig.get_tool_version(),
            'output_dir': str(LabConfig.get_output_dir()),
            'default_threads': LabConfig.get_default_threads(),
            'log_level': LabConfig.get_log_level(),
        }
