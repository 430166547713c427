# lab/tests/helpers.py
from pathlib import Path

from django.conf import settings

from lab.config.run_config import load_config
from lab.services.coefficients import build_coefficients
from lab.services.kernels import FragmentationKernel

CONFIG_DIR = Path(settings.BASE_DIR) / 'configs'


def shipped_config(name):
    return load_config(CONFIG_DIR / f'{name}.yaml')


def config_path(name):
    return CONFIG_DIR / f'{name}.yaml'


def coefficients_for(config):
    return build_coefficients(config.model, config.numerics.x_max, config.r_bar)


def kernel_for(config):
    return FragmentationKernel.from_config(config.kernel, config.numerics.n_quad)


def shortened(name, horizon, **numerics):
    """Shipped config cut to ``horizon`` with no intermediate snapshots."""
    config = shipped_config(name).with_experiment(horizon=horizon, snapshot_times=[])
    return config.with_numerics(**numerics) if numerics else config
