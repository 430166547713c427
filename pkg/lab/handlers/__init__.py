# lab/handlers/__init__.py
from .agreement_handler import AgreementHandler
from .convergence_handler import ConvergenceHandler
from .density_handler import DensityHandler
from .single_run_handler import IbmRunHandler, PdeRunHandler, ValidationHandler

__all__ = [
    'ValidationHandler',
    'IbmRunHandler',
    'PdeRunHandler',
    'ConvergenceHandler',
    'AgreementHandler',
    'DensityHandler',
]
