# lab/management/commands/diagnose_density.py
from lab.handlers.density_handler import DensityHandler
from lab.management.commands._lab_command import LabCommand


class Command(LabCommand):
    help = 'Density and smoothing diagnostics'
    handler_class = DensityHandler
