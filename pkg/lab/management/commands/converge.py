# lab/management/commands/converge.py
from lab.handlers.convergence_handler import ConvergenceHandler
from lab.management.commands._lab_command import LabCommand


class Command(LabCommand):
    help = 'Large-K convergence of the IBM towards the PDE'
    handler_class = ConvergenceHandler
