# lab/management/commands/solve_pde.py
from lab.handlers.single_run_handler import PdeRunHandler
from lab.management.commands._lab_command import LabCommand


class Command(LabCommand):
    help = 'Solve the density-resource PDE'
    handler_class = PdeRunHandler
