# lab/management/commands/simulate_ibm.py
from lab.handlers.single_run_handler import IbmRunHandler
from lab.management.commands._lab_command import LabCommand


class Command(LabCommand):
    help = 'Simulate the individual-based model for every (K, seed)'
    handler_class = IbmRunHandler
