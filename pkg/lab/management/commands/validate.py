# lab/management/commands/validate.py
from lab.handlers.single_run_handler import ValidationHandler
from lab.management.commands._lab_command import LabCommand


class Command(LabCommand):
    help = 'Check coefficient assumptions, kernel identities and the test dictionary'
    handler_class = ValidationHandler
