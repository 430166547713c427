# lab/management/commands/agree.py
from lab.handlers.agreement_handler import AgreementHandler
from lab.management.commands._lab_command import LabCommand


class Command(LabCommand):
    help = 'Weak, mild and dual consistency of the PDE solution'
    handler_class = AgreementHandler
