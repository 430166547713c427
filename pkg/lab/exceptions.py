# lab/exceptions.py
"""Error hierarchy shared by the services, handlers and commands.

Every error carries the process exit code the management commands use:
2 for schema problems, 3 for tripped numerical guards, 4 for failed
acceptance checks under ``--strict``.
"""


class LabError(Exception):
    exit_code = 1


class SchemaError(LabError):
    exit_code = 2

    def __init__(self, field, message, line=None):
        self.field = field
        self.line = line
        self.message = message
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}{where}: {message}")


class NumericalGuardError(LabError):
    exit_code = 3


class StepTooLarge(NumericalGuardError):
    pass


class CflViolation(NumericalGuardError):
    pass


class NegativityOverflow(NumericalGuardError):
    pass


class TruncationTolExceeded(NumericalGuardError):
    pass


class ResourceClampTooFrequent(NumericalGuardError):
    pass


class ResourceNegative(NumericalGuardError):
    pass


class InsufficientPaths(NumericalGuardError):
    pass


class AlphaOutOfRange(LabError, ValueError):
    pass


class FamilyNotDifferentiable(LabError):
    pass


class HTooSmallForGrid(LabError, ValueError):
    pass


class ParamOutOfRange(LabError, ValueError):
    pass


class AcceptanceCheckFailed(LabError):
    exit_code = 4

    def __init__(self, failed_checks):
        self.failed_checks = list(failed_checks)
        super().__init__(f"acceptance checks failed: {', '.join(self.failed_checks)}")
