"""Exception hierarchy shared by all equiloc modules."""


class EquilocError(Exception):
    """Base class for every error raised by equiloc."""


class ValidationError(EquilocError, ValueError):
    """Input data violates a documented invariant."""


class ParseError(ValidationError):
    """A file could not be parsed; the message names the offending row."""


class ConfigurationError(EquilocError, ValueError):
    """The requested combination of options cannot be honoured."""


class ContractViolation(EquilocError, ValueError):
    """A caller broke an operation's precondition (e.g. assigning to a closed site)."""


class UnsupportedModelError(EquilocError, NotImplementedError):
    pass


class InfeasibleError(EquilocError):
    """No open set satisfies the model's side constraints."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}
