"""Exception hierarchy shared by the library and the CLI.

The CLI maps each family onto an exit code (see ``metamks.cli``).
"""


class MetamksError(Exception):
    """Base class for all library errors."""


class ArgumentError(MetamksError, ValueError):
    """Invalid argument value or combination."""


class FormatError(MetamksError):
    """Malformed artifact file.

    ``offset`` is the byte offset (or record index for text formats) at which
    parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ImportValidationError(FormatError):
    """Imported data violates shape/value constraints."""

    def __init__(self, message, offending=()):
        offending = list(offending)[:10]
        if offending:
            message = f"{message}; first offending records: {offending}"
        super().__init__(message)
        self.offending = offending


class NumericalError(MetamksError, ArithmeticError):
    """NaN/inf encountered or a numerical procedure broke down."""


class ConditioningError(NumericalError):
    """Kernel matrix could not be factorized even after jitter escalation."""


class FitError(NumericalError):
    """Every optimizer restart failed."""


class DegenerateEnsembleError(NumericalError):
    """A statistic needed for scaling is exactly zero across the ensemble."""


class GenerationStallError(MetamksError, RuntimeError):
    """Rejection sampling accepted too few candidates."""


class StateError(MetamksError, RuntimeError):
    """Operation is not valid in the current active-learning state."""


class DependencyError(MetamksError):
    """A required upstream artifact is missing or does not match its record."""
