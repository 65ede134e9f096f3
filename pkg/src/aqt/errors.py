"""Exception hierarchy shared by every module.

Each class carries the process exit code the command-line front end uses
when the error escapes a command.
"""


class AqtError(Exception):
    exit_code = 1


class ValidationError(AqtError, ValueError):
    """Malformed input: bad arguments, corrupt files, inconsistent configs."""

    exit_code = 2


class ShapeError(ValidationError):
    """Array dimensions do not line up."""


class DomainError(ValidationError):
    """A value lies outside the mathematical domain of an operation."""


class CapacityError(AqtError):
    """A dense object would exceed the configured size cap."""

    exit_code = 3


class NumericError(AqtError, ArithmeticError):
    """Non-finite values or a failed numerical procedure."""

    exit_code = 4

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
