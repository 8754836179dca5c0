"""Exception types shared across the package."""


class DmdwatchError(Exception):
    """Base class for all package errors."""


class ShapeError(DmdwatchError, ValueError):
    """Structurally incompatible array dimensions."""


class ParameterError(DmdwatchError, ValueError):
    """A configuration or argument value outside its valid range."""


class DegenerateDataError(DmdwatchError, ValueError):
    """Input data carries no usable signal (e.g. an all-zero window)."""


class NumericalError(DmdwatchError, RuntimeError):
    """A numerical routine failed; ``payload`` holds the offending operand."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class DecodeError(DmdwatchError, ValueError):
    """Malformed or truncated video input."""
