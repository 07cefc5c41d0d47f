"""
Exception hierarchy for fastcorr.

Input problems (bad files, malformed vectors, non-finite samples) raise
InputError subclasses; broken internal guarantees raise InvariantViolation.
The CLI maps the first family to exit code 1 and the second to exit code 2.
"""
from typing import Optional


class FastCorrError(Exception):
    """Base class for every error raised by fastcorr."""


class InputError(FastCorrError, ValueError):
    """Caller supplied data that violates an operation's precondition."""


class QuantizationError(InputError):
    """A value cannot be quantized (non-finite, bad base or digit count)."""


class MatrixFormatError(InputError):
    """
    A matrix, vector or signal file could not be parsed.

    Attributes:
        path: File that failed to parse (None for in-memory data)
        line: 1-based line number of the offending record, when known
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class PlanFormatError(InputError):
    """A multiplication plan is structurally invalid or cannot be decoded."""


class SignalError(InputError):
    """A signal sample or test-signal request is invalid."""


class InvariantViolation(FastCorrError, RuntimeError):
    """An internal guarantee (e.g. plan/oracle equality) did not hold."""
