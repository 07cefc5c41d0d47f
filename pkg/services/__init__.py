"""
Services package for fastcorr.
Quantization, plan synthesis and execution, streaming, classification and
benchmarking. Service modules are imported directly (models.py depends on
this package for its exceptions).
"""

from .exceptions import (
    FastCorrError,
    InputError,
    InvariantViolation,
    MatrixFormatError,
    PlanFormatError,
    QuantizationError,
    SignalError,
)

__all__ = [
    'FastCorrError',
    'InputError',
    'InvariantViolation',
    'MatrixFormatError',
    'PlanFormatError',
    'QuantizationError',
    'SignalError',
]
