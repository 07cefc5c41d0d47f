"""
Quantization Service
Exact fixed-point representation of template banks and signal samples.

Templates are normalized in floating point first and only then rounded to
D fractional digits, so the digit count stays a property of the stored
matrix. Every quantized value is an integer mantissa over base**D, which
keeps plan arithmetic exact.
"""
import logging
import math
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from models import QuantizedMatrix, QuantizedScalar
from services.exceptions import InputError, QuantizationError, SignalError

logger = logging.getLogger(__name__)

SUPPORTED_BASES = (2, 10)

Real = Union[int, float, str, Decimal, Fraction]


def to_rational(value: Real) -> Fraction:
    """
    Convert a sample or coefficient to an exact rational.

    Floats convert to their exact binary value; strings are read as decimal
    literals so "0.1" stays exactly one tenth.

    Args:
        value: int, float, decimal string, Decimal or Fraction

    Returns:
        Fraction: Exact rational equal to the input

    Raises:
        SignalError: If the value is non-finite or not a number
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise SignalError(f"Boolean is not a numeric sample: {value!r}")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise SignalError(f"Non-finite value: {value!r}")
        return Fraction(float(value))
    try:
        result = Fraction(Decimal(str(value).strip()))
    except (ArithmeticError, ValueError, TypeError) as e:
        raise SignalError(f"Not a finite decimal number: {value!r}") from e
    return result


def quantize(x: Real, digits: int, base: int = 10) -> QuantizedScalar:
    """
    Round x to `digits` fractional base-`base` digits, half to even.

    Args:
        x: Finite real value
        digits: Number D of fractional digits kept (D >= 0)
        base: Radix, at least 2

    Returns:
        QuantizedScalar: scaled_value = round_half_even(x * base**D)

    Raises:
        QuantizationError: If x is non-finite or D/base are out of range

    Example:
        >>> quantize(0.125, 2).scaled_value
        12
    """
    if digits < 0:
        raise QuantizationError(f"Digit count must be >= 0, got {digits}")
    if base < 2:
        raise QuantizationError(f"Base must be >= 2, got {base}")
    try:
        exact = to_rational(x)
    except SignalError as e:
        raise QuantizationError(str(e)) from e
    # round() on a Fraction is round-half-even and returns an int
    return QuantizedScalar(round(exact * base ** digits), digits, base)


def reconstruct(q: QuantizedScalar) -> Fraction:
    """Exact value of a quantized scalar."""
    return q.value


def normalize_rows(matrix: Union[np.ndarray, Sequence[Sequence[float]]]) -> np.ndarray:
    """
    Scale every row to unit Euclidean norm.

    Args:
        matrix: K x m real matrix

    Returns:
        np.ndarray: float64 matrix whose rows have unit norm, directions kept

    Raises:
        InputError: If a row has zero norm or the matrix is not 2-D and finite
    """
    data = np.asarray(matrix, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] == 0:
        raise InputError(f"Expected a non-empty 2-D matrix, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise InputError("Matrix contains non-finite entries")

    norms = np.linalg.norm(data, axis=1)
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        raise InputError(f"Row {int(zero_rows[0])} has zero norm and cannot be normalized")

    normalized = data / norms[:, np.newaxis]
    logger.debug(f"[QUANT] Normalized {data.shape[0]} rows of length {data.shape[1]}")
    return normalized


def quantize_matrix(
    matrix: Union[np.ndarray, Sequence[Sequence[Real]]],
    digits: int,
    base: int = 10,
    normalize: bool = True
) -> QuantizedMatrix:
    """
    Build a QuantizedMatrix from real templates.

    Args:
        matrix: K x m real matrix (rows are templates)
        digits: Fractional digits D to keep
        base: Radix (10 or 2)
        normalize: Normalize rows in floating point before rounding

    Returns:
        QuantizedMatrix: Template bank with uniform (base, D)

    Raises:
        QuantizationError: For unsupported bases or non-finite entries
        InputError: For zero rows when normalizing
    """
    if base not in SUPPORTED_BASES:
        raise QuantizationError(f"Unsupported base {base}; expected one of {SUPPORTED_BASES}")

    if normalize:
        source = normalize_rows(matrix)
        rows: Iterable[Iterable[Real]] = source.tolist()
    else:
        rows = matrix

    scaled = tuple(
        tuple(quantize(value, digits, base).scaled_value for value in row)
        for row in rows
    )
    try:
        result = QuantizedMatrix(scaled, digits, base)
    except ValueError as e:
        raise InputError(str(e)) from e

    if normalize:
        deviation = max(abs(sum(Fraction(v) ** 2 for v in row) * result.scale ** 2 - 1) for row in result.scaled)
        logger.debug(f"[QUANT] Post-quantization norm deviation {float(deviation):.3e} "
                     f"(bound {result.m * float(result.scale):.3e})")
    logger.info(f"[QUANT] Quantized {result.K}x{result.m} template bank to D={digits} base={base}")
    return result


def to_scaled_integers(matrix: QuantizedMatrix) -> Tuple[List[List[int]], Fraction]:
    """
    Expose a QuantizedMatrix as integers plus one common scale.

    Args:
        matrix: Quantized template bank

    Returns:
        Tuple[List[List[int]], Fraction]: (integer matrix, base**(-D))

    Example:
        >>> ints, scale = to_scaled_integers(QuantizedMatrix(((12, -30),), 2))
        >>> ints, scale
        ([[12, -30]], Fraction(1, 100))
    """
    return [list(row) for row in matrix.scaled], matrix.scale
