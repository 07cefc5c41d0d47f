from fractions import Fraction

import numpy as np
import pytest

from models import QuantizedMatrix, QuantizedScalar
from services.exceptions import InputError, QuantizationError, SignalError
from services.quantization import (
    normalize_rows,
    quantize,
    quantize_matrix,
    reconstruct,
    to_rational,
    to_scaled_integers,
)


def test_quantize_rounds_to_requested_digits() -> None:
    q = quantize(0.12345, 3)
    assert q.scaled_value == 123
    assert reconstruct(q) == Fraction(123, 1000)


def test_quantize_zero() -> None:
    assert quantize(0.0, 3).scaled_value == 0


def test_quantize_ties_go_to_even() -> None:
    assert quantize(0.125, 2).scaled_value == 12
    assert quantize("0.135", 2).scaled_value == 14
    assert quantize("0.145", 2).scaled_value == 14
    assert quantize("-0.5", 0).scaled_value == 0


def test_quantize_base_two() -> None:
    q = quantize(0.75, 2, base=2)
    assert q.scaled_value == 3
    assert q.value == Fraction(3, 4)


@pytest.mark.parametrize("bad", [float('nan'), float('inf'), "abc"])
def test_quantize_rejects_non_finite(bad) -> None:
    with pytest.raises(QuantizationError):
        quantize(bad, 2)


def test_quantize_rejects_bad_parameters() -> None:
    with pytest.raises(QuantizationError):
        quantize(0.5, -1)
    with pytest.raises(QuantizationError):
        quantize(0.5, 2, base=1)


def test_quantize_error_is_an_input_error() -> None:
    with pytest.raises(InputError):
        quantize(float('nan'), 1)


def test_reconstruction_error_is_bounded(rng) -> None:
    for x in rng.uniform(-1, 1, size=200):
        q = quantize(float(x), 3)
        assert abs(reconstruct(q) - Fraction(float(x))) <= Fraction(1, 2000)


def test_quantize_reconstruct_round_trip() -> None:
    for scaled in (-999, -10, 0, 7, 123, 5000):
        q = QuantizedScalar(scaled, 3)
        assert quantize(reconstruct(q), 3) == q


def test_quantize_is_monotone(rng) -> None:
    xs = np.sort(rng.uniform(-2, 2, size=100))
    scaled = [quantize(float(x), 2).scaled_value for x in xs]
    assert scaled == sorted(scaled)


def test_to_rational_reads_decimal_strings_exactly() -> None:
    assert to_rational("0.1") == Fraction(1, 10)
    assert to_rational(" -2.50 ") == Fraction(-5, 2)
    assert to_rational(0.5) == Fraction(1, 2)
    with pytest.raises(SignalError):
        to_rational("nan")
    with pytest.raises(SignalError):
        to_rational(True)


def test_normalize_rows_examples() -> None:
    result = normalize_rows([[3, 4], [1, 0]])
    assert result[0] == pytest.approx([0.6, 0.8], abs=1e-15)
    assert result[1] == pytest.approx([1.0, 0.0], abs=1e-15)


def test_normalize_rows_names_zero_row() -> None:
    with pytest.raises(InputError, match="Row 1"):
        normalize_rows([[1, 2], [0, 0]])


def test_normalize_rows_unit_norm_and_idempotent(rng) -> None:
    once = normalize_rows(rng.standard_normal((20, 7)) * 13.0)
    assert np.all(np.abs(np.sum(once ** 2, axis=1) - 1.0) <= 1e-12)
    twice = normalize_rows(once)
    assert np.max(np.abs(twice - once)) <= 1e-12


def test_quantize_matrix_identity() -> None:
    matrix = quantize_matrix([[1, 0], [0, 1]], 1)
    assert matrix.scaled == ((10, 0), (0, 10))
    assert matrix.unit == 10


def test_quantize_matrix_norm_deviation_bound(rng) -> None:
    for digits in (1, 2, 3):
        matrix = quantize_matrix(rng.standard_normal((10, 16)), digits)
        for row in matrix.scaled:
            norm_sq = sum(Fraction(v) ** 2 for v in row) * matrix.scale ** 2
            assert abs(norm_sq - 1) <= matrix.m * matrix.scale


def test_quantize_matrix_without_normalization_keeps_values() -> None:
    matrix = quantize_matrix([["0.12", "-0.30"]], 2, normalize=False)
    assert matrix.scaled == ((12, -30),)


def test_quantize_matrix_rejects_unsupported_base() -> None:
    with pytest.raises(QuantizationError):
        quantize_matrix([[1.0]], 2, base=3)


def test_to_scaled_integers_examples() -> None:
    ints, scale = to_scaled_integers(QuantizedMatrix(((12, -30),), 2))
    assert ints == [[12, -30]]
    assert scale == Fraction(1, 100)

    ints, scale = to_scaled_integers(QuantizedMatrix(((10, 0), (0, 10)), 1))
    assert ints == [[10, 0], [0, 10]]
    assert scale == Fraction(1, 10)

    ints, scale = to_scaled_integers(QuantizedMatrix(((0, 0, 0),), 3))
    assert ints == [[0, 0, 0]]
    assert scale == Fraction(1, 1000)


def test_quantized_matrix_column_statistics() -> None:
    matrix = QuantizedMatrix(((3, 3, 1), (3, -3, 7), (10, 0, -7)), 1)
    assert matrix.column_magnitudes(0) == [3, 10]
    assert matrix.nonunit_column_counts() == [1, 1, 2]
    assert matrix.distinct_nonunit_magnitudes() == [1, 3, 7]


def test_quantized_matrix_rejects_ragged_rows() -> None:
    with pytest.raises(ValueError):
        QuantizedMatrix(((1, 2), (3,)), 1)
