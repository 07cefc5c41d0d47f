import os
from fractions import Fraction
from pathlib import Path

os.environ.setdefault('FASTCORR_ENV', 'testing')

import numpy as np
import pytest

from models import QuantizedMatrix
from services.quantization import quantize_matrix


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def identity2() -> QuantizedMatrix:
    return QuantizedMatrix(((10, 0), (0, 10)), 1)


@pytest.fixture
def random_bank():
    """Factory for seeded, normalized, quantized random template banks."""
    def make(K: int, m: int, digits: int = 2, base: int = 10, seed: int = 0) -> QuantizedMatrix:
        source = np.random.default_rng(seed).standard_normal((K, m))
        return quantize_matrix(source, digits, base)
    return make


@pytest.fixture
def rational_signal():
    """Factory for seeded signals of exact millesimal samples."""
    def make(length: int, seed: int = 0):
        values = np.random.default_rng(seed).integers(-1000, 1001, size=length)
        return [Fraction(int(v), 1000) for v in values]
    return make


@pytest.fixture
def write_file(tmp_path: Path):
    def write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path
    return write
