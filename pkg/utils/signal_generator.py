"""
Test Signal Generator
Builds continuous signals with templates embedded at known offsets.

Used to exercise the detection pipeline end to end: white Gaussian noise
of a chosen sigma, with template rows added at non-overlapping offsets.
Output is deterministic for a given seed.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from models import QuantizedMatrix
from services.exceptions import SignalError

logger = logging.getLogger(__name__)

Placement = Tuple[int, int]


def check_placements(placements: Sequence[Placement], K: int, m: int, length: int) -> List[Placement]:
    """
    Validate placements and return them sorted by offset.

    Raises:
        SignalError: On an unknown template, an out-of-range offset or an overlap
    """
    ordered = sorted((int(offset), int(k)) for offset, k in placements)
    previous_end = 0
    for offset, k in ordered:
        if not 0 <= k < K:
            raise SignalError(f"Placement template {k} outside [0, {K})")
        if offset < 0 or offset + m > length:
            raise SignalError(f"Placement at offset {offset} does not fit a length-{length} signal (m={m})")
        if offset < previous_end:
            raise SignalError(f"Placement at offset {offset} overlaps the previous one ending at {previous_end}")
        previous_end = offset + m
    return ordered


def random_signal(rng: np.random.Generator, length: int, sigma: float = 1.0) -> np.ndarray:
    """White Gaussian noise; exact zeros when sigma is 0."""
    if sigma < 0:
        raise SignalError(f"Noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.zeros(length, dtype=np.float64)
    return rng.normal(0.0, sigma, size=length)


def gen_test_signal(
    templates: QuantizedMatrix,
    placements: Sequence[Placement],
    noise_sigma: float,
    seed: int,
    length: int
) -> np.ndarray:
    """
    Generate a signal with templates embedded in white noise.

    Args:
        templates: Quantized template bank; row k is added as its exact values
        placements: (offset, k) pairs; template k starts at sample `offset`
        noise_sigma: Standard deviation of the additive noise (0 for none)
        seed: RNG seed
        length: Number of samples

    Returns:
        np.ndarray: float64 signal of `length` samples

    Raises:
        SignalError: If placements overlap or fall outside the signal
    """
    if length < 0:
        raise SignalError(f"Signal length must be >= 0, got {length}")
    ordered = check_placements(placements, templates.K, templates.m, length)

    signal = random_signal(np.random.default_rng(seed), length, noise_sigma)
    rows = templates.to_float()
    for offset, k in ordered:
        signal[offset:offset + templates.m] += rows[k]

    logger.debug(f"[CLASSIFY] Generated {length}-sample signal with {len(ordered)} placement(s), "
                 f"sigma={noise_sigma}")
    return signal


def parse_placements(text: str) -> List[Placement]:
    """
    Parse "offset:k[,offset:k...]" placement lists.

    Example:
        >>> parse_placements("100:2,300:0")
        [(100, 2), (300, 0)]
    """
    placements = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        offset, sep, k = part.partition(':')
        if not sep:
            raise SignalError(f"Invalid placement {part!r}; expected offset:k")
        try:
            placements.append((int(offset), int(k)))
        except ValueError:
            raise SignalError(f"Invalid placement {part!r}; expected integers offset:k")
    return placements
