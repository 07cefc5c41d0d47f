"""
Benchmark Service
Analytic cost baselines and reproducible cost sweeps.

Baselines:
- direct method: K·m multiplies and K·(m−1) additions per window
- Viterbi estimate: α·P operations with P = K·m. The addition factor is
  reported exactly as published; for P >= 48 it is negative (1 − √48) and
  is flagged rather than corrected.

Sweeps draw seeded random templates per (K, m, D, trial), synthesize plans,
and measure batch and streaming costs. Each trial owns its RNG, so rows do
not depend on scheduling and the CSV is byte-identical for a given seed.
"""
import csv
import io
import logging
import math
import re
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models import BENCH_COLUMNS, BaselineCosts, BenchRow, CostPolicy, ViterbiFlag
from services.exceptions import InputError
from services.plan_synthesis import synthesize_plan
from services.quantization import quantize_matrix
from services.stream_engine import stream_cost_summary, stream_init, stream_push
from utils.signal_generator import random_signal
from workers.bench_runner import run_jobs

logger = logging.getLogger(__name__)

# Matrix size where the published Viterbi factors switch branches
VITERBI_BOUNDARY = 48

DEFAULT_SIZES: Tuple[Tuple[int, int], ...] = ((4, 16), (16, 16), (64, 16))
DEFAULT_DIGITS: Tuple[int, ...] = (1, 2, 3)
DEFAULT_STREAM_WINDOWS = 64

_SIZE_PATTERN = re.compile(r'^\s*(\d+)\s*[x×X*]\s*(\d+)\s*$')


def direct_cost(K: int, m: int) -> Tuple[int, int]:
    """
    Operation count of the direct method.

    Example:
        >>> direct_cost(10, 100)
        (1000, 990)
    """
    if K < 1 or m < 1:
        raise InputError(f"K and m must be >= 1, got K={K} m={m}")
    return K * m, K * (m - 1)


def viterbi_alpha(P: int) -> Tuple[float, float, ViterbiFlag]:
    """
    Published Viterbi reduction factors for a matrix of P entries.

    P = 48 belongs to the large-matrix branch.

    Returns:
        (alpha_mult, alpha_add, flag); flag is ANOMALOUS_NEGATIVE when the
        printed addition factor 1 − √48 is used
    """
    if P < 1:
        raise InputError(f"P must be >= 1, got {P}")
    if P < VITERBI_BOUNDARY:
        return 1.0, 1.0 - 1.0 / math.sqrt(P), ViterbiFlag.AS_PRINTED
    return 0.5, 1.0 - math.sqrt(VITERBI_BOUNDARY), ViterbiFlag.ANOMALOUS_NEGATIVE


def baseline_costs(K: int, m: int) -> BaselineCosts:
    """Direct and Viterbi baselines for a K x m template bank."""
    mults, adds = direct_cost(K, m)
    P = K * m
    alpha_mult, alpha_add, flag = viterbi_alpha(P)
    if flag == ViterbiFlag.ANOMALOUS_NEGATIVE:
        logger.debug(f"[BENCH] Viterbi addition factor for P={P} is negative as published ({alpha_add:.6f})")
    return BaselineCosts(K, m, P, mults, adds, alpha_mult, alpha_add, flag)


def parse_sizes(text: str) -> List[Tuple[int, int]]:
    """
    Parse "KxM[,KxM...]" size lists.

    Example:
        >>> parse_sizes("4x16,16x16")
        [(4, 16), (16, 16)]
    """
    sizes = []
    for part in text.split(','):
        if not part.strip():
            continue
        match = _SIZE_PATTERN.match(part)
        if not match:
            raise InputError(f"Invalid size {part.strip()!r}; expected KxM")
        K, m = int(match.group(1)), int(match.group(2))
        if K < 1 or m < 1:
            raise InputError(f"Invalid size {part.strip()!r}; K and m must be >= 1")
        sizes.append((K, m))
    if not sizes:
        raise InputError("Size list is empty")
    return sizes


def trial_rng(seed: int, K: int, m: int, digits: int, trial: int) -> np.random.Generator:
    """Independent generator for one sweep trial."""
    return np.random.default_rng(np.random.SeedSequence([seed, K, m, digits, trial]))


def run_trial(
    K: int,
    m: int,
    digits: int,
    trial: int,
    seed: int,
    base: int = 10,
    stream_windows: int = DEFAULT_STREAM_WINDOWS,
    policy: Optional[CostPolicy] = None
) -> BenchRow:
    """
    Measure one random template bank.

    Draws a Gaussian K x m matrix, normalizes and quantizes it, synthesizes a
    plan, and streams a random signal of m + stream_windows − 1 samples.
    Streaming figures are post-warmup averages.
    """
    rng = trial_rng(seed, K, m, digits, trial)
    matrix = quantize_matrix(rng.standard_normal((K, m)), digits, base)
    plan = synthesize_plan(matrix, policy)

    state = stream_init(plan)
    for sample in random_signal(rng, m + stream_windows - 1):
        stream_push(state, float(sample))
    summary = stream_cost_summary(state)

    baseline = baseline_costs(K, m)
    return BenchRow(
        P=baseline.P,
        K=K,
        m=m,
        D=digits,
        trial=trial,
        direct_mults=baseline.direct_mults,
        direct_adds=baseline.direct_adds,
        plan_mults=plan.cost.multiplies,
        plan_adds=plan.cost.adds,
        plan_shifts=plan.cost.shifts,
        stream_mults_per_step=summary.warm_multiplies_per_step,
        stream_adds_per_step=summary.warm_adds_per_step,
        cache_hit_rate=summary.cache_hit_rate,
        viterbi_alpha_mult=baseline.viterbi_alpha_mult,
        viterbi_alpha_add=baseline.viterbi_alpha_add,
        viterbi_flag=baseline.viterbi_flag.value,
        unique_magnitudes=len(matrix.distinct_nonunit_magnitudes()),
    )


def bench_sweep(
    sizes: Iterable[Tuple[int, int]],
    digits: Iterable[int] = DEFAULT_DIGITS,
    trials: int = 1,
    seed: int = 0,
    base: int = 10,
    stream_windows: int = DEFAULT_STREAM_WINDOWS,
    workers: int = 1,
    policy: Optional[CostPolicy] = None
) -> List[BenchRow]:
    """
    Run every (K, m, D, trial) combination and return rows in canonical order.

    Args:
        sizes: (K, m) pairs
        digits: Fractional digit counts D
        trials: Random matrices per (K, m, D)
        seed: Sweep seed (>= 0)
        base: Quantization radix
        stream_windows: Streamed windows per trial (>= 2 for warm figures)
        workers: Thread pool size
        policy: Cost policy for synthesis

    Returns:
        List[BenchRow]: Sorted by (P, K, m, D, trial)

    Raises:
        InputError: For invalid sizes, digits, trials or seed
    """
    sizes = list(sizes)
    digits = list(digits)
    if trials < 0:
        raise InputError(f"Trial count must be >= 0, got {trials}")
    if seed < 0:
        raise InputError(f"Seed must be >= 0, got {seed}")
    if stream_windows < 1:
        raise InputError(f"Stream window count must be >= 1, got {stream_windows}")
    for K, m in sizes:
        direct_cost(K, m)
    for d in digits:
        if d < 0:
            raise InputError(f"Digit count must be >= 0, got {d}")

    jobs = [
        (K, m, d, trial, seed, base, stream_windows, policy)
        for K, m in sizes
        for d in digits
        for trial in range(trials)
    ]
    logger.info(f"[BENCH] Sweep: {len(sizes)} size(s) x {len(digits)} digit setting(s) x {trials} trial(s)")
    rows = run_jobs(run_trial, jobs, workers)
    rows.sort(key=lambda row: row.sort_key)
    logger.info(f"[BENCH] Sweep finished with {len(rows)} row(s)")
    return rows


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    """Render rows as CSV with a header, '\\n' line endings and 6-decimal floats."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(BENCH_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_values())
    return buffer.getvalue()


BASELINE_COLUMNS = (
    'P', 'K', 'm', 'D', 'direct_mults', 'direct_adds',
    'viterbi_mults', 'viterbi_adds', 'viterbi_flag', 'plan_mults', 'plan_adds',
)


def baseline_table(
    sizes: Iterable[Tuple[int, int]],
    digits: int,
    seed: int = 0,
    base: int = 10,
    policy: Optional[CostPolicy] = None
) -> str:
    """
    Tabulate direct, Viterbi and synthesized-plan costs per size as CSV.

    The plan column uses the first sweep trial's random matrix for (K, m, D).
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(BASELINE_COLUMNS)
    for K, m in sorted(sizes, key=lambda size: (size[0] * size[1], size[0], size[1])):
        baseline = baseline_costs(K, m)
        rng = trial_rng(seed, K, m, digits, 0)
        plan = synthesize_plan(quantize_matrix(rng.standard_normal((K, m)), digits, base), policy)
        writer.writerow([
            baseline.P, K, m, digits, baseline.direct_mults, baseline.direct_adds,
            f"{baseline.viterbi_mults:.6f}", f"{baseline.viterbi_adds:.6f}", baseline.viterbi_flag.value,
            plan.cost.multiplies, plan.cost.adds,
        ])
    return buffer.getvalue()
