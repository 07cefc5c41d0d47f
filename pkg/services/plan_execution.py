"""
Plan Execution Service
Exact evaluation of multiplication plans and the direct-product oracle.

Vectors are converted to exact rationals on entry, so plan results and
the naive product can be compared with zero tolerance.
"""
import logging
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models import CostTally, EquivalenceReport, EvalResult, MultiplicationPlan, NodeKind, QuantizedMatrix
from services.exceptions import InputError
from services.plan_synthesis import plan_cost
from services.quantization import Real, to_rational

logger = logging.getLogger(__name__)

# Range of random numerators/denominators used for equivalence trials
TRIAL_NUMERATOR_LIMIT = 10 ** 6
TRIAL_DENOMINATOR_LIMIT = 10 ** 4


def as_rational_vector(x: Sequence[Real], expected_length: int) -> Tuple[Fraction, ...]:
    """
    Convert a vector to exact rationals, checking its length.

    Raises:
        InputError: If the length differs or an entry is non-finite
    """
    if len(x) != expected_length:
        raise InputError(f"Vector has {len(x)} entries, expected {expected_length}")
    return tuple(to_rational(v) for v in x)


def node_values(plan: MultiplicationPlan, window: Sequence[Fraction]) -> List[Optional[Fraction]]:
    """
    Evaluate every node of a plan on an exact window.

    Returns:
        List of node values in id order (real units; Output nodes included)
    """
    coefficient_scale = plan.scale
    base = Fraction(plan.base)
    values: List[Optional[Fraction]] = [None] * len(plan.nodes)
    for node in plan.nodes:
        if node.kind == NodeKind.INPUT:
            values[node.id] = window[node.position]
        elif node.kind == NodeKind.MUL:
            values[node.id] = values[node.child] * node.magnitude * coefficient_scale
        elif node.kind == NodeKind.SHIFT:
            values[node.id] = values[node.child] * base ** node.power
        elif node.kind == NodeKind.ADD:
            right = values[node.right]
            values[node.id] = values[node.left] + right if node.sign > 0 else values[node.left] - right
        else:
            value = Fraction(0) if node.child is None else values[node.child]
            values[node.id] = -value if node.negate else value
    return values


def evaluate_plan(plan: MultiplicationPlan, x: Sequence[Real]) -> EvalResult:
    """
    Run a plan on one vector in exact arithmetic.

    Args:
        plan: Multiplication plan for a K x m template bank
        x: Length-m vector (ints, floats, decimal strings or Fractions)

    Returns:
        EvalResult: Scaled outputs per template and the static plan tally

    Raises:
        InputError: If len(x) != plan.m or an entry is non-finite
    """
    window = as_rational_vector(x, plan.m)
    values = node_values(plan, window)
    unit = plan.base ** plan.digits
    outputs = tuple(values[out.id] * unit for out in plan.outputs())
    return EvalResult(outputs, plan.scale, plan_cost(plan))


def direct_multiply(matrix: QuantizedMatrix, x: Sequence[Real]) -> EvalResult:
    """
    Naive row-by-row product, the reference every plan is checked against.

    Args:
        matrix: Quantized template bank
        x: Length-m vector

    Returns:
        EvalResult: c_k = sum_i x_i * r_{k,i} in scaled units, with tally
                    (K·m multiplies, K·(m−1) adds)

    Raises:
        InputError: If len(x) != matrix.m
    """
    window = as_rational_vector(x, matrix.m)
    outputs = tuple(
        sum((Fraction(s) * xi for s, xi in zip(row, window)), Fraction(0))
        for row in matrix.scaled
    )
    tally = CostTally(multiplies=matrix.K * matrix.m, adds=matrix.K * (matrix.m - 1))
    return EvalResult(outputs, matrix.scale, tally)


def random_rational_vector(rng: np.random.Generator, length: int) -> Tuple[Fraction, ...]:
    """Draw a vector of random rationals with bounded numerators and denominators."""
    numerators = rng.integers(-TRIAL_NUMERATOR_LIMIT, TRIAL_NUMERATOR_LIMIT + 1, size=length)
    denominators = rng.integers(1, TRIAL_DENOMINATOR_LIMIT + 1, size=length)
    return tuple(Fraction(int(n), int(d)) for n, d in zip(numerators, denominators))


def verify_equivalence(
    plan: MultiplicationPlan,
    matrix: QuantizedMatrix,
    trials: int,
    seed: int = 0
) -> EquivalenceReport:
    """
    Compare a plan with the direct product on seeded random rational vectors.

    Args:
        plan: Plan synthesized from `matrix`
        matrix: Source template bank
        trials: Number of random vectors (0 is a vacuous pass)
        seed: RNG seed; identical seeds replay identical vectors

    Returns:
        EquivalenceReport: Success, or the first mismatch with its witness

    Raises:
        InputError: If plan and matrix disagree on shape or format
    """
    if (plan.K, plan.m, plan.base, plan.digits) != (matrix.K, matrix.m, matrix.base, matrix.digits):
        raise InputError(
            f"Plan shape K={plan.K} m={plan.m} base={plan.base} D={plan.digits} does not match "
            f"matrix K={matrix.K} m={matrix.m} base={matrix.base} D={matrix.digits}"
        )
    if trials < 0:
        raise InputError(f"Trial count must be >= 0, got {trials}")

    rng = np.random.default_rng(seed)
    for trial in range(1, trials + 1):
        vector = random_rational_vector(rng, matrix.m)
        expected = direct_multiply(matrix, vector).outputs
        actual = evaluate_plan(plan, vector).outputs
        if expected != actual:
            logger.error(f"[EXEC] Plan diverges from direct product on trial {trial}")
            return EquivalenceReport(False, trial, vector, expected, actual)

    logger.debug(f"[EXEC] Plan matches direct product on {trials} trial(s)")
    return EquivalenceReport(True, trials)
