import math
from fractions import Fraction

import pytest

from models import QuantizedMatrix
from services.exceptions import SignalError
from services.plan_execution import evaluate_plan
from services.plan_synthesis import synthesize_plan
from services.stream_engine import stream_cost_summary, stream_init, stream_push, stream_signal, window_norm


def _assert_caches_sound(state) -> None:
    plan = state.plan
    for kind, anchor, key, value in state.cache_entries():
        if kind == 'product':
            assert value == state.sample_at(anchor) * key * plan.scale
        else:
            assert value == sum(coeff * state.sample_at(anchor + lag) for lag, coeff in key)


def test_constant_signal_against_flat_template() -> None:
    plan = synthesize_plan(QuantizedMatrix(((5, 5),), 1))
    steps = list(stream_signal(plan, [1] * 5))
    assert [s.step for s in steps] == [1, 2, 3, 4]
    for step in steps:
        assert step.result.values == (Fraction(1),)
        assert step.norm == pytest.approx(math.sqrt(2))
        assert step.correlations[0] == pytest.approx(1 / math.sqrt(2))


def test_single_sample_window_emits_on_first_push() -> None:
    state = stream_init(synthesize_plan(QuantizedMatrix(((10,),), 1)))
    step = stream_push(state, 2)
    assert step is not None
    assert step.step == 0
    assert step.result.values == (Fraction(2),)
    assert step.correlations == (pytest.approx(1.0),)


def test_no_output_until_window_is_full() -> None:
    state = stream_init(synthesize_plan(QuantizedMatrix(((1, 2, 3),), 1)))
    assert stream_push(state, 1) is None
    assert stream_push(state, 1) is None
    with pytest.raises(SignalError):
        window_norm(state)
    with pytest.raises(SignalError):
        stream_cost_summary(state)
    assert stream_push(state, 1) is not None


def test_window_norm_is_incremental(identity2) -> None:
    state = stream_init(synthesize_plan(identity2))
    stream_push(state, 3)
    stream_push(state, 4)
    assert window_norm(state) == 5.0
    stream_push(state, 0)
    assert window_norm(state) == 4.0
    assert state.norm_acc == 16


def test_zero_window_has_undefined_correlations(identity2) -> None:
    steps = list(stream_signal(synthesize_plan(identity2), [0, 0, 1]))
    assert steps[0].zero_norm
    assert steps[0].correlations is None
    assert steps[0].result.tally.norm_divisions == 0
    assert steps[1].correlations == (pytest.approx(0.0), pytest.approx(1.0))


def test_rejects_non_finite_sample(identity2) -> None:
    state = stream_init(synthesize_plan(identity2))
    with pytest.raises(SignalError):
        stream_push(state, float('nan'))


def test_identity_stream_costs_no_multiplies(identity2) -> None:
    state = stream_init(synthesize_plan(identity2))
    steps = list(stream_signal(state.plan, [1, 2, 3, 4], state))
    assert [s.result.values for s in steps] == [(1, 2), (2, 3), (3, 4)]
    assert state.total.multiplies == 0
    assert state.total.adds == 0


def test_first_window_pays_batch_cost_plus_backfill(random_bank, rational_signal) -> None:
    matrix = random_bank(6, 8, digits=2, seed=1)
    plan = synthesize_plan(matrix)
    state = stream_init(plan)
    list(stream_signal(plan, rational_signal(8, seed=3), state))
    seen, expected = set(), 0
    for column in zip(*matrix.scaled):
        seen |= {abs(v) for v in column if v != 0 and abs(v) != matrix.unit}
        expected += len(seen)
    assert state.cold_tally.multiplies == expected
    assert state.cold_tally.multiplies >= plan.cost.multiplies
    assert state.cold_tally.adds <= plan.cost.adds


def test_samples_meet_later_columns_without_extra_multiplies() -> None:
    plan = synthesize_plan(QuantizedMatrix(((1, 2, 3),), 1))
    steps = list(stream_signal(plan, range(1, 8)))
    assert [s.result.tally.multiplies for s in steps] == [6, 1, 2, 3, 3]


def test_every_warm_step_within_distinct_magnitudes(random_bank, rational_signal) -> None:
    for digits in (1, 2):
        matrix = random_bank(16, 16, digits=digits, seed=0)
        plan = synthesize_plan(matrix)
        bound = len(matrix.distinct_nonunit_magnitudes())
        steps = list(stream_signal(plan, rational_signal(64, seed=digits)))
        assert all(s.result.tally.multiplies <= bound for s in steps[1:])
        assert steps[0].result.tally.multiplies >= plan.cost.multiplies


def test_repeated_coefficients_reuse_partial_sums() -> None:
    plan = synthesize_plan(QuantizedMatrix(((5, 5, 5, 5),), 1))
    assert plan.cost.adds == 3
    state = stream_init(plan)
    list(stream_signal(plan, [Fraction(n, 7) for n in range(1, 41)], state))
    summary = stream_cost_summary(state)
    assert summary.warm_adds_per_step < 3
    assert state.step_tally.adds == 2
    assert summary.warm_multiplies_per_step == 1.0
    assert summary.warm_cache_hits_per_step > 0
    assert 0.0 < summary.cache_hit_rate < 1.0


def test_stream_matches_batch_on_every_window(random_bank, rational_signal) -> None:
    plan = synthesize_plan(random_bank(4, 6, digits=2, seed=2))
    samples = rational_signal(120, seed=5)
    state = stream_init(plan)
    for step in stream_signal(plan, samples, state):
        window = samples[step.step - 5:step.step + 1]
        assert step.result.outputs == evaluate_plan(plan, window).outputs
        _assert_caches_sound(state)
    assert state.windows == 115


def test_warm_multiplies_bounded_by_distinct_magnitudes(random_bank, rational_signal) -> None:
    for digits in (1, 2, 3):
        matrix = random_bank(6, 10, digits=digits, seed=digits)
        plan = synthesize_plan(matrix)
        state = stream_init(plan)
        bound = len(matrix.distinct_nonunit_magnitudes())
        for step in stream_signal(plan, rational_signal(60, seed=digits), state):
            if step.step > plan.m - 1:
                assert step.result.tally.multiplies <= bound


def test_normalization_ops_are_counted_separately(random_bank, rational_signal) -> None:
    plan = synthesize_plan(random_bank(3, 4, digits=1, seed=7))
    steps = list(stream_signal(plan, rational_signal(10, seed=1)))
    first, later = steps[0].result.tally, steps[-1].result.tally
    assert (first.norm_multiplies, first.norm_adds, first.norm_divisions) == (1, 1, 3)
    assert (later.norm_multiplies, later.norm_adds, later.norm_divisions) == (2, 2, 3)
    assert later.fresh_ops == later.multiplies + later.adds + later.shifts


def test_cost_summary_single_window_uses_it_as_warm() -> None:
    state = stream_init(synthesize_plan(QuantizedMatrix(((3, 4),), 1)))
    list(stream_signal(state.plan, [1, 2], state))
    summary = stream_cost_summary(state)
    assert summary.windows == 1
    assert summary.warm_multiplies_per_step == summary.multiplies_per_step == 3.0


def test_states_sharing_a_plan_are_independent(random_bank, rational_signal) -> None:
    plan = synthesize_plan(random_bank(3, 5, digits=2, seed=4))
    signal = rational_signal(30, seed=9)
    alone = [s.result.outputs for s in stream_signal(plan, signal)]
    first, second = stream_init(plan), stream_init(plan)
    interleaved = []
    for sample in signal:
        stream_push(second, -sample)
        step = stream_push(first, sample)
        if step is not None:
            interleaved.append(step.result.outputs)
    assert interleaved == alone


@pytest.mark.slow
def test_long_stream_is_exact_and_normalized(random_bank, rational_signal) -> None:
    plan = synthesize_plan(random_bank(8, 16, digits=2, seed=0))
    samples = rational_signal(10_000, seed=1)
    for step in stream_signal(plan, samples):
        window = samples[step.step - 15:step.step + 1]
        assert step.result.outputs == evaluate_plan(plan, window).outputs
        if step.correlations is not None:
            norm = math.sqrt(float(sum(v * v for v in window)))
            expected = [float(v) / norm for v in step.result.values]
            assert list(step.correlations) == pytest.approx(expected, abs=1e-12)
