import math

import numpy as np
import pytest

from models import BENCH_COLUMNS, QuantizedMatrix, ViterbiFlag
from services.benchmark import (
    BASELINE_COLUMNS,
    baseline_costs,
    baseline_table,
    bench_sweep,
    direct_cost,
    parse_sizes,
    rows_to_csv,
    run_trial,
    viterbi_alpha,
)
from services.exceptions import InputError
from services.plan_execution import direct_multiply


def test_direct_cost_examples() -> None:
    assert direct_cost(10, 100) == (1000, 990)
    assert direct_cost(1, 1) == (1, 0)
    with pytest.raises(InputError):
        direct_cost(0, 4)


def test_direct_cost_agrees_with_oracle_tally() -> None:
    rng = np.random.default_rng(17)
    for _ in range(50):
        K, m = (int(v) for v in rng.integers(1, 20, size=2))
        matrix = QuantizedMatrix(tuple(tuple(int(v) for v in row) for row in rng.integers(-9, 10, size=(K, m))), 1)
        tally = direct_multiply(matrix, [1] * m).tally
        assert (tally.multiplies, tally.adds) == direct_cost(K, m)


def test_viterbi_alpha_small_matrices_as_printed() -> None:
    assert viterbi_alpha(16) == (1.0, 0.75, ViterbiFlag.AS_PRINTED)
    alpha_mult, alpha_add, flag = viterbi_alpha(47)
    assert alpha_mult == 1.0
    assert alpha_add == pytest.approx(1 - 1 / math.sqrt(47))
    assert flag == ViterbiFlag.AS_PRINTED


def test_viterbi_alpha_large_matrices_flagged() -> None:
    for P in (48, 100, 4096):
        alpha_mult, alpha_add, flag = viterbi_alpha(P)
        assert alpha_mult == 0.5
        assert alpha_add == pytest.approx(-5.928203, abs=1e-6)
        assert flag == ViterbiFlag.ANOMALOUS_NEGATIVE


def test_baseline_costs() -> None:
    costs = baseline_costs(4, 16)
    assert (costs.P, costs.direct_mults, costs.direct_adds) == (64, 64, 60)
    assert costs.viterbi_mults == 32.0
    assert costs.viterbi_adds < 0


def test_parse_sizes() -> None:
    assert parse_sizes("4x16, 16X16,64*16") == [(4, 16), (16, 16), (64, 16)]
    for bad in ("", "4x", "0x3", "4by16"):
        with pytest.raises(InputError):
            parse_sizes(bad)


def test_single_trial_row() -> None:
    row = run_trial(2, 3, 1, trial=0, seed=5, stream_windows=4)
    assert (row.P, row.K, row.m, row.D, row.trial) == (6, 2, 3, 1, 0)
    assert (row.direct_mults, row.direct_adds) == (6, 4)
    assert row.plan_mults <= 6
    assert row.stream_mults_per_step <= row.unique_magnitudes
    assert 0.0 <= row.cache_hit_rate <= 1.0
    assert row.viterbi_flag == 'as_printed'


def test_sweep_is_sorted_and_complete() -> None:
    rows = bench_sweep([(3, 4), (1, 2)], digits=(2, 1), trials=2, seed=1, stream_windows=4)
    assert len(rows) == 8
    assert [r.sort_key for r in rows] == sorted(r.sort_key for r in rows)
    assert rows[0].P == 2


def test_sweep_output_is_reproducible_across_workers() -> None:
    kwargs = dict(sizes=[(3, 4), (2, 5)], digits=(1, 2), trials=2, seed=42, stream_windows=6)
    serial = rows_to_csv(bench_sweep(workers=1, **kwargs))
    threaded = rows_to_csv(bench_sweep(workers=2, **kwargs))
    assert serial == threaded
    assert serial == rows_to_csv(bench_sweep(workers=1, **kwargs))


def test_seed_changes_measurements() -> None:
    first = bench_sweep([(8, 8)], digits=(2,), seed=0, stream_windows=4)
    second = bench_sweep([(8, 8)], digits=(2,), seed=1, stream_windows=4)
    assert first != second


def test_sweep_rejects_bad_arguments() -> None:
    with pytest.raises(InputError):
        bench_sweep([(2, 2)], seed=-1)
    with pytest.raises(InputError):
        bench_sweep([(2, 2)], trials=-1)
    with pytest.raises(InputError):
        bench_sweep([(2, 0)])
    assert bench_sweep([(2, 2)], trials=0) == []


def test_rows_to_csv_layout() -> None:
    rows = bench_sweep([(2, 2)], digits=(1,), stream_windows=3)
    lines = rows_to_csv(rows).split('\n')
    assert lines[0] == ','.join(BENCH_COLUMNS)
    assert lines[-1] == ''
    cells = lines[1].split(',')
    assert len(cells) == len(BENCH_COLUMNS)
    assert cells[BENCH_COLUMNS.index('viterbi_alpha_add')] == '0.500000'


def test_baseline_table() -> None:
    lines = baseline_table([(16, 16), (4, 16)], digits=1).strip().split('\n')
    assert lines[0] == ','.join(BASELINE_COLUMNS)
    assert [line.split(',')[0] for line in lines[1:]] == ['64', '256']


@pytest.mark.slow
def test_plan_cost_ratio_falls_with_template_count() -> None:
    rows = bench_sweep([(4, 16), (16, 16), (64, 16)], digits=(1,), stream_windows=4)
    ratios = [row.plan_mults / row.direct_mults for row in rows]
    assert ratios == sorted(ratios, reverse=True)
    assert len(set(ratios)) == 3
    for row, ratio in zip(rows, ratios):
        assert row.plan_mults <= 9 * row.m
        assert ratio <= 9 / row.K


@pytest.mark.slow
def test_streaming_beats_batch_multiplies() -> None:
    for row in bench_sweep([(16, 16)], digits=(1, 2), stream_windows=16):
        assert row.stream_mults_per_step <= row.unique_magnitudes
        assert row.stream_mults_per_step < row.plan_mults
        assert row.cache_hit_rate > 0
