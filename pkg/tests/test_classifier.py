import logging

import numpy as np
import pytest

from services.classifier import (
    EventDetector,
    best_match,
    classify,
    classify_signal,
    correlation,
    detect_events,
    distance,
)
from services.exceptions import InputError
from services.plan_synthesis import synthesize_plan
from services.stream_engine import stream_signal
from utils.signal_generator import gen_test_signal


def _unit(rng, m):
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


def test_distance_matches_squared_euclidean(rng) -> None:
    for _ in range(1000):
        x, r = _unit(rng, 8), _unit(rng, 8)
        c = correlation(x, r)
        assert -1.0 <= c <= 1.0
        assert distance(c) == pytest.approx(float(np.sum((x - r) ** 2)), abs=1e-12)


def test_correlation_extremes(rng) -> None:
    x = _unit(rng, 5)
    assert correlation(x, x) == pytest.approx(1.0)
    assert distance(correlation(x, -x)) == pytest.approx(4.0)
    assert correlation([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert distance(0.0) == 2.0


def test_correlation_rejects_bad_vectors() -> None:
    with pytest.raises(InputError):
        correlation([1.0, 0.0], [1.0])
    with pytest.raises(InputError, match="unit-norm"):
        correlation([3.0, 4.0], [1.0, 0.0])


def test_distance_clamps_out_of_range(caplog) -> None:
    with caplog.at_level(logging.WARNING):
        assert distance(1.0000001) == 0.0
        assert distance(-1.5) == 4.0
    assert "clamping" in caplog.text


def test_classify_picks_lowest_index_on_ties() -> None:
    event = classify([0.2, 0.9, 0.9], 0.8, step=7)
    assert event.template == 1
    assert event.step == 7
    assert event.distance == pytest.approx(0.2)


def test_classify_threshold_is_inclusive() -> None:
    assert classify([0.5, 0.8], 0.8).template == 1
    assert classify([0.5, 0.7], 0.8) is None
    rejected = best_match([0.5, 0.7], 0.8)
    assert not rejected.accepted
    assert rejected.template == 1


def test_classify_rejects_empty_vector() -> None:
    with pytest.raises(InputError):
        classify([], 0.5)


def test_detect_single_peak() -> None:
    events = detect_events([[0.1, 0.2], [0.5, 0.95], [0.3, 0.4]], 0.9, refractory=2)
    assert [(e.step, e.template) for e in events] == [(1, 1)]


def test_detect_nothing_below_threshold() -> None:
    assert detect_events([[0.1], [0.5], [0.89]], 0.9, refractory=1) == []


def test_detect_plateau_reports_first_step() -> None:
    events = detect_events([[0.95], [0.95], [0.2]], 0.9, refractory=2)
    assert [e.step for e in events] == [0]


def test_detect_separated_peaks() -> None:
    scores = [[0.95], [0.1], [0.1], [0.1], [0.96]]
    events = detect_events(scores, 0.9, refractory=2, start_step=10)
    assert [e.step for e in events] == [10, 14]


def test_refractory_keeps_the_stronger_peak() -> None:
    events = detect_events([[0.95], [0.1], [0.97]], 0.9, refractory=3)
    assert [e.step for e in events] == [2]


def test_zero_norm_windows_never_fire() -> None:
    events = detect_events([None, [0.99], None], 0.9, refractory=2)
    assert [e.step for e in events] == [1]


def test_detector_rejects_negative_refractory() -> None:
    with pytest.raises(InputError):
        EventDetector(0.9, -1)


def test_detector_flush_resets_state() -> None:
    detector = EventDetector(0.9, 4)
    for step, score in enumerate([0.1, 0.92, 0.3]):
        assert detector.update(step, [score]) is None
    assert [e.step for e in detector.flush()] == [1]
    assert detector.flush() == []


def test_correlations_are_scale_invariant(random_bank) -> None:
    plan = synthesize_plan(random_bank(3, 6, digits=2, seed=1))
    signal = np.random.default_rng(3).standard_normal(30)
    plain = [s.correlations for s in stream_signal(plan, signal)]
    scaled = [s.correlations for s in stream_signal(plan, signal * 4.0)]
    for a, b in zip(plain, scaled):
        assert list(b) == pytest.approx(list(a), abs=1e-12)


def test_embedded_templates_are_found(random_bank) -> None:
    bank = random_bank(4, 16, digits=2, seed=21)
    plan = synthesize_plan(bank)
    placements = [(20, 2), (70, 0), (120, 3)]
    signal = gen_test_signal(bank, placements, 0.0, seed=0, length=160)

    events, summary = classify_signal(plan, signal, 0.9)
    assert [(e.step, e.template) for e in events] == [(35, 2), (85, 0), (135, 3)]
    assert all(e.correlation >= 0.9 for e in events)
    assert summary.windows == 145


def test_classify_signal_on_short_signal(random_bank) -> None:
    plan = synthesize_plan(random_bank(2, 8, digits=1, seed=0))
    events, summary = classify_signal(plan, [0.5] * 5, 0.9)
    assert events == []
    assert summary is None


def test_pure_noise_yields_no_events(random_bank) -> None:
    bank = random_bank(4, 16, digits=2, seed=21)
    signal = gen_test_signal(bank, [], 1.0, seed=3, length=2000)
    events, summary = classify_signal(synthesize_plan(bank), signal, 0.999)
    assert events == []
    assert summary.windows == 1985
