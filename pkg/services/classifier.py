"""
Classifier Service
Matched-filter decisions over correlation vectors.

A window is attributed to the template with the largest correlation, which
is the template at the smallest distance d = 2(1 - c). Over a stream, an
event is reported at each local maximum of the accepted best correlation.
"""
import logging
import math
from collections import deque
from typing import Deque, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models import ClassificationEvent, CostSummary, MultiplicationPlan, StreamStep
from services.exceptions import InputError
from services.quantization import Real
from services.stream_engine import stream_cost_summary, stream_init, stream_signal

logger = logging.getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-9


def correlation(x: Sequence[float], r: Sequence[float]) -> float:
    """
    Cross-correlation coefficient of two unit vectors.

    Raises:
        InputError: If the lengths differ or either vector is not unit-norm
    """
    xv = np.asarray(x, dtype=np.float64)
    rv = np.asarray(r, dtype=np.float64)
    if xv.shape != rv.shape or xv.ndim != 1:
        raise InputError(f"Vectors must be 1-D with equal length, got {xv.shape} and {rv.shape}")
    for name, vec in (('x', xv), ('r', rv)):
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise InputError(f"Vector {name} must be unit-norm, has norm {norm:.12f}")
    return float(np.dot(xv, rv))


def distance(c: float) -> float:
    """
    Squared Euclidean distance between unit vectors with correlation c.

    Values outside [-1, 1] are clamped with a warning.
    """
    if c > 1.0 or c < -1.0:
        logger.warning(f"[CLASSIFY] Correlation {c!r} outside [-1, 1]; clamping")
        c = min(1.0, max(-1.0, c))
    return 2.0 * (1.0 - c)


def best_match(c_vec: Sequence[float], threshold: float, step: int = 0) -> ClassificationEvent:
    """
    Pick the best-correlated template, accepted or not.

    Ties go to the lowest template index.

    Raises:
        InputError: If c_vec is empty
    """
    if len(c_vec) == 0:
        raise InputError("Correlation vector is empty")
    template = int(np.argmax(np.asarray(c_vec, dtype=np.float64)))
    value = float(c_vec[template])
    return ClassificationEvent(step, template, value, distance(value), value >= threshold)


def classify(c_vec: Sequence[float], threshold: float, step: int = 0) -> Optional[ClassificationEvent]:
    """
    Attribute a window to its closest template.

    Args:
        c_vec: K correlations of one window
        threshold: Minimum correlation to accept (inclusive)
        step: Window-end index recorded on the event

    Returns:
        ClassificationEvent if the best correlation reaches the threshold,
        otherwise None

    Example:
        >>> classify([0.2, 0.9, 0.9], 0.8).template
        1
    """
    event = best_match(c_vec, threshold, step)
    return event if event.accepted else None


class EventDetector:
    """
    Single-owner state machine turning per-window correlations into events.

    A step t is reported when its best correlation is accepted, strictly
    greater than the best correlation of each of the h preceding steps and
    not smaller than any of the h following ones, h = max(refractory - 1, 1).
    Decisions lag the input by h steps; call flush() at end of stream.

    The window is centered, not forward-only: an accepted step followed
    within h steps by a strictly stronger one is dropped in favour of the
    later peak, so the earlier crossing does not block it.
    """

    def __init__(self, threshold: float, refractory: int):
        if refractory < 0:
            raise InputError(f"Refractory period must be >= 0, got {refractory}")
        self.threshold = threshold
        self.refractory = refractory
        self.horizon = max(refractory - 1, 1)
        self._history: Deque[Tuple[float, Optional[ClassificationEvent]]] = deque(maxlen=2 * self.horizon + 1)
        self._seen = 0

    def __repr__(self):
        return f'<EventDetector threshold={self.threshold} refractory={self.refractory} seen={self._seen}>'

    def _decide(self, index: int) -> Optional[ClassificationEvent]:
        score, event = self._history[index]
        if event is None:
            return None
        scores = [s for s, _ in self._history]
        before = scores[max(0, index - self.horizon):index]
        after = scores[index + 1:index + 1 + self.horizon]
        if any(s >= score for s in before) or any(s > score for s in after):
            return None
        return event

    def update(self, step: int, c_vec: Optional[Sequence[float]]) -> Optional[ClassificationEvent]:
        """
        Feed the correlations of one window (None for an undefined window).

        Returns:
            The event decided by this update, if any (it belongs to the
            window h steps back)
        """
        event = best_match(c_vec, self.threshold, step) if c_vec is not None else None
        if event is not None and event.accepted:
            self._history.append((event.correlation, event))
        else:
            self._history.append((-math.inf, None))
        self._seen += 1

        if self._seen <= self.horizon:
            return None
        return self._decide(len(self._history) - 1 - self.horizon)

    def flush(self) -> List[ClassificationEvent]:
        """Decide the trailing windows that never saw h successors."""
        pending = min(self.horizon, self._seen)
        start = len(self._history) - pending
        events = [e for e in (self._decide(i) for i in range(start, len(self._history))) if e is not None]
        self._history.clear()
        self._seen = 0
        return events


def detect_events(
    c_vecs: Iterable[Optional[Sequence[float]]],
    threshold: float,
    refractory: int,
    start_step: int = 0
) -> List[ClassificationEvent]:
    """
    Detect events in a sequence of per-window correlation vectors.

    Args:
        c_vecs: Correlations per consecutive window (None = zero-norm window)
        threshold: Acceptance threshold (inclusive)
        refractory: Minimum spacing in steps between reported events
        start_step: Window-end index of the first vector

    Returns:
        List[ClassificationEvent]: Events in step order
    """
    detector = EventDetector(threshold, refractory)
    events = []
    for offset, c_vec in enumerate(c_vecs):
        event = detector.update(start_step + offset, c_vec)
        if event is not None:
            events.append(event)
    events.extend(detector.flush())
    return events


def detect_stream_events(steps: Iterable[StreamStep], threshold: float, refractory: int) -> List[ClassificationEvent]:
    """Event detection over streamed windows, stamped with their own steps."""
    detector = EventDetector(threshold, refractory)
    events = []
    for step in steps:
        event = detector.update(step.step, step.correlations)
        if event is not None:
            events.append(event)
    events.extend(detector.flush())
    return events


def classify_signal(
    plan: MultiplicationPlan,
    samples: Iterable[Real],
    threshold: float,
    refractory: Optional[int] = None
) -> Tuple[List[ClassificationEvent], Optional[CostSummary]]:
    """
    Stream a signal through a plan and report detected template occurrences.

    Args:
        plan: Plan for the template bank
        samples: Signal samples
        threshold: Acceptance threshold
        refractory: Minimum event spacing; defaults to the window length m

    Returns:
        (events, streaming cost summary or None if no window was emitted)
    """
    refractory = plan.m if refractory is None else refractory
    state = stream_init(plan)
    events = detect_stream_events(stream_signal(plan, samples, state), threshold, refractory)
    summary = stream_cost_summary(state) if state.windows else None

    for event in events:
        logger.info(f"[CLASSIFY] step={event.step} template={event.template} c={event.correlation:.6f}")
    logger.info(f"[CLASSIFY] {len(events)} event(s) over {state.windows} window(s)")
    return events, summary
