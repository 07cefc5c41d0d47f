"""
Streaming Correlation Engine
Evaluates a plan on every one-sample-shifted window of a continuous signal.

Consecutive windows share all but one sample, so the engine keeps:
- a product cache keyed by (absolute sample index, coefficient magnitude):
  each sample is multiplied by each magnitude once, whatever column it
  currently sits in. The first window also fills in, for every sample, the
  magnitudes of the columns it will slide through later, so no warm step
  computes more products than there are distinct magnitudes.
- a partial-sum cache keyed by (signature, anchor): the signature is the
  node's linear form as (lag from anchor, coefficient) pairs, normalized so
  the first coefficient is positive, and the anchor is the absolute index
  of its earliest sample. Any node with the same form over the same samples
  reuses the value, no matter which row or step computed it.
- a running sum of squares for the window norm

Entries older than the next window's first sample are evicted after every
step. A StreamState has a single owner; many states may share one plan.
"""
import logging
import math
from collections import deque
from fractions import Fraction
from typing import Deque, Dict, Iterable, Iterator, List, Optional, Tuple

from models import CostSummary, CostTally, EvalResult, MultiplicationPlan, NodeKind, StreamStep
from services.exceptions import SignalError
from services.quantization import Real, to_rational

logger = logging.getLogger(__name__)

Signature = Tuple[Tuple[int, Fraction], ...]


def _linear_forms(plan: MultiplicationPlan) -> List[Dict[int, Fraction]]:
    """Per node: window position -> coefficient of the value it computes."""
    scale = plan.scale
    base = Fraction(plan.base)
    forms: List[Dict[int, Fraction]] = []
    for node in plan.nodes:
        if node.kind == NodeKind.INPUT:
            form = {node.position: Fraction(1)}
        elif node.kind == NodeKind.MUL:
            factor = node.magnitude * scale
            form = {p: c * factor for p, c in forms[node.child].items()}
        elif node.kind == NodeKind.SHIFT:
            factor = base ** node.power
            form = {p: c * factor for p, c in forms[node.child].items()}
        elif node.kind == NodeKind.ADD:
            form = dict(forms[node.left])
            for p, c in forms[node.right].items():
                form[p] = form.get(p, Fraction(0)) + node.sign * c
            form = {p: c for p, c in form.items() if c != 0}
        else:
            form = {}
        forms.append(form)
    return forms


def _signature(form: Dict[int, Fraction]) -> Optional[Tuple[int, Signature, int]]:
    """(leftmost position, normalized signature, orientation) or None for a zero form."""
    if not form:
        return None
    first = min(form)
    items = sorted(form.items())
    orientation = 1 if items[0][1] > 0 else -1
    return first, tuple((p - first, orientation * c) for p, c in items), orientation


class StreamState:
    """
    Sliding-window state for one signal streamed through one plan.

    Attributes:
        plan: Immutable plan being streamed
        ring: Last m samples as (absolute index, exact value)
        product_cache: absolute index -> {magnitude: product}
        sum_cache: anchor index -> {signature: value}
        norm_acc: Exact sum of squares over the current window
        step_tally: Tally of the most recent push
    """

    def __init__(self, plan: MultiplicationPlan):
        self.plan = plan
        self.m = plan.m
        self.ring: Deque[Tuple[int, Fraction]] = deque(maxlen=plan.m)
        self.product_cache: Dict[int, Dict[int, Fraction]] = {}
        self.sum_cache: Dict[int, Dict[Signature, Fraction]] = {}
        self.norm_acc = Fraction(0)
        self.step_tally = CostTally()
        self.samples_ingested = 0
        self.windows = 0
        self.total = CostTally()
        self.cold_tally: Optional[CostTally] = None

        self._unit = plan.base ** plan.digits
        self._signatures = [_signature(form) for form in _linear_forms(plan)]
        self._outputs = plan.outputs()
        self._backfill = self._backfill_magnitudes(plan)

    @staticmethod
    def _backfill_magnitudes(plan: MultiplicationPlan) -> List[Tuple[int, ...]]:
        """Per position p: magnitudes of input-fed mul nodes in columns 0..p."""
        columns: List[set] = [set() for _ in range(plan.m)]
        for node in plan.nodes:
            if node.kind == NodeKind.MUL and plan.nodes[node.child].kind == NodeKind.INPUT:
                columns[plan.nodes[node.child].position].add(node.magnitude)
        seen: set = set()
        backfill = []
        for magnitudes in columns:
            seen |= magnitudes
            backfill.append(tuple(sorted(seen)))
        return backfill

    def __repr__(self):
        return f'<StreamState samples={self.samples_ingested} windows={self.windows} m={self.m}>'

    @property
    def is_full(self) -> bool:
        return len(self.ring) == self.m

    @property
    def window_start(self) -> int:
        """Absolute index of the oldest sample in the current window."""
        return self.samples_ingested - len(self.ring)

    def window(self) -> List[Fraction]:
        return [value for _, value in self.ring]

    def sample_at(self, index: int) -> Fraction:
        """Exact sample at an absolute index still held in the window."""
        offset = index - self.window_start
        if not 0 <= offset < len(self.ring):
            raise SignalError(f"Sample {index} is outside the current window")
        return self.ring[offset][1]

    def cache_entries(self) -> Iterator[Tuple[str, int, object, Fraction]]:
        """
        Yield every cached value for soundness checks.

        Yields:
            ('product', sample index, magnitude, value) and
            ('sum', anchor index, signature, value) tuples
        """
        for index, products in self.product_cache.items():
            for magnitude, value in products.items():
                yield 'product', index, magnitude, value
        for anchor, sums in self.sum_cache.items():
            for signature, value in sums.items():
                yield 'sum', anchor, signature, value

    def _evaluate(self, anchor: int) -> Tuple[Tuple[Fraction, ...], CostTally]:
        plan = self.plan
        window = self.window()
        scale = plan.scale
        base = Fraction(plan.base)
        values: List[Optional[Fraction]] = [None] * len(plan.nodes)
        multiplies = adds = shifts = hits = 0

        for node in plan.nodes:
            kind = node.kind
            if kind == NodeKind.INPUT:
                values[node.id] = window[node.position]
                continue
            if kind == NodeKind.OUTPUT:
                value = Fraction(0) if node.child is None else values[node.child]
                values[node.id] = -value if node.negate else value
                continue

            if kind == NodeKind.MUL and plan.nodes[node.child].kind == NodeKind.INPUT:
                products = self.product_cache.setdefault(anchor + plan.nodes[node.child].position, {})
                cached = products.get(node.magnitude)
                if cached is not None:
                    values[node.id] = cached
                    hits += 1
                else:
                    values[node.id] = products[node.magnitude] = values[node.child] * node.magnitude * scale
                    multiplies += node.magnitude != self._unit
                continue

            signature = self._signatures[node.id]
            bucket = None
            if signature is not None:
                first, key, orientation = signature
                bucket = self.sum_cache.setdefault(anchor + first, {})
                cached = bucket.get(key)
                if cached is not None:
                    values[node.id] = orientation * cached
                    hits += 1
                    continue

            if kind == NodeKind.MUL:
                value = values[node.child] * node.magnitude * scale
                multiplies += node.magnitude != self._unit
            elif kind == NodeKind.SHIFT:
                value = values[node.child] * base ** node.power
                shifts += 1
            else:
                right = values[node.right]
                value = values[node.left] + right if node.sign > 0 else values[node.left] - right
                adds += 1
            values[node.id] = value
            if bucket is not None:
                bucket[key] = orientation * value

        unit = self._unit
        outputs = tuple(values[out.id] * unit for out in self._outputs)
        return outputs, CostTally(multiplies=multiplies, adds=adds, shifts=shifts, cache_hits=hits)

    def _backfill_products(self, anchor: int) -> int:
        """Compute the products each window sample needs at smaller positions; returns the multiply count."""
        scale = self.plan.scale
        multiplies = 0
        for position, magnitudes in enumerate(self._backfill):
            value = self.ring[position][1]
            products = self.product_cache.setdefault(anchor + position, {})
            for magnitude in magnitudes:
                if magnitude not in products:
                    products[magnitude] = value * magnitude * scale
                    multiplies += magnitude != self._unit
        return multiplies

    def _evict(self, keep_from: int) -> None:
        for index in [i for i in self.product_cache if i < keep_from]:
            del self.product_cache[index]
        for anchor in [a for a in self.sum_cache if a < keep_from]:
            del self.sum_cache[anchor]


def stream_init(plan: MultiplicationPlan) -> StreamState:
    """
    Create an empty streaming state for a plan.

    Args:
        plan: Valid multiplication plan

    Returns:
        StreamState: No samples, empty caches; output starts after m pushes
    """
    logger.debug(f"[STREAM] Initialized stream for plan K={plan.K} m={plan.m}")
    return StreamState(plan)


def stream_push(state: StreamState, sample: Real) -> Optional[StreamStep]:
    """
    Ingest one sample and, once the window is full, emit its correlations.

    Args:
        state: Stream state (mutated)
        sample: Next signal sample a_t

    Returns:
        StreamStep for the window ending at this sample, or None while fewer
        than m samples have arrived

    Raises:
        SignalError: If the sample is non-finite
    """
    value = to_rational(sample)
    index = state.samples_ingested
    norm_multiplies = norm_adds = 0

    if state.is_full:
        _, oldest = state.ring[0]
        state.norm_acc -= oldest * oldest
        norm_multiplies += 1
        norm_adds += 1
    state.ring.append((index, value))
    state.norm_acc += value * value
    norm_multiplies += 1
    norm_adds += 1
    state.samples_ingested += 1

    if not state.is_full:
        state.step_tally = CostTally(norm_multiplies=norm_multiplies, norm_adds=norm_adds)
        return None

    anchor = state.window_start
    outputs, tally = state._evaluate(anchor)
    backfilled = state._backfill_products(anchor) if state.windows == 0 else 0
    result_values = [v * state.plan.scale for v in outputs]

    norm = math.sqrt(float(state.norm_acc))
    if state.norm_acc == 0:
        logger.warning(f"[STREAM] Window ending at sample {index} has zero norm; correlations undefined")
        correlations = None
        divisions = 0
    else:
        correlations = tuple(float(v) / norm for v in result_values)
        divisions = len(correlations)

    tally = CostTally(
        multiplies=tally.multiplies + backfilled,
        adds=tally.adds,
        shifts=tally.shifts,
        cache_hits=tally.cache_hits,
        norm_multiplies=norm_multiplies,
        norm_adds=norm_adds,
        norm_divisions=divisions,
    )
    state.step_tally = tally
    state.total = state.total + tally
    state.windows += 1
    if state.cold_tally is None:
        state.cold_tally = tally
    state._evict(anchor + 1)

    logger.debug(f"[STREAM] step {index}: mults={tally.multiplies} adds={tally.adds} "
                 f"shifts={tally.shifts} hits={tally.cache_hits}")
    return StreamStep(index, EvalResult(outputs, state.plan.scale, tally), norm, correlations)


def window_norm(state: StreamState) -> float:
    """
    Euclidean norm of the current window, maintained incrementally.

    Raises:
        SignalError: If fewer than m samples have arrived
    """
    if not state.is_full:
        raise SignalError(f"Window not full: {len(state.ring)} of {state.m} samples")
    return math.sqrt(float(state.norm_acc))


def stream_cost_summary(state: StreamState) -> CostSummary:
    """
    Average streaming work per emitted window since stream_init.

    Returns:
        CostSummary: All-window and post-warmup averages plus the cache hit
                     rate (hits / (hits + fresh multiplies, adds and shifts))

    Raises:
        SignalError: If no window has been emitted yet
    """
    if state.windows == 0 or state.cold_tally is None:
        raise SignalError("No window emitted yet; push at least m samples")

    total = state.total
    windows = state.windows
    if windows > 1:
        warm = CostTally(
            multiplies=total.multiplies - state.cold_tally.multiplies,
            adds=total.adds - state.cold_tally.adds,
            shifts=total.shifts - state.cold_tally.shifts,
            cache_hits=total.cache_hits - state.cold_tally.cache_hits,
        )
        warm_windows = windows - 1
    else:
        warm, warm_windows = total, 1

    lookups = total.cache_hits + total.fresh_ops
    return CostSummary(
        windows=windows,
        multiplies_per_step=total.multiplies / windows,
        adds_per_step=total.adds / windows,
        shifts_per_step=total.shifts / windows,
        cache_hits_per_step=total.cache_hits / windows,
        warm_multiplies_per_step=warm.multiplies / warm_windows,
        warm_adds_per_step=warm.adds / warm_windows,
        warm_shifts_per_step=warm.shifts / warm_windows,
        warm_cache_hits_per_step=warm.cache_hits / warm_windows,
        cache_hit_rate=total.cache_hits / lookups if lookups else 0.0,
        normalization_ops_per_step=total.normalization_ops / windows,
        total=total,
    )


def stream_signal(plan: MultiplicationPlan, samples: Iterable[Real], state: Optional[StreamState] = None) -> Iterator[StreamStep]:
    """Push every sample through a (new or given) stream and yield emitted windows."""
    state = state or stream_init(plan)
    for sample in samples:
        step = stream_push(state, sample)
        if step is not None:
            yield step
