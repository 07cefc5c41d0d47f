"""
Domain models for fastcorr.

Immutable value types shared by every service: quantized template banks,
multiplication plans and their nodes, cost tallies, evaluation results,
streaming outputs, classification events and benchmark rows.
"""
import json
from dataclasses import dataclass, field, asdict
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from services.exceptions import PlanFormatError


@dataclass(frozen=True)
class QuantizedScalar:
    """
    A real number stored exactly as scaled_value * base**(-scale_digits).

    Attributes:
        scaled_value: Signed integer mantissa
        scale_digits: Number D of fractional base-`base` digits kept
        base: Radix of the fixed-point representation (10 or 2)
    """
    scaled_value: int
    scale_digits: int
    base: int = 10

    @property
    def value(self) -> Fraction:
        """Exact rational reconstruction."""
        return Fraction(self.scaled_value, self.base ** self.scale_digits)

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f'<QuantizedScalar {self.scaled_value}e-{self.scale_digits} base={self.base}>'


@dataclass(frozen=True)
class QuantizedMatrix:
    """
    Template bank [R] of K templates of length m in one fixed-point format.

    Entries are kept as scaled integers so plan arithmetic stays exact.

    Attributes:
        scaled: K rows of m scaled integers
        digits: Fractional digit count D shared by every entry
        base: Radix shared by every entry
    """
    scaled: Tuple[Tuple[int, ...], ...]
    digits: int
    base: int = 10

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.scaled)
        if not rows or not rows[0]:
            raise ValueError("QuantizedMatrix needs at least one row and one column")
        width = len(rows[0])
        for k, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"Row {k} has {len(row)} entries, expected {width}")
        object.__setattr__(self, 'scaled', rows)

    def __repr__(self):
        return f'<QuantizedMatrix K={self.K} m={self.m} D={self.digits} base={self.base}>'

    @property
    def K(self) -> int:
        return len(self.scaled)

    @property
    def m(self) -> int:
        return len(self.scaled[0])

    @property
    def scale(self) -> Fraction:
        """Common scale base**(-D) turning scaled integers into values."""
        return Fraction(1, self.base ** self.digits)

    def entry(self, k: int, i: int) -> QuantizedScalar:
        return QuantizedScalar(self.scaled[k][i], self.digits, self.base)

    @property
    def entries(self) -> Tuple[Tuple[QuantizedScalar, ...], ...]:
        return tuple(
            tuple(QuantizedScalar(v, self.digits, self.base) for v in row)
            for row in self.scaled
        )

    def to_float(self) -> np.ndarray:
        """Floating reconstruction as a K x m float64 array."""
        return np.array(self.scaled, dtype=np.float64) / float(self.base ** self.digits)

    def column_magnitudes(self, i: int) -> List[int]:
        """Sorted distinct nonzero magnitudes of column i."""
        return sorted({abs(row[i]) for row in self.scaled if row[i] != 0})

    @property
    def unit(self) -> int:
        """Scaled magnitude of a coefficient equal to 1 (base**D)."""
        return self.base ** self.digits

    def nonunit_column_counts(self) -> List[int]:
        """U_i per column: distinct nonzero magnitudes other than the unit coefficient."""
        return [
            len([mu for mu in self.column_magnitudes(i) if mu != self.unit])
            for i in range(self.m)
        ]

    def distinct_nonunit_magnitudes(self) -> List[int]:
        """Distinct nonzero non-unit magnitudes over the whole matrix (U_total)."""
        return sorted({abs(v) for row in self.scaled for v in row if v != 0 and abs(v) != self.unit})


@dataclass(frozen=True)
class CostPolicy:
    """
    How plan operations are counted and how hard CSE works.

    Attributes:
        count_shifts_as_multiplies: Fold Shift nodes into the multiply count
        cse_max_passes: Upper bound on CSE passes during synthesis
    """
    count_shifts_as_multiplies: bool = False
    cse_max_passes: int = 64

    def __post_init__(self):
        if self.cse_max_passes < 0:
            raise ValueError(f"cse_max_passes must be >= 0, got {self.cse_max_passes}")


@dataclass(frozen=True)
class CostTally:
    """
    Operation counts for one evaluation, one streaming step, or an aggregate.

    Normalization work (window norm upkeep and per-output divisions) is kept
    in its own fields and never mixed into multiplies/adds.
    """
    multiplies: int = 0
    adds: int = 0
    shifts: int = 0
    cache_hits: int = 0
    norm_multiplies: int = 0
    norm_adds: int = 0
    norm_divisions: int = 0

    def __add__(self, other: 'CostTally') -> 'CostTally':
        return CostTally(**{
            name: getattr(self, name) + getattr(other, name)
            for name in self.__dataclass_fields__
        })

    @property
    def fresh_ops(self) -> int:
        """Multiplies, adds and shifts actually performed."""
        return self.multiplies + self.adds + self.shifts

    @property
    def normalization_ops(self) -> int:
        return self.norm_multiplies + self.norm_adds + self.norm_divisions

    def as_dict(self) -> Dict[str, int]:
        return asdict(self)


class NodeKind(str, Enum):
    """Plan node taxonomy."""
    INPUT = 'input'
    MUL = 'mul'
    SHIFT = 'shift'
    ADD = 'add'
    OUTPUT = 'output'


@dataclass(frozen=True)
class PlanNode:
    """
    One scalar operation of a multiplication plan.

    Only the fields relevant to `kind` are set:
        input:  position
        mul:    child, magnitude (positive scaled integer; multiplies by
                magnitude * base**(-D), so magnitude base**D is the unit)
        shift:  child, power (scale by base**power)
        add:    left, right, sign (+1 or -1 applied to right)
        output: child (None for a constant-zero row), template, negate
    """
    id: int
    kind: NodeKind
    position: Optional[int] = None
    child: Optional[int] = None
    magnitude: Optional[int] = None
    power: Optional[int] = None
    left: Optional[int] = None
    right: Optional[int] = None
    sign: int = 1
    template: Optional[int] = None
    negate: bool = False

    def children(self) -> Tuple[int, ...]:
        if self.kind == NodeKind.ADD:
            return (self.left, self.right)
        if self.child is not None:
            return (self.child,)
        return ()

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'id': self.id, 'kind': self.kind.value}
        if self.kind == NodeKind.INPUT:
            data['position'] = self.position
        elif self.kind == NodeKind.MUL:
            data.update(child=self.child, magnitude=self.magnitude)
        elif self.kind == NodeKind.SHIFT:
            data.update(child=self.child, power=self.power)
        elif self.kind == NodeKind.ADD:
            data.update(left=self.left, right=self.right, sign='+' if self.sign > 0 else '-')
        else:
            data.update(child=self.child, template=self.template, negate=self.negate)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PlanNode':
        try:
            kind = NodeKind(data['kind'])
            node_id = int(data['id'])
            if kind == NodeKind.INPUT:
                return cls(node_id, kind, position=int(data['position']))
            if kind == NodeKind.MUL:
                return cls(node_id, kind, child=int(data['child']), magnitude=int(data['magnitude']))
            if kind == NodeKind.SHIFT:
                return cls(node_id, kind, child=int(data['child']), power=int(data['power']))
            if kind == NodeKind.ADD:
                if data['sign'] not in ('+', '-'):
                    raise ValueError(f"bad sign {data['sign']!r}")
                return cls(node_id, kind, left=int(data['left']), right=int(data['right']),
                           sign=1 if data['sign'] == '+' else -1)
            child = data.get('child')
            return cls(node_id, kind, child=None if child is None else int(child),
                       template=int(data['template']), negate=bool(data.get('negate', False)))
        except (KeyError, TypeError, ValueError) as e:
            raise PlanFormatError(f"Invalid plan node {data!r}: {e}")


@dataclass(frozen=True)
class MultiplicationPlan:
    """
    Acyclic shift-add program computing the scaled product [R]·x exactly.

    Node values are exact rationals in real units; evaluation reports them
    in scaled units (value * base**D) alongside the common `scale`.

    Attributes:
        nodes: Nodes in id order (children always have smaller ids)
        K: Number of templates (Output nodes)
        m: Window length (Input positions)
        base: Radix of the source matrix
        digits: Fractional digit count D of the source matrix
        cost: Static operation counts under the synthesis policy
        count_shifts_as_multiplies: Policy flag the cost was computed with
    """
    nodes: Tuple[PlanNode, ...]
    K: int
    m: int
    base: int
    digits: int
    cost: CostTally = field(default_factory=CostTally)
    count_shifts_as_multiplies: bool = False

    def __repr__(self):
        return (f'<MultiplicationPlan K={self.K} m={self.m} D={self.digits} base={self.base} '
                f'nodes={len(self.nodes)} mults={self.cost.multiplies} adds={self.cost.adds}>')

    @property
    def scale(self) -> Fraction:
        return Fraction(1, self.base ** self.digits)

    def outputs(self) -> List[PlanNode]:
        """Output nodes ordered by template index."""
        return sorted((n for n in self.nodes if n.kind == NodeKind.OUTPUT), key=lambda n: n.template)

    def validate(self) -> None:
        """
        Check structural invariants.

        Raises:
            PlanFormatError: If ids are not dense, a child does not precede its
                parent, an Output is missing or duplicated, or a parameter is
                out of range
        """
        templates = set()
        for index, node in enumerate(self.nodes):
            if node.id != index:
                raise PlanFormatError(f"Node ids must be dense and ordered: position {index} has id {node.id}")
            for child in node.children():
                if child is None or not 0 <= child < node.id:
                    raise PlanFormatError(f"Node {node.id} references child {child} that does not precede it")
            if node.kind == NodeKind.INPUT and not 0 <= (node.position if node.position is not None else -1) < self.m:
                raise PlanFormatError(f"Input node {node.id} has position {node.position} outside [0, {self.m})")
            if node.kind == NodeKind.MUL and (node.magnitude is None or node.magnitude <= 0):
                raise PlanFormatError(f"MulCoeff node {node.id} needs a positive magnitude")
            if node.kind in (NodeKind.MUL, NodeKind.SHIFT):
                if self.nodes[node.child].kind not in (NodeKind.INPUT, NodeKind.MUL, NodeKind.SHIFT):
                    raise PlanFormatError(f"Node {node.id} may only scale an input or coefficient node")
            if node.kind == NodeKind.ADD and node.sign not in (1, -1):
                raise PlanFormatError(f"Add node {node.id} has sign {node.sign}")
            if node.kind == NodeKind.OUTPUT:
                if node.template is None or not 0 <= node.template < self.K:
                    raise PlanFormatError(f"Output node {node.id} has template {node.template} outside [0, {self.K})")
                if node.template in templates:
                    raise PlanFormatError(f"Template {node.template} has more than one Output node")
                if node.child is not None and self.nodes[node.child].kind == NodeKind.OUTPUT:
                    raise PlanFormatError(f"Output node {node.id} cannot feed from another Output")
                templates.add(node.template)
            for child in node.children():
                if self.nodes[child].kind == NodeKind.OUTPUT:
                    raise PlanFormatError(f"Node {node.id} consumes Output node {child}")
        if len(templates) != self.K:
            raise PlanFormatError(f"Plan has {len(templates)} Output nodes, expected {self.K}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'base': self.base,
            'D': self.digits,
            'K': self.K,
            'm': self.m,
            'count_shifts_as_multiplies': self.count_shifts_as_multiplies,
            'cost': self.cost.as_dict(),
            'nodes': [node.to_dict() for node in self.nodes],
        }

    def to_json(self) -> str:
        """Deterministic JSON serialization (node order = id order)."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MultiplicationPlan':
        try:
            plan = cls(
                nodes=tuple(PlanNode.from_dict(n) for n in data['nodes']),
                K=int(data['K']),
                m=int(data['m']),
                base=int(data['base']),
                digits=int(data['D']),
                cost=CostTally(**data.get('cost', {})),
                count_shifts_as_multiplies=bool(data.get('count_shifts_as_multiplies', False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, PlanFormatError):
                raise
            raise PlanFormatError(f"Invalid plan document: {e}")
        plan.validate()
        return plan

    @classmethod
    def from_json(cls, text: str) -> 'MultiplicationPlan':
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise PlanFormatError(f"Plan is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise PlanFormatError("Plan JSON must be an object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class EvalResult:
    """
    Exact correlation vector c = [R]·x.

    Attributes:
        outputs: K exact values in scaled units (real value = output * scale)
        scale: Common scale base**(-D)
        tally: Operations spent producing the outputs
    """
    outputs: Tuple[Fraction, ...]
    scale: Fraction
    tally: CostTally = field(default_factory=CostTally)

    @property
    def values(self) -> Tuple[Fraction, ...]:
        return tuple(v * self.scale for v in self.outputs)

    def as_floats(self) -> List[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True)
class EquivalenceReport:
    """
    Outcome of comparing a plan against the direct oracle.

    On failure `vector`, `expected` and `actual` hold the witness.
    """
    passed: bool
    trials_run: int
    vector: Optional[Tuple[Fraction, ...]] = None
    expected: Optional[Tuple[Fraction, ...]] = None
    actual: Optional[Tuple[Fraction, ...]] = None

    def describe(self) -> str:
        if self.passed:
            return f"plan matches direct product on {self.trials_run} trial vector(s)"
        return (f"mismatch on trial {self.trials_run}: x={[str(v) for v in self.vector]} "
                f"expected={[str(v) for v in self.expected]} actual={[str(v) for v in self.actual]}")


@dataclass(frozen=True)
class StreamStep:
    """
    Correlations for one full window of a streamed signal.

    Attributes:
        step: Absolute sample index of the window's last sample
        result: Raw (unnormalized) correlation vector with this step's tally
        norm: Euclidean norm of the window
        correlations: result / norm per template, None for a zero-norm window
    """
    step: int
    result: EvalResult
    norm: float
    correlations: Optional[Tuple[float, ...]]

    @property
    def zero_norm(self) -> bool:
        return self.correlations is None


@dataclass(frozen=True)
class CostSummary:
    """
    Per-step averages of streaming work since stream_init.

    The warm_* fields average every window after the first (cold) one and
    equal the all-window figures when only one window was emitted.
    """
    windows: int
    multiplies_per_step: float
    adds_per_step: float
    shifts_per_step: float
    cache_hits_per_step: float
    warm_multiplies_per_step: float
    warm_adds_per_step: float
    warm_shifts_per_step: float
    warm_cache_hits_per_step: float
    cache_hit_rate: float
    normalization_ops_per_step: float
    total: CostTally

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['total'] = self.total.as_dict()
        return data


@dataclass(frozen=True)
class ClassificationEvent:
    """
    One matched-filter decision.

    Attributes:
        step: Absolute sample index of the window end
        template: Index k of the best-correlated template
        correlation: c_k
        distance: 2 * (1 - c_k)
        accepted: Whether c_k reached the threshold
    """
    step: int
    template: int
    correlation: float
    distance: float
    accepted: bool

    def __repr__(self):
        return (f'<ClassificationEvent step={self.step} template={self.template} '
                f'c={self.correlation:.6f} accepted={self.accepted}>')


class ViterbiFlag(str, Enum):
    """Whether the Viterbi addition factor is used as printed or is anomalous."""
    AS_PRINTED = 'as_printed'
    ANOMALOUS_NEGATIVE = 'anomalous_negative'


@dataclass(frozen=True)
class BaselineCosts:
    """
    Analytic per-window cost baselines for a K x m template bank.

    Attributes:
        K: Template count
        m: Window length
        P: K * m
        direct_mults: K * m
        direct_adds: K * (m - 1)
        viterbi_alpha_mult: Multiply reduction factor (1 or 1/2)
        viterbi_alpha_add: Addition factor as printed for this P
        viterbi_flag: Marks the negative as-printed addition factor
    """
    K: int
    m: int
    P: int
    direct_mults: int
    direct_adds: int
    viterbi_alpha_mult: float
    viterbi_alpha_add: float
    viterbi_flag: ViterbiFlag

    @property
    def viterbi_mults(self) -> float:
        return self.viterbi_alpha_mult * self.P

    @property
    def viterbi_adds(self) -> float:
        return self.viterbi_alpha_add * self.P


BENCH_COLUMNS = (
    'P', 'K', 'm', 'D', 'trial',
    'direct_mults', 'direct_adds',
    'plan_mults', 'plan_adds', 'plan_shifts',
    'stream_mults_per_step', 'stream_adds_per_step', 'cache_hit_rate',
    'viterbi_alpha_mult', 'viterbi_alpha_add', 'viterbi_flag',
)


@dataclass(frozen=True)
class BenchRow:
    """One benchmark measurement; field order matches BENCH_COLUMNS."""
    P: int
    K: int
    m: int
    D: int
    trial: int
    direct_mults: int
    direct_adds: int
    plan_mults: int
    plan_adds: int
    plan_shifts: int
    stream_mults_per_step: float
    stream_adds_per_step: float
    cache_hit_rate: float
    viterbi_alpha_mult: float
    viterbi_alpha_add: float
    viterbi_flag: str
    unique_magnitudes: int = 0

    @property
    def sort_key(self) -> Tuple[int, int, int, int, int]:
        return (self.P, self.K, self.m, self.D, self.trial)

    def csv_values(self) -> List[str]:
        values = []
        for name in BENCH_COLUMNS:
            value = getattr(self, name)
            values.append(f"{value:.6f}" if isinstance(value, float) else str(value))
        return values
