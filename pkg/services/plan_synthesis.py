"""
Plan Synthesis Service
Builds shift-add multiplication plans for quantized template banks.

Pipeline:
1. One coefficient node per distinct nonzero magnitude in each column
   (a coefficient of exactly 1 is wired straight through; base-2 mode
   splits magnitudes into odd multiplier + shift)
2. One sum tree per template row, terms in column order, reduced pairwise
3. CSE passes to a fixpoint: merge structural duplicates, otherwise pull
   the most frequent signed operand pair into a shared node
4. Prune nodes no Output reaches

Plans are exact: every node holds an exact linear form of the window, and
the result matches the direct product bit for bit.
"""
import logging
from collections import Counter, defaultdict
from typing import Dict, List, Optional, Sequence, Set, Tuple

from models import CostPolicy, CostTally, MultiplicationPlan, NodeKind, PlanNode, QuantizedMatrix
from services.exceptions import InputError, InvariantViolation

logger = logging.getLogger(__name__)

# (sign, operand id) inside a flattened sum
Term = Tuple[int, int]


def plan_cost(plan: MultiplicationPlan, policy: Optional[CostPolicy] = None) -> CostTally:
    """
    Count the elementary operations a plan performs per evaluation.

    Args:
        plan: Plan to inspect
        policy: Counting policy; defaults to the policy stored with the plan

    Returns:
        CostTally: multiplies = MulCoeff nodes whose coefficient is not 1
                   (magnitude != base**D),
                   adds = Add nodes, shifts = Shift nodes (folded into
                   multiplies when count_shifts_as_multiplies is set)
    """
    fold_shifts = plan.count_shifts_as_multiplies if policy is None else policy.count_shifts_as_multiplies
    unit = plan.base ** plan.digits
    multiplies = sum(1 for n in plan.nodes if n.kind == NodeKind.MUL and n.magnitude != unit)
    adds = sum(1 for n in plan.nodes if n.kind == NodeKind.ADD)
    shifts = sum(1 for n in plan.nodes if n.kind == NodeKind.SHIFT)
    if fold_shifts:
        return CostTally(multiplies=multiplies + shifts, adds=adds, shifts=0)
    return CostTally(multiplies=multiplies, adds=adds, shifts=shifts)


def _make_plan(
    nodes: Sequence[PlanNode],
    K: int,
    m: int,
    base: int,
    digits: int,
    count_shifts_as_multiplies: bool
) -> MultiplicationPlan:
    draft = MultiplicationPlan(tuple(nodes), K, m, base, digits, CostTally(), count_shifts_as_multiplies)
    return MultiplicationPlan(
        draft.nodes, K, m, base, digits, plan_cost(draft), count_shifts_as_multiplies
    )


def _rebuilt(plan: MultiplicationPlan, nodes: Sequence[PlanNode]) -> MultiplicationPlan:
    return _make_plan(nodes, plan.K, plan.m, plan.base, plan.digits, plan.count_shifts_as_multiplies)


def _emit_plan(source: Sequence[PlanNode], roots: Dict[int, List[Term]], output_terms: List[List[Term]]) -> List[PlanNode]:
    """
    Emit a fresh node list from flattened sums.

    `source` supplies the term-layer nodes (Input, MulCoeff, Shift) by id;
    `roots` maps shared sum ids (existing boundary Adds or new extracted
    pairs) to their terms. Nodes are emitted on first use while walking the
    outputs in template order, so the result is deterministic and needs no
    pruning.
    """
    nodes: List[PlanNode] = []
    remap: Dict[int, int] = {}
    anchors: Dict[int, int] = {}

    def append(kind: NodeKind, **fields) -> int:
        node_id = len(nodes)
        nodes.append(PlanNode(node_id, kind, **fields))
        return node_id

    def anchor(op: int) -> int:
        # leftmost window position the operand depends on
        if op not in anchors:
            if op in roots:
                anchors[op] = min(anchor(o) for _, o in roots[op])
            else:
                node = source[op]
                anchors[op] = node.position if node.kind == NodeKind.INPUT else anchor(node.child)
        return anchors[op]

    def ordered(terms: List[Term]) -> List[Term]:
        return sorted(terms, key=lambda t: (anchor(t[1]), t[1], t[0]))

    def emit_tree(terms: List[Term]) -> Tuple[int, int]:
        level = [(emit(op), sign) for sign, op in terms]
        while len(level) > 1:
            paired = []
            for j in range(0, len(level) - 1, 2):
                (left, left_sign), (right, right_sign) = level[j], level[j + 1]
                node_id = append(NodeKind.ADD, left=left, right=right, sign=left_sign * right_sign)
                paired.append((node_id, left_sign))
            if len(level) % 2:
                paired.append(level[-1])
            level = paired
        return level[0]

    def emit(op: int) -> int:
        if op in remap:
            return remap[op]
        if op in roots:
            terms = ordered(roots[op])
            positive = next((j for j, (sign, _) in enumerate(terms) if sign > 0), None)
            if positive is None:
                raise InvariantViolation(f"Shared sum {op} has no positive term")
            terms.insert(0, terms.pop(positive))
            node_id, sign = emit_tree(terms)
            if sign != 1:
                raise InvariantViolation(f"Shared sum {op} emitted with negative orientation")
        else:
            node = source[op]
            if node.kind == NodeKind.INPUT:
                node_id = append(NodeKind.INPUT, position=node.position)
            elif node.kind == NodeKind.MUL:
                node_id = append(NodeKind.MUL, child=emit(node.child), magnitude=node.magnitude)
            elif node.kind == NodeKind.SHIFT:
                node_id = append(NodeKind.SHIFT, child=emit(node.child), power=node.power)
            else:
                raise InvariantViolation(f"Node {op} of kind {node.kind.value} is not a term or shared sum")
        remap[op] = node_id
        return node_id

    for template, terms in enumerate(output_terms):
        if not terms:
            append(NodeKind.OUTPUT, child=None, template=template)
            continue
        child, sign = emit_tree(ordered(terms))
        append(NodeKind.OUTPUT, child=child, template=template, negate=sign < 0)
    return nodes


def _split_power(magnitude: int, base: int) -> Tuple[int, int]:
    """Split magnitude into (odd part, power) with magnitude = odd * base**power."""
    power = 0
    while magnitude % base == 0:
        magnitude //= base
        power += 1
    return magnitude, power


def _seed_terms(matrix: QuantizedMatrix) -> Tuple[List[PlanNode], List[List[Term]]]:
    """
    Create the shared coefficient layer and one signed term list per row.

    Returns:
        Tuple of (term-layer nodes, per-template term lists)
    """
    seed: List[PlanNode] = []
    term_for: Dict[Tuple[int, int], int] = {}

    def append(kind: NodeKind, **fields) -> int:
        node_id = len(seed)
        seed.append(PlanNode(node_id, kind, **fields))
        return node_id

    unit = matrix.unit
    for i in range(matrix.m):
        magnitudes = matrix.column_magnitudes(i)
        if not magnitudes:
            continue
        source = append(NodeKind.INPUT, position=i)
        odd_nodes: Dict[int, int] = {}
        for mu in magnitudes:
            if mu == unit:
                term_for[(i, mu)] = source
            elif matrix.base == 2:
                odd, power = _split_power(mu, 2)
                if odd == 1:
                    # pure power of two: coefficient 2**(power - D)
                    term_for[(i, mu)] = append(NodeKind.SHIFT, child=source, power=power - matrix.digits)
                    continue
                if odd not in odd_nodes:
                    odd_nodes[odd] = append(NodeKind.MUL, child=source, magnitude=odd)
                node = odd_nodes[odd]
                if power:
                    node = append(NodeKind.SHIFT, child=node, power=power)
                term_for[(i, mu)] = node
            else:
                term_for[(i, mu)] = append(NodeKind.MUL, child=source, magnitude=mu)

    output_terms = [
        [(1 if v > 0 else -1, term_for[(i, abs(v))]) for i, v in enumerate(row) if v != 0]
        for row in matrix.scaled
    ]
    return seed, output_terms


def prune(plan: MultiplicationPlan) -> MultiplicationPlan:
    """
    Drop nodes that no Output reaches and re-index the rest densely.

    Args:
        plan: Valid plan

    Returns:
        MultiplicationPlan: Equivalent plan without orphans; node order kept
    """
    live: Set[int] = set()
    for node in reversed(plan.nodes):
        if node.kind == NodeKind.OUTPUT or node.id in live:
            live.add(node.id)
            live.update(node.children())

    if len(live) == len(plan.nodes):
        return plan

    remap: Dict[int, int] = {}
    nodes: List[PlanNode] = []
    for node in plan.nodes:
        if node.id not in live:
            continue
        remap[node.id] = len(nodes)
        nodes.append(_relabel(node, len(nodes), remap))

    logger.debug(f"[CSE] Pruned {len(plan.nodes) - len(nodes)} unreachable node(s)")
    return _rebuilt(plan, nodes)


def _relabel(node: PlanNode, new_id: int, remap: Dict[int, int]) -> PlanNode:
    """Copy a node under a new id with children mapped through remap."""
    return PlanNode(
        id=new_id,
        kind=node.kind,
        position=node.position,
        child=None if node.child is None else remap[node.child],
        magnitude=node.magnitude,
        power=node.power,
        left=None if node.left is None else remap[node.left],
        right=None if node.right is None else remap[node.right],
        sign=node.sign,
        template=node.template,
        negate=node.negate,
    )


def _merge_duplicates(plan: MultiplicationPlan) -> Optional[MultiplicationPlan]:
    """Hash-cons structurally identical nodes; None when nothing merged."""
    seen: Dict[tuple, int] = {}
    remap: Dict[int, int] = {}
    nodes: List[PlanNode] = []
    merged = 0

    for node in plan.nodes:
        if node.kind == NodeKind.OUTPUT:
            remap[node.id] = len(nodes)
            nodes.append(_relabel(node, len(nodes), remap))
            continue
        if node.kind == NodeKind.INPUT:
            key: tuple = ('input', node.position)
        elif node.kind == NodeKind.MUL:
            key = ('mul', remap[node.child], node.magnitude)
        elif node.kind == NodeKind.SHIFT:
            key = ('shift', remap[node.child], node.power)
        else:
            left, right = remap[node.left], remap[node.right]
            # a + b is commutative, a - b is not
            key = ('add', min(left, right), max(left, right), 1) if node.sign > 0 else ('add', left, right, -1)
        if key in seen:
            remap[node.id] = seen[key]
            merged += 1
            continue
        seen[key] = remap[node.id] = len(nodes)
        nodes.append(_relabel(node, len(nodes), remap))

    if not merged:
        return None
    logger.debug(f"[CSE] Merged {merged} structurally identical node(s)")
    return prune(_rebuilt(plan, nodes))


def _flatten(plan: MultiplicationPlan) -> Tuple[Dict[int, List[Term]], List[List[Term]]]:
    """
    Flatten every sum tree into signed operand lists.

    Add nodes referenced more than once are shared sums ("roots") and stay
    operands of their parents; other Adds dissolve into their parent's list.
    """
    fanout = Counter(child for node in plan.nodes for child in node.children())
    nodes = plan.nodes

    def is_root(op: int) -> bool:
        return nodes[op].kind == NodeKind.ADD and fanout[op] >= 2

    def terms_of(op: int, sign: int) -> List[Term]:
        node = nodes[op]
        if node.kind != NodeKind.ADD or is_root(op):
            return [(sign, op)]
        return terms_of(node.left, sign) + terms_of(node.right, sign * node.sign)

    roots = {
        node.id: terms_of(node.left, 1) + terms_of(node.right, node.sign)
        for node in nodes if is_root(node.id)
    }
    outputs = [
        [] if out.child is None else terms_of(out.child, -1 if out.negate else 1)
        for out in plan.outputs()
    ]
    return roots, outputs


def _best_pair(lists: List[List[Term]]) -> Optional[Tuple[Tuple[int, int, int], Set[int]]]:
    """Most frequent signed operand pair across lists; ties go to lowest ids."""
    occurrences: Dict[Tuple[int, int, int], Set[int]] = defaultdict(set)
    for index, terms in enumerate(lists):
        for p in range(len(terms)):
            sign_p, op_p = terms[p]
            for q in range(p + 1, len(terms)):
                sign_q, op_q = terms[q]
                if op_p == op_q:
                    continue
                a, b = (op_p, op_q) if op_p < op_q else (op_q, op_p)
                occurrences[(a, b, sign_p * sign_q)].add(index)

    candidates = [(key, where) for key, where in occurrences.items() if len(where) >= 2]
    if not candidates:
        return None
    return min(candidates, key=lambda kv: (-len(kv[1]), kv[0][0], kv[0][1], -kv[0][2]))


def _replace_pair(terms: List[Term], a: int, b: int, relative: int, pair_id: int) -> List[Term]:
    """Swap one occurrence of (a, relative*b) in terms for the shared pair."""
    for p, (sign_a, op) in enumerate(terms):
        if op != a:
            continue
        for q, (sign_b, other) in enumerate(terms):
            if other == b and q != p and sign_a * sign_b == relative:
                rest = [t for j, t in enumerate(terms) if j not in (p, q)]
                return rest + [(sign_a, pair_id)]
    raise InvariantViolation(f"Pair ({a}, {b}) not present in sum")


def cse_pass(plan: MultiplicationPlan, policy: Optional[CostPolicy] = None) -> Tuple[MultiplicationPlan, bool]:
    """
    Run one common-subexpression elimination pass.

    First merges structurally identical nodes. When nothing merges, extracts
    the signed two-operand combination that appears in the most sums (at
    least two) into one shared Add node.

    Args:
        plan: Valid plan
        policy: Counting policy for the returned plan's cost (defaults to
                the plan's own)

    Returns:
        Tuple[MultiplicationPlan, bool]: (plan, changed)

    Raises:
        InvariantViolation: If a pass would increase the add count
    """
    if policy is not None and policy.count_shifts_as_multiplies != plan.count_shifts_as_multiplies:
        plan = _make_plan(plan.nodes, plan.K, plan.m, plan.base, plan.digits, policy.count_shifts_as_multiplies)

    merged = _merge_duplicates(plan)
    if merged is not None:
        return merged, True

    roots, outputs = _flatten(plan)
    # two-term shared sums are already a single Add
    owners: List[Tuple[str, int]] = []
    lists: List[List[Term]] = []
    for template, terms in enumerate(outputs):
        if len(terms) >= 2:
            owners.append(('output', template))
            lists.append(terms)
    for root_id in sorted(roots):
        if len(roots[root_id]) >= 3:
            owners.append(('root', root_id))
            lists.append(roots[root_id])

    best = _best_pair(lists)
    if best is None:
        return plan, False

    (a, b, relative), where = best
    pair_id = len(plan.nodes)
    roots[pair_id] = [(1, a), (relative, b)]
    for index in sorted(where):
        owner, key = owners[index]
        if owner == 'output':
            outputs[key] = _replace_pair(outputs[key], a, b, relative, pair_id)
        else:
            roots[key] = _replace_pair(roots[key], a, b, relative, pair_id)

    result = prune(_rebuilt(plan, _emit_plan(plan.nodes, roots, outputs)))
    if result.cost.adds >= plan.cost.adds:
        raise InvariantViolation(
            f"CSE pair extraction did not reduce adds ({plan.cost.adds} -> {result.cost.adds})"
        )
    logger.debug(f"[CSE] Extracted pair ({a}, {'+' if relative > 0 else '-'}{b}) shared by "
                 f"{len(where)} sums; adds {plan.cost.adds} -> {result.cost.adds}")
    return result, True


def synthesize_plan(matrix: QuantizedMatrix, policy: Optional[CostPolicy] = None) -> MultiplicationPlan:
    """
    Synthesize an exact shift-add plan computing [R]·x.

    Args:
        matrix: Quantized template bank (K x m)
        policy: Cost policy; defaults to CostPolicy()

    Returns:
        MultiplicationPlan: Pruned plan after CSE reached a fixpoint or
                            policy.cse_max_passes passes

    Raises:
        InputError: If the matrix uses an unsupported base

    Example:
        >>> plan = synthesize_plan(QuantizedMatrix(((10, 0), (0, 10)), 1))
        >>> plan.cost.multiplies, plan.cost.adds
        (0, 0)
    """
    policy = policy or CostPolicy()
    if matrix.base < 2:
        raise InputError(f"Unsupported base {matrix.base}")

    seed, output_terms = _seed_terms(matrix)
    plan = _make_plan(
        _emit_plan(seed, {}, output_terms),
        matrix.K, matrix.m, matrix.base, matrix.digits, policy.count_shifts_as_multiplies
    )
    initial = plan.cost

    passes = 0
    for passes in range(1, policy.cse_max_passes + 1):
        plan, changed = cse_pass(plan)
        if not changed:
            break
    plan = prune(plan)
    plan.validate()

    logger.info(f"[SYNTH] {matrix.K}x{matrix.m} D={matrix.digits} base={matrix.base}: "
                f"mults {initial.multiplies}->{plan.cost.multiplies}, adds {initial.adds}->{plan.cost.adds}, "
                f"shifts {plan.cost.shifts} after {passes} CSE pass(es)")
    return plan


def build_direct_plan(matrix: QuantizedMatrix, count_shifts_as_multiplies: bool = False) -> MultiplicationPlan:
    """
    Build the naive row-by-row plan: one multiply per nonzero entry and a
    left-to-right add chain per row, nothing shared but the inputs.

    For a matrix without zero or ±1 entries its cost is exactly
    K·m multiplies and K·(m−1) adds, the direct-method baseline.
    """
    nodes: List[PlanNode] = []

    def append(kind: NodeKind, **fields) -> int:
        node_id = len(nodes)
        nodes.append(PlanNode(node_id, kind, **fields))
        return node_id

    inputs = {
        i: append(NodeKind.INPUT, position=i)
        for i in range(matrix.m) if any(row[i] != 0 for row in matrix.scaled)
    }
    for template, row in enumerate(matrix.scaled):
        acc: Optional[Tuple[int, int]] = None
        for i, value in enumerate(row):
            if value == 0:
                continue
            term = append(NodeKind.MUL, child=inputs[i], magnitude=abs(value))
            sign = 1 if value > 0 else -1
            if acc is None:
                acc = (term, sign)
            else:
                acc = (append(NodeKind.ADD, left=acc[0], right=term, sign=acc[1] * sign), acc[1])
        if acc is None:
            append(NodeKind.OUTPUT, child=None, template=template)
        else:
            append(NodeKind.OUTPUT, child=acc[0], template=template, negate=acc[1] < 0)

    return _make_plan(nodes, matrix.K, matrix.m, matrix.base, matrix.digits, count_shifts_as_multiplies)
