"""Coverage-targeted reduction of a model and the test-sequence shrinking kit.

The four-step derivation of generalized states: (1) one path condition per
leaf (together they give branch coverage), (2) temporal conditions rewritten
over predicate identifiers, (3) projection onto the state space by
existentially eliminating the input atoms, (4) abstract states as the
projection-membership bit vector.  Plus: reachability enumeration of flag
states, piecemeal scenario skeletons, and enlargement of state partitions.
"""
from __future__ import annotations

import itertools
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from .dsl import (
    Const,
    Decision,
    ExtractionResult,
    Expr,
    Held,
    Leaf,
    ModelAst,
    Name,
    PredRef,
    eval_expr,
    free_vars,
    print_expr,
    walk_exprs as _walk,
    walk_nodes,
)
from .interp import eval_model


class ReductionError(Exception):
    pass


class OverlappingParts(ReductionError):
    pass


def input_domains(model: ModelAst) -> dict:
    return {d.name: d.domain() for d in model.inputs}


def _input_valuations(model: ModelAst) -> list:
    domains = input_domains(model)
    names = list(domains)
    return [dict(zip(names, combo)) for combo in itertools.product(*domains.values())]


# ---------------------------------------------------------------------------
# Steps 1-2: path conditions


@dataclass(frozen=True)
class PathFactor:
    """One conjunct of a path condition: a decision condition plus the
    outcome required to stay on the path."""

    expr: Expr
    value: bool

    def __str__(self) -> str:
        text = print_expr(self.expr)
        if self.value:
            return text
        if _is_atomic(self.expr):
            return "!" + text
        return "!(%s)" % text


def _is_atomic(expr: Expr) -> bool:
    return isinstance(expr, (Name, PredRef, Const, Held))


@dataclass(frozen=True)
class PathCondition:
    id: str
    leaf_id: str
    factors: tuple

    def __str__(self) -> str:
        return " && ".join(str(f) for f in self.factors) if self.factors else "true"

    def evaluate(self, env: Mapping, flags: Optional[Mapping] = None) -> bool:
        return all(bool(eval_expr(f.expr, env, flags)) == f.value for f in self.factors)


def enumerate_test_cases(ast: ModelAst) -> list:
    """One path condition per leaf, in pre-order; covering all of them covers
    every branch of the model."""
    cases = []

    def visit(node, factors):
        if isinstance(node, Leaf):
            cases.append(
                PathCondition("case%d" % (len(cases) + 1), node.node_id, tuple(factors))
            )
            return
        visit(node.then_branch, factors + [PathFactor(node.condition, True)])
        visit(node.else_branch, factors + [PathFactor(node.condition, False)])

    visit(ast.body, [])
    return cases


def rewrite_to_predicates(pc: PathCondition, extraction: ExtractionResult) -> PathCondition:
    """Replace temporal conditions inside a path condition by conjunctions of
    predicate identifiers."""
    return PathCondition(
        pc.id,
        pc.leaf_id,
        tuple(PathFactor(extraction.rewrite_expr(f.expr), f.value) for f in pc.factors),
    )


# ---------------------------------------------------------------------------
# Step 3: projection onto the state space


@dataclass(frozen=True)
class Projection:
    """Subspace of specification states in which a test case can be covered
    by some input valuation."""

    id: str
    case_id: str
    factors: tuple  # full rewritten path factors
    state_factors: tuple  # factors kept after dropping pure-input ones
    input_names: frozenset
    _valuations: tuple  # input valuations, for the existential check

    def __str__(self) -> str:
        if self.mixes_inputs_and_state():
            return "exists inputs: %s" % " && ".join(str(f) for f in self.factors)
        if not self.state_factors:
            return "true"
        return " && ".join(str(f) for f in self.state_factors)

    def mixes_inputs_and_state(self) -> bool:
        for f in self.factors:
            refs = free_vars(f.expr)
            if refs & self.input_names and refs - self.input_names:
                return True
        return False

    def evaluate(self, state_env: Mapping) -> bool:
        """Existential input elimination by enumeration: true when some input
        valuation satisfies the whole rewritten condition in this state."""
        for valuation in self._valuations:
            env = dict(state_env)
            env.update(valuation)
            if all(bool(eval_expr(f.expr, env, env)) == f.value for f in self.factors):
                return True
        return False


def project_to_state(pc: PathCondition, model: ModelAst) -> Projection:
    """Project a rewritten path condition onto the state space (predicate ids
    and state variables only)."""
    inputs = frozenset(model.input_names())
    kept = tuple(f for f in pc.factors if not (free_vars(f.expr) and free_vars(f.expr) <= inputs))
    return Projection(
        "P%s" % pc.id.removeprefix("case"),
        pc.id,
        pc.factors,
        kept,
        inputs,
        tuple(tuple(sorted(v.items())) for v in _input_valuations(model)) or ((),),
    )


def _valuation_dicts(projection: Projection) -> list:
    return [dict(v) for v in projection._valuations]


# ---------------------------------------------------------------------------
# Step 4: generalized states


def generalized_state(state_env: Mapping, projections: Sequence) -> tuple:
    """Projection-membership bit vector of a specification state; the state
    env binds state variables and predicate ids."""
    return tuple(1 if p.evaluate(state_env) else 0 for p in projections)


def derive_projections(extraction: ExtractionResult) -> list:
    cases = enumerate_test_cases(extraction.source)
    rewritten = [rewrite_to_predicates(pc, extraction) for pc in cases]
    return [project_to_state(pc, extraction.model) for pc in rewritten]


# ---------------------------------------------------------------------------
# Reachable flag states


@dataclass(frozen=True)
class ReachabilityReport:
    predicate_ids: tuple
    upper_bound: int
    vectors: tuple  # reachable flag vectors, in discovery order
    witnesses: dict  # vector -> list of input dicts reaching it
    states: tuple  # reachable (state_vars, vector) pairs

    @property
    def reachable_count(self) -> int:
        return len(self.vectors)


def enumerate_reachable_flag_states(extraction: ExtractionResult, cycle_period_ms: int = 1000,
                                    strict: bool = False) -> ReachabilityReport:
    """Breadth-first reachability over the temporal-predicate transition
    system under all input sequences.

    Predicates sharing a literal share one hold counter; counters cap at the
    largest threshold in their group, which keeps the space finite without
    changing any flag.
    """
    model = extraction.model
    preds = extraction.predicates
    period = cycle_period_ms

    groups: list = []  # (var, expected, cap)
    group_of = {}
    thresholds = []
    for p in preds:
        n = -(-p.duration_ms // period)  # ceil; satisfied when counter >= n
        key = (p.var, p.expected)
        if key not in group_of:
            group_of[key] = len(groups)
            groups.append([p.var, p.expected, n])
        else:
            groups[group_of[key]][2] = max(groups[group_of[key]][2], n)
        thresholds.append(n)

    def flags_of(counters) -> tuple:
        out = []
        for p, n in zip(preds, thresholds):
            c = counters[group_of[(p.var, p.expected)]]
            if c is None:
                out.append(0)
            elif strict:
                out.append(1 if c > n else 0)
            else:
                out.append(1 if c >= n else 0)
        return tuple(out)

    init_vars = tuple(sorted(model.initial_state().items()))
    init_counters = tuple(None for _ in groups)
    initial = (init_vars, init_counters)

    valuations = _input_valuations(model)
    seen = {initial}
    frontier = deque([initial])
    vectors: list = []
    vector_set = set()
    witnesses: dict = {}
    state_pairs = set()
    parents = {initial: None}

    def record(state, counters):
        vec = flags_of(counters)
        state_pairs.add((state[0], vec))
        if vec not in vector_set:
            vector_set.add(vec)
            vectors.append(vec)
            trail = []
            node = state
            while parents[node] is not None:
                node, inputs = parents[node]
                trail.append(inputs)
            witnesses[vec] = list(reversed(trail))

    record(initial, init_counters)
    while frontier:
        state = frontier.popleft()
        state_vars, counters = state
        for inputs in valuations:
            env = dict(state_vars)
            env.update(inputs)
            stepped = []
            for (var, expected, cap), c in zip(groups, counters):
                if int(env[var]) == expected:
                    stepped.append(0 if c is None else min(c + 1, cap))
                else:
                    stepped.append(None)
            stepped = tuple(stepped)
            flags = dict(zip((p.id for p in preds), flags_of(stepped)))
            _, state_post, _ = eval_model(model, inputs, dict(state_vars), flags)
            nxt = (tuple(sorted(state_post.items())), stepped)
            if nxt not in seen:
                seen.add(nxt)
                parents[nxt] = (state, dict(inputs))
                record(nxt, stepped)
                frontier.append(nxt)

    return ReachabilityReport(
        tuple(p.id for p in preds),
        2 ** len(preds),
        tuple(vectors),
        witnesses,
        tuple(sorted(state_pairs)),
    )


# ---------------------------------------------------------------------------
# Coverable-case sets and enlargement


def coverable_cases(state_env: Mapping, rewritten_cases: Sequence, model: ModelAst) -> frozenset:
    """Test cases coverable from a state by some input valuation."""
    out = set()
    for pc in rewritten_cases:
        for valuation in _input_valuations(model):
            env = dict(state_env)
            env.update(valuation)
            if pc.evaluate(env, env):
                out.add(pc.id)
                break
    return frozenset(out)


def enlarge_states(partition: Sequence, coverable: Callable) -> list:
    """Merge partition cells whose coverable-case signatures coincide.

    ``partition`` is a sequence of iterables of states; ``coverable`` maps a
    state to its coverable-case set.  Cells merge only when every per-state
    signature present in one also defines the other, so states with different
    coverable sets are never newly mixed.
    """
    cells = [tuple(cell) for cell in partition]
    signatures = []
    for cell in cells:
        signatures.append(frozenset(coverable(state) for state in cell))
    merged: dict = {}
    order = []
    for cell, sig in zip(cells, signatures):
        if sig not in merged:
            merged[sig] = []
            order.append(sig)
        merged[sig].extend(cell)
    return [tuple(merged[sig]) for sig in order]


# ---------------------------------------------------------------------------
# Piecemeal testing


@dataclass(frozen=True)
class PiecemealPart:
    """Scenario skeleton for one subtree: inputs pinned to steer execution
    into the part, the rest iterated, plus any path conditions the scenario
    must establish over time."""

    node_id: str
    pinned: dict
    iterated: dict  # input -> candidate values
    establish: tuple  # printed non-input path factors on the way to the part
    case_ids: tuple  # test cases inside the part


def make_piecemeal(ast: ModelAst, parts: Sequence, target_criterion: Optional[str] = None) -> list:
    """Split a model into per-subtree scenario skeletons."""
    if target_criterion == "mcc":
        warnings.warn("multiple condition coverage is not decomposable across parts; "
                      "piecemeal scenarios cannot guarantee it", stacklevel=2)
    known = {n.node_id for n in _all_nodes(ast)}
    for part in parts:
        if part not in known:
            raise ReductionError("unknown node id %r" % part)
    for a, b in itertools.combinations(parts, 2):
        if a.startswith(b) or b.startswith(a):
            raise OverlappingParts("parts %r and %r overlap" % (a, b))

    cases = enumerate_test_cases(ast)
    inputs = frozenset(ast.input_names())

    def pinnable(factor: PathFactor) -> bool:
        # held() cannot be pinned cycle-by-cycle even over pure inputs
        if any(isinstance(e, Held) for e in _walk(factor.expr)):
            return False
        refs = free_vars(factor.expr)
        return bool(refs) and refs <= inputs

    skeletons = []
    for part in parts:
        prefix_factors = _path_prefix(ast, part)
        input_factors = [f for f in prefix_factors if pinnable(f)]
        other_factors = [f for f in prefix_factors if not pinnable(f)]
        satisfying = [
            v
            for v in _input_valuations(ast)
            if all(bool(eval_expr(f.expr, v)) == f.value for f in input_factors)
        ]
        if not satisfying:
            raise ReductionError("no input valuation reaches part %r" % part)
        pinned, iterated = {}, {}
        for name in ast.input_names():
            values = sorted({v[name] for v in satisfying})
            if len(values) == 1:
                pinned[name] = values[0]
            else:
                iterated[name] = tuple(values)
        case_ids = tuple(pc.id for pc in cases if pc.leaf_id.startswith(part))
        skeletons.append(
            PiecemealPart(part, pinned, iterated, tuple(str(f) for f in other_factors), case_ids)
        )
    return skeletons


def _all_nodes(ast: ModelAst):
    return walk_nodes(ast.body)


def _path_prefix(ast: ModelAst, node_id: str) -> list:
    factors = []
    node = ast.body
    for choice in node_id:
        if not isinstance(node, Decision):
            raise ReductionError("node id %r leaves the tree" % node_id)
        factors.append(PathFactor(node.condition, choice == "t"))
        node = node.then_branch if choice == "t" else node.else_branch
    return factors
