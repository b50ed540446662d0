"""Reference execution of a rewritten model, with a decision trace for coverage.

``eval_model`` is the oracle's computation: given inputs, pre-cycle state and
the cycle's time flags it walks the decision tree to one leaf and returns the
assigned outputs, the post state, and a trace recording every decision with
its full condition vector (all atoms evaluated, not just the short-circuit
prefix, so MC/DC can be measured afterwards).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .dsl import Decision, ModelAst, condition_atoms, eval_expr


class MissingBinding(Exception):
    """An input, state variable or time flag required by the model is absent."""


class EvalError(Exception):
    """The model violated an execution-time contract (unchecked model)."""


@dataclass(frozen=True)
class DecisionRecord:
    node_id: str
    outcome: bool
    conditions: tuple  # ((atom_id, value), ...) in source order


@dataclass(frozen=True)
class DecisionTrace:
    model: str
    decisions: tuple
    leaf_id: str


@dataclass(frozen=True)
class ModelIo:
    """One evaluation of the model interface function."""

    inputs: dict
    state_pre: dict
    time_flags: dict
    outputs: dict
    state_post: dict


def eval_model(ast: ModelAst, inputs: Mapping, state_pre: Mapping, time_flags: Mapping):
    """Evaluate the rewritten model; returns (outputs, state_post, trace)."""
    for decl in ast.inputs:
        if decl.name not in inputs:
            raise MissingBinding("input '%s' not supplied" % decl.name)
    for decl in ast.state_vars:
        if decl.name not in state_pre:
            raise MissingBinding("state variable '%s' not supplied" % decl.name)
    env = {d.name: int(state_pre[d.name]) for d in ast.state_vars}
    env.update({d.name: int(inputs[d.name]) for d in ast.inputs})

    records = []
    node = ast.body
    while isinstance(node, Decision):
        vector = []
        for atom_id, atom in condition_atoms(node.condition):
            vector.append((atom_id, bool(_eval(atom, env, time_flags))))
        outcome = bool(_eval(node.condition, env, time_flags))
        records.append(DecisionRecord(node.node_id, outcome, tuple(vector)))
        node = node.then_branch if outcome else node.else_branch

    outputs = {}
    state_post = {d.name: int(state_pre[d.name]) for d in ast.state_vars}
    for assign in node.assigns:
        value = _eval(assign.value, env, time_flags)
        if assign.target in state_post:
            state_post[assign.target] = value
        else:
            outputs[assign.target] = value
    for name in ast.output_names():
        if name not in outputs:
            raise EvalError("leaf '%s' left output '%s' unassigned" % (node.node_id, name))
    trace = DecisionTrace(ast.name, tuple(records), node.node_id)
    return outputs, state_post, trace


def _eval(expr, env, flags):
    try:
        return eval_expr(expr, env, flags)
    except KeyError as exc:
        raise MissingBinding("no binding for %s" % exc) from exc


def covered_test_case(trace: DecisionTrace, ast: ModelAst) -> str:
    """Identifier of the root-to-leaf path a trace took, as ``case<N>`` with
    N the 1-based position of the leaf in pre-order (the same numbering the
    reduction module assigns to path conditions)."""
    for i, leaf in enumerate(ast.leaves()):
        if leaf.node_id == trace.leaf_id:
            return "case%d" % (i + 1)
    raise EvalError("trace leaf '%s' is not a leaf of model '%s'" % (trace.leaf_id, ast.name))
