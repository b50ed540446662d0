"""Design-by-contract oracle around one subject.

``apply_stimulus`` performs the fixed verdict sequence: precondition, save
the pre-state, one mediator exchange, predicate/flag update, reference run of
the model (state parameters get pre-values, temporal parameters get the
post-exchange flags), state synchronization, invariants, and finally the
postcondition comparing observed outputs and visible state against the
reference values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

from . import mediator, temporal
from .dsl import (
    ExtractionResult,
    Held,
    ModelAst,
    eval_expr,
    free_vars,
    parse_expression,
    walk_exprs,
)
from .interp import DecisionTrace, eval_model
from .mediator import CycleObservation, MediatorError, MediatorLink


class ContractError(Exception):
    pass


class DuplicateName(ContractError):
    pass


class VerdictKind(enum.Enum):
    PASS = "Pass"
    PRECONDITION_VIOLATION = "PreconditionViolation"
    INVARIANT_VIOLATION = "InvariantViolation"
    POSTCONDITION_FAILURE = "PostconditionFailure"
    MEDIATOR_FAILURE = "MediatorFailure"


@dataclass(frozen=True)
class Mismatch:
    name: str
    expected: int
    actual: int


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    detail: str = ""
    cycle_index: int = -1
    mismatches: tuple = ()
    trace: Optional[DecisionTrace] = None
    observation: Optional[CycleObservation] = None

    @property
    def passed(self) -> bool:
        return self.kind is VerdictKind.PASS


@dataclass
class SpecificationState:
    state_vars: dict
    predicate_states: dict
    flags: dict
    sys_time_ms: Optional[int] = None
    observation: Optional[CycleObservation] = None

    def copy(self) -> "SpecificationState":
        return SpecificationState(
            dict(self.state_vars),
            dict(self.predicate_states),
            dict(self.flags),
            self.sys_time_ms,
            self.observation,
        )

    def env(self) -> dict:
        """State variables and time flags in one namespace (flags as 0/1)."""
        merged = dict(self.state_vars)
        merged.update({pid: int(v) for pid, v in self.flags.items()})
        return merged


@dataclass(frozen=True)
class InvariantContext:
    state: SpecificationState
    inputs: dict
    outputs: dict  # observed outputs
    observation: Optional[CycleObservation]

    def env(self) -> dict:
        merged = self.state.env()
        merged.update(self.outputs)
        merged.update(self.inputs)
        return merged


Invariant = Callable[[InvariantContext], bool]
Precondition = Callable[[SpecificationState, Mapping], bool]


class Specification:
    """One specification function per subject, with verdicts per stimulus.

    The default precondition is the declared input domain; scenario authors
    may strengthen it with a callable.  Invariants are registered as
    callables over an :class:`InvariantContext` or as expression strings over
    state variables, predicate ids, inputs and observed outputs.
    """

    def __init__(self, extraction: ExtractionResult, link: MediatorLink,
                 precondition: Optional[Precondition] = None, strict_held: bool = False):
        self.extraction = extraction
        self.model: ModelAst = extraction.model
        self.link = link
        self.precondition = precondition
        self.strict_held = strict_held
        self._invariants: dict = {}
        self.state = self._initial_state()

    def _initial_state(self) -> SpecificationState:
        states = temporal.initial_states(self.extraction.predicates)
        return SpecificationState(
            state_vars=self.model.initial_state(),
            predicate_states=states,
            flags={pid: False for pid in states},
        )

    def reset(self) -> None:
        self.state = self._initial_state()

    # invariants ------------------------------------------------------------

    def register_invariant(self, name: str, check: Union[str, Invariant]) -> None:
        if name in self._invariants:
            raise DuplicateName(name)
        if isinstance(check, str):
            check = self._compile_invariant(check)
        self._invariants[name] = check

    def _compile_invariant(self, source: str) -> Invariant:
        expr = parse_expression(source)
        allowed = set(self.model.decls())
        allowed.update(p.id for p in self.extraction.predicates)
        for e in walk_exprs(expr):
            if isinstance(e, Held):
                raise ContractError("held() is not allowed in invariants")
        unknown = free_vars(expr) - allowed
        if unknown:
            raise ContractError("invariant references unknown name(s): %s" % ", ".join(sorted(unknown)))
        return lambda ctx: bool(eval_expr(expr, ctx.env()))

    # stimulus --------------------------------------------------------------

    def check_precondition(self, inputs: Mapping) -> Optional[str]:
        declared = {d.name: d for d in self.model.inputs}
        extra = set(inputs) - set(declared)
        if extra:
            return "undeclared input(s): %s" % ", ".join(sorted(extra))
        for name, decl in declared.items():
            if name not in inputs:
                return "missing input '%s'" % name
            value = int(inputs[name])
            if value not in decl.domain():
                return "input '%s' = %d outside its domain" % (name, value)
        if self.precondition is not None and not self.precondition(self.state, inputs):
            return "scenario precondition rejected the call"
        return None

    def apply_stimulus(self, inputs: Mapping) -> Verdict:
        reason = self.check_precondition(inputs)
        if reason is not None:
            return Verdict(VerdictKind.PRECONDITION_VIOLATION, reason, self.link.next_cycle)
        inputs = {k: int(v) for k, v in inputs.items()}
        pre = self.state.copy()

        try:
            obs = self.link.exchange(inputs)
        except MediatorError as exc:
            return Verdict(VerdictKind.MEDIATOR_FAILURE, str(exc), self.link.next_cycle)

        stepped = mediator.step_predicates(pre, obs, inputs, self.strict_held)
        _, flags = stepped
        ref_outputs, ref_post, trace = eval_model(self.model, inputs, pre.state_vars, flags)
        self.state = mediator.sync_state(
            pre, obs, inputs, self.model, ref_post, self.strict_held, stepped=stepped
        )

        ctx = InvariantContext(self.state, inputs, dict(obs.outputs), obs)
        for name, check in self._invariants.items():
            if not check(ctx):
                return Verdict(VerdictKind.INVARIANT_VIOLATION,
                               "invariant '%s' violated" % name, obs.cycle,
                               trace=trace, observation=obs)

        mismatches = []
        for name in self.model.output_names():
            expected, actual = int(ref_outputs[name]), int(obs.outputs[name])
            if expected != actual:
                mismatches.append(Mismatch(name, expected, actual))
        for decl in self.model.readable_state():
            expected, actual = int(ref_post[decl.name]), int(obs.visible_state[decl.name])
            if expected != actual:
                mismatches.append(Mismatch(decl.name, expected, actual))
        if mismatches:
            detail = "; ".join(
                "%s: expected %d, actual %d" % (m.name, m.expected, m.actual) for m in mismatches
            )
            return Verdict(VerdictKind.POSTCONDITION_FAILURE, detail, obs.cycle,
                           tuple(mismatches), trace, obs)
        return Verdict(VerdictKind.PASS, "", obs.cycle, (), trace, obs)
