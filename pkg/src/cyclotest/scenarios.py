"""Scenario construction over the reduced abstract state space.

Two families of scenario functions are generated for a model with finite
input domains:

* ``settle(<inputs>)`` holds one input valuation long enough to saturate
  every temporal predicate, which both reaches the abstract states needed
  for coverage and ends in a concrete state that depends only on the held
  valuation, keeping the abstract automaton deterministic.
* ``probe(<inputs>)`` applies one valuation for a single cycle (maximizing
  per-state input iteration) and then re-saturates on a fixed valuation so
  the end state is again concrete-state independent.

Piecemeal variants pin some inputs to steer execution into one part of the
model and iterate only the rest.
"""
from __future__ import annotations

from typing import Optional, Sequence

from .dsl import ExtractionResult
from .reduction import PiecemealPart, generalized_state, input_domains
from .traversal import Scenario, ScenarioFunction


def saturation_cycles(extraction: ExtractionResult, cycle_period_ms: int,
                      strict: bool = False) -> int:
    """Cycles needed to saturate the slowest predicate, plus one.

    Strict (>) semantics delay every firing by one cycle, so saturation
    takes one more.
    """
    if not extraction.predicates:
        return 1
    worst = max(-(-p.duration_ms // cycle_period_ms) for p in extraction.predicates)
    return worst + (2 if strict else 1)


def build_coverage_scenario(spec, extraction: ExtractionResult, projections: Sequence,
                            cycle_period_ms: int = 1000, name: str = "full",
                            pinned: Optional[dict] = None,
                            iterated: Optional[dict] = None,
                            strict: bool = False) -> Scenario:
    """Settle+probe scenario for ``spec`` (anything with ``apply_stimulus``
    and a ``state`` exposing ``env()``)."""
    model = extraction.model
    domains = input_domains(model)
    pinned = dict(pinned or {})
    if iterated is None:
        iterated = {k: v for k, v in domains.items() if k not in pinned}
    iteration_vars = tuple((k, tuple(iterated[k])) for k in model.input_names() if k in iterated)
    hold = saturation_cycles(extraction, cycle_period_ms, strict)
    # re-saturation valuation: pinned values, iterated inputs at their maxima
    renorm = dict(pinned)
    renorm.update({k: max(v) for k, v in iterated.items()})

    def stimulus(valuation: dict) -> dict:
        inputs = dict(pinned)
        inputs.update(valuation)
        return inputs

    def settle(valuation: dict) -> list:
        return [stimulus(valuation)] * hold

    def probe(valuation: dict) -> list:
        return [stimulus(valuation)] + [dict(renorm)] * hold

    def state_fn():
        return generalized_state(spec.state.env(), projections)

    return Scenario(
        name=name,
        state_fn=state_fn,
        functions=[
            ScenarioFunction("settle", settle, iteration_vars),
            ScenarioFunction("probe", probe, iteration_vars),
        ],
    )


def build_piecemeal_scenario(spec, extraction: ExtractionResult, projections: Sequence,
                             part: PiecemealPart, cycle_period_ms: int = 1000,
                             strict: bool = False) -> Scenario:
    return build_coverage_scenario(
        spec,
        extraction,
        projections,
        cycle_period_ms,
        name="piece:%s" % (part.node_id or "root"),
        pinned=part.pinned,
        iterated=dict(part.iterated),
        strict=strict,
    )
