"""On-the-fly traversal of an implicitly defined abstract automaton.

The automaton is discovered while testing: states come from the scenario's
state generation function, transitions from applying test actions.  The
engine greedily applies an unapplied action at the current state; when none
is left it replays the shortest known path (BFS over recorded transitions,
deterministic tie-breaking) to the nearest state with pending actions.  It
terminates once every action has been applied in every reached state, and
requires the final automaton to be finite, deterministic and strongly
connected, diagnosing violations as it goes.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .contracts import Verdict, VerdictKind


class TraversalError(Exception):
    def __init__(self, message: str, log=None, automaton=None):
        super().__init__(message)
        self.log = log
        self.automaton = automaton


class NondeterminismDetected(TraversalError):
    def __init__(self, state, label, first_end, second_end, log=None, automaton=None):
        self.state = state
        self.label = label
        self.first_end = first_end
        self.second_end = second_end
        super().__init__(
            "action %r at state %r reached %r after previously reaching %r"
            % (label, state, second_end, first_end),
            log,
            automaton,
        )


class StrandedPendingActions(TraversalError):
    def __init__(self, stranded, log=None, automaton=None):
        self.stranded = tuple(stranded)
        super().__init__(
            "no explored path reaches pending actions at state(s): %s"
            % ", ".join(repr(s) for s in self.stranded),
            log,
            automaton,
        )


class BudgetExceeded(TraversalError):
    pass


@dataclass
class ScenarioFunction:
    """One test-action family.

    ``body`` maps an iteration valuation to the stimulus inputs of one
    specification call, or to a sequence of them (a scenario function may
    perform several calls; it still counts as one test action).  ``filter``
    prunes valuations per abstract state.
    """

    name: str
    body: Callable[[dict], object]
    iteration_vars: tuple = ()  # ((var, (values...)), ...)
    filter: Optional[Callable[[dict, object], bool]] = None

    def valuations(self) -> list:
        if not self.iteration_vars:
            return [{}]
        names = [name for name, _ in self.iteration_vars]
        domains = [tuple(dom) for _, dom in self.iteration_vars]
        return [dict(zip(names, combo)) for combo in itertools.product(*domains)]

    def label(self, valuation: dict) -> str:
        if not self.iteration_vars:
            return self.name
        rendered = ", ".join("%s=%s" % (n, valuation[n]) for n, _ in self.iteration_vars)
        return "%s(%s)" % (self.name, rendered)


@dataclass(frozen=True)
class Action:
    label: str
    fn: ScenarioFunction = field(compare=False)
    valuation: tuple = ()

    def stimuli(self) -> list:
        result = self.fn.body(dict(self.valuation))
        if isinstance(result, dict):
            return [result]
        return list(result)


@dataclass
class Scenario:
    name: str
    state_fn: Callable[[], object]
    functions: list
    init: Optional[Callable[[], None]] = None
    finalize: Optional[Callable[[], None]] = None

    def enabled_actions(self, state) -> list:
        actions = []
        for fn in self.functions:
            for valuation in fn.valuations():
                if fn.filter is not None and not fn.filter(valuation, state):
                    continue
                actions.append(Action(fn.label(valuation), fn, tuple(sorted(valuation.items()))))
        return actions


@dataclass(frozen=True)
class LogEntry:
    cycle: int
    state: object
    action: str
    verdict: str
    replay: bool = False

    def to_json(self) -> str:
        state = list(self.state) if isinstance(self.state, tuple) else self.state
        data = {"cycle": self.cycle, "state": state, "action": self.action,
                "verdict": self.verdict, "replay": self.replay}
        return json.dumps(data, sort_keys=True)


@dataclass
class TestLog:
    scenario: str = ""
    entries: list = field(default_factory=list)
    outcome: str = "complete"  # "complete" | "verdict_failure" | aborted by error

    def append(self, entry: LogEntry) -> None:
        self.entries.append(entry)

    def verdict_counts(self) -> dict:
        counts: dict = {}
        for e in self.entries:
            counts[e.verdict] = counts.get(e.verdict, 0) + 1
        return counts

    def failures(self) -> list:
        return [e for e in self.entries if e.verdict != VerdictKind.PASS.value]

    def to_json_lines(self) -> str:
        return "\n".join(e.to_json() for e in self.entries) + ("\n" if self.entries else "")


@dataclass
class ExploredAutomaton:
    initial: object = None
    states: set = field(default_factory=set)
    transitions: dict = field(default_factory=dict)  # (state, label) -> (end, Action)
    pending: dict = field(default_factory=dict)  # state -> [Action, ...]

    def pending_states(self) -> list:
        return [s for s, actions in self.pending.items() if actions]

    def edges(self) -> list:
        return [(s, label, end) for (s, label), (end, _) in self.transitions.items()]


def _state_key(state) -> str:
    return repr(state)


def traverse(scenario: Scenario, spec, budget: int = 10_000,
             stop_on_failure: bool = True, rng=None):
    """Drive the subject until every reached state has no pending actions.

    ``spec`` needs only ``apply_stimulus(inputs) -> Verdict``.  Every applied
    action, replayed or fresh, counts against ``budget``.  With
    ``stop_on_failure`` the walk ends at the first non-passing verdict (the
    synchronized specification state is unreliable afterwards).
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    log = TestLog(scenario.name)
    automaton = ExploredAutomaton()
    if scenario.init is not None:
        scenario.init()
    try:
        current = scenario.state_fn()
        automaton.initial = current
        _discover(automaton, scenario, current, rng)
        applied = 0

        while True:
            failure = None
            if automaton.pending[current]:
                applied += 1
                if applied > budget:
                    raise BudgetExceeded(_budget_message(automaton, budget), log, automaton)
                action = automaton.pending[current].pop(0)
                end_state, failure = _apply(action, spec, scenario, log, current, replay=False)
                if failure is None or not stop_on_failure:
                    _discover(automaton, scenario, end_state, rng)
                    recorded = automaton.transitions.get((current, action.label))
                    if recorded is not None and recorded[0] != end_state:
                        raise NondeterminismDetected(
                            current, action.label, recorded[0], end_state, log, automaton
                        )
                    automaton.transitions[(current, action.label)] = (end_state, action)
                    current = end_state
            else:
                path = _path_to_pending(automaton, current)
                if path is None:
                    stranded = automaton.pending_states()
                    if stranded:
                        raise StrandedPendingActions(stranded, log, automaton)
                    break  # every action applied in every reached state
                for state, label, expected_end, action in path:
                    applied += 1
                    if applied > budget:
                        raise BudgetExceeded(_budget_message(automaton, budget), log, automaton)
                    observed, failure = _apply(action, spec, scenario, log, state, replay=True)
                    if failure is not None and stop_on_failure:
                        break
                    if observed != expected_end:
                        raise NondeterminismDetected(
                            state, label, expected_end, observed, log, automaton
                        )
                    current = observed
            if failure is not None and stop_on_failure:
                log.outcome = "verdict_failure"
                break
    finally:
        if scenario.finalize is not None:
            scenario.finalize()
    return log, automaton


def _apply(action: Action, spec, scenario: Scenario, log: TestLog, source, replay: bool):
    failure = None
    for stimulus in action.stimuli():
        verdict: Verdict = spec.apply_stimulus(stimulus)
        log.append(LogEntry(verdict.cycle_index, source, action.label,
                            verdict.kind.value, replay))
        if not verdict.passed:
            failure = verdict
            break
    return scenario.state_fn(), failure


def _discover(automaton: ExploredAutomaton, scenario: Scenario, state, rng) -> None:
    if state in automaton.states:
        return
    automaton.states.add(state)
    actions = scenario.enabled_actions(state)
    if rng is not None:
        rng.shuffle(actions)
    automaton.pending[state] = actions


def _path_to_pending(automaton: ExploredAutomaton, start):
    """Shortest replay path to the nearest state with pending actions.

    BFS over recorded transitions; equal-distance targets resolve to the
    smallest state key, sibling edges explore in label order.
    """
    if automaton.pending[start]:
        return []
    adjacency: dict = {}
    for (state, label), (end, action) in automaton.transitions.items():
        adjacency.setdefault(state, []).append((label, end, action))
    for edges in adjacency.values():
        edges.sort(key=lambda e: e[0])

    parents = {start: None}
    frontier = deque([start])
    found: list = []
    while frontier and not found:
        next_frontier = []
        for _ in range(len(frontier)):
            state = frontier.popleft()
            for label, end, action in adjacency.get(state, ()):
                if end in parents:
                    continue
                parents[end] = (state, label, action)
                next_frontier.append(end)
                if automaton.pending.get(end):
                    found.append(end)
        frontier.extend(next_frontier)
    if not found:
        return None
    target = min(found, key=_state_key)
    path = []
    node = target
    while parents[node] is not None:
        state, label, action = parents[node]
        path.append((state, label, node, action))
        node = state
    path.reverse()
    return path


def _budget_message(automaton: ExploredAutomaton, budget: int) -> str:
    pending = sum(len(a) for a in automaton.pending.values())
    return (
        "budget of %d actions exhausted with %d state(s) discovered and %d action(s) pending"
        % (budget, len(automaton.states), pending)
    )


def export_dot(automaton: ExploredAutomaton) -> str:
    """Deterministic DOT rendering of an explored automaton."""

    def esc(text: str) -> str:
        return text.replace("\\", "\\\\").replace('"', '\\"')

    states = sorted(automaton.states, key=_state_key)
    names = {state: "s%d" % i for i, state in enumerate(states)}
    lines = ["digraph automaton {", "  rankdir=LR;"]
    for state in states:
        shape = ' shape=doublecircle' if state == automaton.initial else ""
        lines.append('  %s [label="%s"%s];' % (names[state], esc(str(state)), shape))
    for state, label, end in sorted(
        automaton.edges(), key=lambda e: (_state_key(e[0]), e[1], _state_key(e[2]))
    ):
        lines.append('  %s -> %s [label="%s"];' % (names[state], names[end], esc(label)))
    lines.append("}")
    return "\n".join(lines) + "\n"
