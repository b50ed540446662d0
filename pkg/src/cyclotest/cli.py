"""Command-line entry point.

Subcommands: ``run`` (full campaign against a subject), ``enumerate-states``
(upper bound and reachable temporal flag states), ``reduce`` (test cases,
rewritten conditions, projections, state partition), ``dot`` (explored
automaton export).  Exit codes: 0 ok, 2 model/parse problem, 3 mediator or
protocol failure, 4 failed verdicts or traversal diagnostics, 5 unmet
coverage requirement.  ``CYCLOTEST_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import shlex
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import iron
from .contracts import Specification, VerdictKind
from .coverage import CRITERIA, CoverageReport
from .dsl import ModelError, check_model, extract_predicates, parse_model, rescale_durations
from .kernel import KernelConfig
from .mediator import InProcessLink, MediatorError, StdioLink, TcpLink
from .reduction import (
    coverable_cases,
    derive_projections,
    enumerate_reachable_flag_states,
    enumerate_test_cases,
    make_piecemeal,
    rewrite_to_predicates,
)
from .scenarios import build_coverage_scenario, build_piecemeal_scenario
from .traversal import TraversalError, export_dot, traverse

log = logging.getLogger("cyclotest.cli")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PROTOCOL = 3
EXIT_VERDICT = 4
EXIT_COVERAGE = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    model_path: str
    sut: str = "inproc:iron"
    scenario: str = "full"
    parts: tuple = ()
    cycle_period_ms: int = 1000
    streaming: bool = True
    time_scale: Fraction = Fraction(1)
    remap: dict = field(default_factory=dict)  # duration_ms -> cycles
    budget: int = 10_000
    seed: Optional[int] = None
    strict_held: bool = False
    deterministic: bool = False
    stop_on_failure: bool = True
    timeout_s: float = 5.0
    required: tuple = ()  # ((criterion, ratio), ...)
    jobs: int = 1

    def scaled_period_ms(self) -> int:
        period = int(self.cycle_period_ms * self.time_scale)
        if period <= 0:
            raise CliError("time scale makes the cycle period vanish", EXIT_PARSE)
        return period


@dataclass
class CampaignResult:
    log: object
    report: CoverageReport
    automaton: object
    error: Optional[str] = None
    error_code: int = EXIT_OK
    cycle_records: tuple = ()

    def exit_code(self, required) -> int:
        if self.error is not None:
            return self.error_code
        for entry in self.log.entries:
            if entry.verdict == VerdictKind.MEDIATOR_FAILURE.value:
                return EXIT_PROTOCOL
        if any(e.verdict != VerdictKind.PASS.value for e in self.log.entries):
            return EXIT_VERDICT
        for criterion, ratio in required:
            if self.report.ratio(criterion) < ratio:
                return EXIT_COVERAGE
        return EXIT_OK


def load_model(config: RunConfig):
    try:
        with open(config.model_path, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        raise CliError("cannot read model: %s" % exc, EXIT_PARSE) from exc
    try:
        ast = parse_model(source)
    except ModelError as exc:
        raise CliError("%s: %s" % (config.model_path, exc), EXIT_PARSE) from exc
    period = config.scaled_period_ms()
    mapping = {}
    if config.time_scale != 1:
        for _, dur in _held_durations(ast):
            mapping[dur] = max(1, int(dur * config.time_scale))
    for dur, cycles in config.remap.items():
        mapping[dur] = cycles * period
    if mapping:
        ast = rescale_durations(ast, mapping)
    diagnostics = check_model(ast)
    for diag in diagnostics:
        print(diag.format(config.model_path), file=sys.stderr)
    if any(d.severity == "error" for d in diagnostics):
        raise CliError("model has errors", EXIT_PARSE)
    return ast, period


def _held_durations(ast):
    from .dsl import Held, walk_exprs

    for dec in ast.decisions():
        for e in walk_exprs(dec.condition):
            if isinstance(e, Held):
                yield dec.node_id, e.duration_ms


class _RecordingSpec:
    """Feed every reference trace into the coverage report as it happens."""

    def __init__(self, spec: Specification, report: CoverageReport):
        self._spec = spec
        self.report = report

    @property
    def state(self):
        return self._spec.state

    def apply_stimulus(self, inputs):
        verdict = self._spec.apply_stimulus(inputs)
        if verdict.trace is not None:
            self.report.accumulate(verdict.trace)
        return verdict


def build_link(model, extraction, config: RunConfig, period_ms: int):
    spec_str = config.sut
    kind, _, rest = spec_str.partition(":")
    kcfg = KernelConfig(cycle_period_ms=period_ms, streaming=config.streaming)
    if kind == "inproc":
        name, _, mutant = rest.partition(":")
        if name != "iron":
            raise CliError("unknown in-process subject %r" % name, EXIT_PARSE)
        durations = sorted({p.duration_ms for p in extraction.predicates})
        if len(durations) != 2:
            raise CliError("in-process iron needs a model with two distinct durations",
                           EXIT_PARSE)
        if mutant:
            sut = iron.make_mutant(mutant, tuple(durations), period_ms)
        else:
            sut = iron.make_sut(tuple(durations), period_ms)
        return InProcessLink(model, sut, kcfg)
    try:
        if kind == "tcp":
            host, _, port = rest.rpartition(":")
            return TcpLink(model, host, int(port), config.timeout_s)
        if kind == "stdio":
            return StdioLink(model, shlex.split(rest), config.timeout_s)
    except MediatorError as exc:
        raise CliError(str(exc), EXIT_PROTOCOL) from exc
    raise CliError("unknown subject %r (use inproc:, tcp:, stdio:)" % spec_str, EXIT_PARSE)


def run_campaign(config: RunConfig) -> CampaignResult:
    ast, period = load_model(config)
    extraction = extract_predicates(ast)
    projections = derive_projections(extraction)
    link = build_link(ast, extraction, config, period)
    rng = None
    if config.seed is not None:
        import random

        rng = random.Random(config.seed)
    spec = Specification(extraction, link, strict_held=config.strict_held)
    recording = _RecordingSpec(spec, CoverageReport.for_model(extraction.model))
    if config.scenario == "full":
        scenario = build_coverage_scenario(recording, extraction, projections, period,
                                           strict=config.strict_held)
    elif config.scenario.startswith("piece:"):
        part_id = config.scenario.split(":", 1)[1]
        part = make_piecemeal(ast, [part_id])[0]
        scenario = build_piecemeal_scenario(recording, extraction, projections, part, period,
                                            strict=config.strict_held)
    else:
        raise CliError("unknown scenario %r" % config.scenario, EXIT_PARSE)

    log.info("running scenario %s against %s (period %d ms)", scenario.name, config.sut, period)
    error = None
    code = EXIT_OK
    try:
        testlog, automaton = traverse(
            scenario, recording, budget=config.budget,
            stop_on_failure=config.stop_on_failure, rng=rng,
        )
        log.info("explored %d state(s), %d transition(s), %d stimuli",
                 len(automaton.states), len(automaton.transitions), len(testlog.entries))
    except TraversalError as exc:
        testlog, automaton = exc.log, exc.automaton
        error, code = str(exc), EXIT_VERDICT
    finally:
        link.close()
    records = tuple(link.kernel.records) if isinstance(link, InProcessLink) else ()
    return CampaignResult(testlog, recording.report, automaton, error, code, records)


def _piece_worker(config_args: dict, part_id: str):
    config = RunConfig(**config_args)
    config.scenario = "piece:%s" % part_id
    result = run_campaign(config)
    return result.log, result.report, result.error, result.error_code


def run_piecemeal(config: RunConfig):
    ast, _ = load_model(config)
    parts = list(config.parts)
    if not parts:
        root = ast.body
        parts = ["t", "e"] if hasattr(root, "condition") else [""]
    make_piecemeal(ast, parts)  # validates disjointness
    config_args = {k: getattr(config, k) for k in RunConfig.__dataclass_fields__}
    results = []
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(_piece_worker, config_args, p) for p in parts]
            results = [f.result() for f in futures]
    else:
        results = [_piece_worker(config_args, p) for p in parts]
    merged_log, merged_report, error, code = None, None, None, EXIT_OK
    for testlog, report, err, c in results:
        if merged_report is None:
            merged_log, merged_report = testlog, report
        else:
            merged_log.entries.extend(testlog.entries)
            merged_report.merge(report)
        if err and not error:
            error, code = err, c
    merged_log.scenario = "piecemeal"
    return CampaignResult(merged_log, merged_report, None, error, code)


# ---------------------------------------------------------------------------
# Commands


def cmd_run(args) -> int:
    config = _config_from_args(args)
    try:
        if config.scenario == "piecemeal":
            result = run_piecemeal(config)
        else:
            result = run_campaign(config)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.code

    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(result.log.to_json_lines())
    if args.trace_cycles:
        with open(args.trace_cycles, "w", encoding="utf-8") as fh:
            for record in result.cycle_records:
                fh.write(record.to_json(args.deterministic) + "\n")
    if args.dot and result.automaton is not None:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(export_dot(result.automaton))

    payload = {
        "scenario": result.log.scenario,
        "outcome": result.log.outcome,
        "verdicts": result.log.verdict_counts(),
        "coverage": result.report.summary(),
        "uncovered": {c: result.report.uncovered(c) for c in CRITERIA},
        "states": len(result.automaton.states) if result.automaton else None,
        "transitions": len(result.automaton.transitions) if result.automaton else None,
        "error": result.error,
    }
    if not args.deterministic:
        payload["timestamp"] = time.time()
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print("scenario %s: %s" % (payload["scenario"], payload["outcome"]))
        for kind, count in sorted(payload["verdicts"].items()):
            print("  %-22s %d" % (kind, count))
        if result.error:
            print("  error: %s" % result.error)
        print(result.report.to_text())
    if result.error:
        print("traversal error: %s" % result.error, file=sys.stderr)
    return result.exit_code(config.required)


def cmd_enumerate_states(args) -> int:
    config = _config_from_args(args)
    try:
        ast, period = load_model(config)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.code
    extraction = extract_predicates(ast)
    report = enumerate_reachable_flag_states(extraction, period, config.strict_held)
    if args.json:
        payload = {
            "model": ast.name,
            "predicates": list(report.predicate_ids),
            "upper_bound": report.upper_bound,
            "reachable": report.reachable_count,
            "states": [
                {"flags": list(vec), "witness": report.witnesses[vec]}
                for vec in report.vectors
            ],
        }
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print("model: %s" % ast.name)
        print("temporal predicates: %d (%s)" % (len(report.predicate_ids),
                                                ", ".join(report.predicate_ids)))
        print("upper bound: %d" % report.upper_bound)
        print("reachable flag states: %d" % report.reachable_count)
        for vec in report.vectors:
            witness = report.witnesses[vec]
            steps = " ".join(
                "(%s)" % ",".join("%s=%d" % kv for kv in sorted(s.items())) for s in witness
            )
            print("  %s  via %s" % (list(vec), steps if steps else "<initial>"))
    return EXIT_OK


def cmd_reduce(args) -> int:
    config = _config_from_args(args)
    try:
        ast, period = load_model(config)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.code
    extraction = extract_predicates(ast)
    cases = enumerate_test_cases(ast)
    rewritten = [rewrite_to_predicates(pc, extraction) for pc in cases]
    projections = derive_projections(extraction)
    reach = enumerate_reachable_flag_states(extraction, period, config.strict_held)

    cells: dict = {}
    for state_vars, vec in reach.states:
        env = dict(state_vars)
        env.update(zip(reach.predicate_ids, vec))
        from .reduction import generalized_state

        member = generalized_state(env, projections)
        cells.setdefault(member, []).append(
            (dict(state_vars), vec, sorted(coverable_cases(env, rewritten, extraction.model)))
        )

    if args.json:
        payload = {
            "model": ast.name,
            "test_cases": [{"id": pc.id, "condition": str(pc)} for pc in cases],
            "rewritten": [{"id": pc.id, "condition": str(pc)} for pc in rewritten],
            "projections": [{"id": p.id, "condition": str(p)} for p in projections],
            "partition": [
                {
                    "membership": list(member),
                    "states": [list(vec) for _, vec, _ in members],
                    "coverable_cases": members[0][2],
                }
                for member, members in sorted(cells.items())
            ],
        }
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        print("model: %s" % ast.name)
        print("step 1: test cases (branch coverage)")
        for pc in cases:
            print("  %s: %s" % (pc.id, pc))
        print("step 2: conditions over temporal predicates")
        for pc in rewritten:
            print("  %s: %s" % (pc.id, pc))
        print("step 3: projections on the state space")
        for p in projections:
            print("  %s: %s" % (p.id, p))
        print("step 4: membership-vector partition of %d reachable flag state(s)"
              % reach.reachable_count)
        for member, members in sorted(cells.items()):
            print("  vector %s: %d state(s), coverable cases %s"
                  % (list(member), len(members), members[0][2]))
    return EXIT_OK


def cmd_dot(args) -> int:
    config = _config_from_args(args)
    try:
        result = run_campaign(config)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.code
    text = export_dot(result.automaton)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return result.exit_code(())


# ---------------------------------------------------------------------------
# Argument plumbing


def _parse_duration(text: str) -> int:
    if text.endswith("ms"):
        return int(text[:-2])
    if text.endswith("s"):
        return int(text[:-1]) * 1000
    return int(text)


def _parse_remap(pairs) -> dict:
    remap = {}
    for pair in pairs or ():
        left, _, right = pair.partition("=")
        remap[_parse_duration(left)] = int(right)
    return remap


def _parse_required(pairs) -> tuple:
    out = []
    for pair in pairs or ():
        criterion, _, ratio = pair.partition("=")
        if criterion not in CRITERIA:
            raise SystemExit("unknown coverage criterion %r" % criterion)
        out.append((criterion, float(ratio)))
    return tuple(out)


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        model_path=args.model,
        sut=getattr(args, "sut", "inproc:iron"),
        scenario=getattr(args, "scenario", "full"),
        parts=tuple(getattr(args, "parts", ()) or ()),
        cycle_period_ms=args.period_ms,
        streaming=not getattr(args, "no_streaming", False),
        time_scale=Fraction(getattr(args, "time_scale", "1")),
        remap=_parse_remap(getattr(args, "remap_duration", ())),
        budget=getattr(args, "budget", 10_000),
        seed=getattr(args, "seed", None),
        strict_held=getattr(args, "strict_held", False),
        deterministic=getattr(args, "deterministic", False),
        timeout_s=getattr(args, "timeout", 5.0),
        required=_parse_required(getattr(args, "require", ())),
        jobs=getattr(args, "jobs", 1),
    )


def _add_model_options(sub) -> None:
    sub.add_argument("--model", required=True, help="path to the .ctl model")
    sub.add_argument("--period-ms", type=int, default=1000, help="cycle period in ms")
    sub.add_argument("--time-scale", default="1",
                     help="uniform rational scale for durations and period, e.g. 1/10")
    sub.add_argument("--remap-duration", action="append", metavar="DUR=CYCLES",
                     help="map one held() duration to a cycle count, e.g. 60s=3")
    sub.add_argument("--strict-held", action="store_true",
                     help="temporal predicates fire strictly after their duration")
    sub.add_argument("--json", action="store_true", help="machine-readable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclotest",
        description="model-based testing of cyclic control logic",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="run a test campaign against a subject")
    _add_model_options(run)
    run.add_argument("--sut", default="inproc:iron",
                     help="inproc:iron[:MUTANT] | tcp:HOST:PORT | stdio:CMD")
    run.add_argument("--scenario", default="full",
                     help="full | piecemeal | piece:<node-id>")
    run.add_argument("--parts", nargs="*", help="piecemeal part node ids (default: t e)")
    run.add_argument("--budget", type=int, default=10_000, help="max test actions")
    run.add_argument("--seed", type=int, help="shuffle action order (default: declaration order)")
    run.add_argument("--no-streaming", action="store_true",
                     help="pace cycles against the wall clock")
    run.add_argument("--timeout", type=float, default=5.0, help="per-exchange timeout, seconds")
    run.add_argument("--require", action="append", metavar="CRITERION=RATIO",
                     help="fail with exit 5 below this coverage, e.g. branch=1.0")
    run.add_argument("--deterministic", action="store_true",
                     help="omit timestamps so reports are byte-identical")
    run.add_argument("--jobs", type=int, default=1, help="parallel piecemeal processes")
    run.add_argument("--log", help="write the test log as JSON lines")
    run.add_argument("--trace-cycles", help="write kernel cycle records as JSON lines")
    run.add_argument("--dot", help="write the explored automaton as DOT")
    run.set_defaults(func=cmd_run)

    enum = subs.add_parser("enumerate-states", help="count reachable temporal flag states")
    _add_model_options(enum)
    enum.set_defaults(func=cmd_enumerate_states)

    red = subs.add_parser("reduce", help="coverage-targeted reduction listing")
    _add_model_options(red)
    red.set_defaults(func=cmd_reduce)

    dot = subs.add_parser("dot", help="run and export the explored automaton")
    _add_model_options(dot)
    dot.add_argument("--sut", default="inproc:iron")
    dot.add_argument("--scenario", default="full")
    dot.add_argument("--budget", type=int, default=10_000)
    dot.add_argument("--seed", type=int)
    dot.add_argument("--output", help="output file (default: stdout)")
    dot.set_defaults(func=cmd_dot)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CYCLOTEST_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
