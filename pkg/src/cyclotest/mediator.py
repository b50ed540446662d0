"""Binding between the specification and the system under test.

One exchange = one cycle: stage the inputs, let the subject run a cycle, read
back outputs, accessible state and the system time the subject saw.  The
in-process link drives a local kernel; the TCP and stdio links speak a
newline-delimited JSON protocol to a remote harness:

  hello:       {"type":"hello","model":m,"inputs":[...],"outputs":[...],
                "state":[...],"cycle_period_ms":N}
  set_inputs:  {"type":"set_inputs","cycle":n,"values":{...}}
  observation: {"type":"observation","cycle":n,"sys_time_ms":t,
                "outputs":{...},"state":{...}}
  shutdown:    {"type":"shutdown"}
  error:       {"type":"error","message":...}

Messages strictly alternate set_inputs/observation with matching cycle
numbers, starting at 0.
"""
from __future__ import annotations

import json
import selectors
import socket
import subprocess
from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import temporal
from .dsl import ModelAst
from .kernel import Kernel, KernelConfig


class MediatorError(Exception):
    pass


class ProtocolError(MediatorError):
    pass


class HandshakeMismatch(MediatorError):
    pass


class ExchangeTimeout(MediatorError):
    pass


class Disconnect(MediatorError):
    pass


class UnknownStateVar(MediatorError):
    pass


DEFAULT_TIMEOUT_S = 5.0


@dataclass(frozen=True)
class WireMessage:
    type: str
    cycle: Optional[int] = None
    payload: dict = field(default_factory=dict)

    def encode(self) -> bytes:
        data = {"type": self.type}
        if self.cycle is not None:
            data["cycle"] = self.cycle
        data.update(self.payload)
        return (json.dumps(data, sort_keys=True) + "\n").encode("utf-8")

    @staticmethod
    def decode(line: bytes) -> "WireMessage":
        try:
            data = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError("undecodable message: %s" % exc) from exc
        if not isinstance(data, dict) or "type" not in data:
            raise ProtocolError("message without a type: %r" % line)
        cycle = data.pop("cycle", None)
        mtype = data.pop("type")
        return WireMessage(mtype, cycle, data)


@dataclass(frozen=True)
class CycleObservation:
    cycle: int
    sys_time_ms: int
    outputs: dict
    visible_state: dict


def hello_for_model(model: ModelAst, cycle_period_ms: int) -> dict:
    return {
        "type": "hello",
        "model": model.name,
        "inputs": list(model.input_names()),
        "outputs": list(model.output_names()),
        "state": [d.name for d in model.readable_state()],
        "cycle_period_ms": cycle_period_ms,
    }


def validate_hello(hello: dict, model: ModelAst) -> None:
    expected = hello_for_model(model, hello.get("cycle_period_ms", 0))
    for key in ("model", "inputs", "outputs", "state"):
        if hello.get(key) != expected[key]:
            raise HandshakeMismatch(
                "handshake %s mismatch: subject %r, model %r"
                % (key, hello.get(key), expected[key])
            )


class MediatorLink:
    """Shared per-cycle bookkeeping: alternation, payload validation."""

    def __init__(self, model: ModelAst):
        self.model = model
        self.next_cycle = 0
        self.hello: dict = {}

    def exchange(self, inputs: Mapping) -> CycleObservation:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def _check_observation(self, cycle: int, sys_time_ms, outputs, state) -> CycleObservation:
        if cycle != self.next_cycle:
            raise ProtocolError(
                "observation for cycle %s after set_inputs %d" % (cycle, self.next_cycle)
            )
        if set(outputs) != set(self.model.output_names()):
            raise ProtocolError("observation outputs %r do not match the model" % sorted(outputs))
        readable = {d.name for d in self.model.readable_state()}
        if set(state) != readable:
            raise ProtocolError("observation state %r does not match the model" % sorted(state))
        obs = CycleObservation(cycle, int(sys_time_ms), dict(outputs), dict(state))
        self.next_cycle += 1
        return obs


class InProcessLink(MediatorLink):
    """Run the subject inside a local kernel: set-mediator writes the staged
    inputs before the subject's step, get-mediator reads everything after."""

    def __init__(self, model: ModelAst, sut, config: Optional[KernelConfig] = None):
        super().__init__(model)
        self.sut = sut
        self.kernel = Kernel(config or KernelConfig())
        self.hello = hello_for_model(model, self.kernel.config.cycle_period_ms)
        self._staged: Optional[dict] = None
        self._sut_inputs: dict = {}
        self._captured: Optional[CycleObservation] = None
        self.kernel.register_subsystem("set-mediator", self._set_mediator)
        self.kernel.register_subsystem(model.name, self._run_sut)
        self.kernel.register_subsystem("get-mediator", self._get_mediator)

    def _set_mediator(self, ctx) -> None:
        if self._staged is None:
            raise ProtocolError("cycle %d ran without staged inputs" % ctx.cycle_index)
        self._sut_inputs = dict(self._staged)
        self._staged = None

    def _run_sut(self, ctx) -> None:
        self._sut_outputs = self.sut.step(self._sut_inputs, ctx.sys_time_ms)

    def _get_mediator(self, ctx) -> None:
        state = self.sut.visible_state() if hasattr(self.sut, "visible_state") else {}
        self._captured = CycleObservation(
            ctx.cycle_index, ctx.sys_time_ms, dict(self._sut_outputs), dict(state)
        )

    def exchange(self, inputs: Mapping) -> CycleObservation:
        self._staged = {k: int(v) for k, v in inputs.items()}
        self.kernel.run_cycle()
        obs = self._captured
        return self._check_observation(obs.cycle, obs.sys_time_ms, obs.outputs, obs.visible_state)


class _StreamLink(MediatorLink):
    """NDJSON request/response over a byte stream."""

    def __init__(self, model: ModelAst, timeout_s: float = DEFAULT_TIMEOUT_S):
        super().__init__(model)
        self.timeout_s = timeout_s

    # transport primitives -------------------------------------------------

    def _send(self, message: WireMessage) -> None:
        raise NotImplementedError

    def _readline(self) -> bytes:
        raise NotImplementedError

    # protocol --------------------------------------------------------------

    def _recv(self) -> WireMessage:
        line = self._readline()
        if not line:
            raise Disconnect("subject closed the stream")
        msg = WireMessage.decode(line)
        if msg.type == "error":
            raise MediatorError("subject error: %s" % msg.payload.get("message"))
        return msg

    def _handshake(self) -> None:
        msg = self._recv()
        if msg.type != "hello":
            raise ProtocolError("expected hello, got %r" % msg.type)
        self.hello = {"type": "hello", "cycle": msg.cycle, **msg.payload}
        validate_hello(self.hello, self.model)

    def exchange(self, inputs: Mapping) -> CycleObservation:
        values = {k: int(v) for k, v in inputs.items()}
        self._send(WireMessage("set_inputs", self.next_cycle, {"values": values}))
        msg = self._recv()
        if msg.type != "observation":
            raise ProtocolError("expected observation, got %r" % msg.type)
        return self._check_observation(
            msg.cycle,
            msg.payload.get("sys_time_ms"),
            msg.payload.get("outputs") or {},
            msg.payload.get("state") or {},
        )

    def _send_shutdown(self) -> None:
        try:
            self._send(WireMessage("shutdown"))
        except Exception:
            pass


class TcpLink(_StreamLink):
    def __init__(self, model: ModelAst, host: str, port: int,
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        super().__init__(model, timeout_s)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout_s)
        except OSError as exc:
            raise Disconnect("cannot connect to %s:%d: %s" % (host, port, exc)) from exc
        self._file = self._sock.makefile("rwb")
        try:
            self._handshake()
        except MediatorError:
            self._file.close()
            self._sock.close()
            raise

    def _send(self, message: WireMessage) -> None:
        try:
            self._file.write(message.encode())
            self._file.flush()
        except OSError as exc:
            raise Disconnect(str(exc)) from exc

    def _readline(self) -> bytes:
        try:
            return self._file.readline()
        except socket.timeout as exc:
            raise ExchangeTimeout("no observation within %.1f s" % self.timeout_s) from exc
        except OSError as exc:
            raise Disconnect(str(exc)) from exc

    def close(self) -> None:
        self._send_shutdown()
        try:
            self._file.close()
            self._sock.close()
        except OSError:
            pass


class StdioLink(_StreamLink):
    def __init__(self, model: ModelAst, argv: list, timeout_s: float = DEFAULT_TIMEOUT_S,
                 stderr=subprocess.DEVNULL):
        super().__init__(model, timeout_s)
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=stderr
        )
        self._selector = selectors.DefaultSelector()
        self._selector.register(self.proc.stdout, selectors.EVENT_READ)
        try:
            self._handshake()
        except MediatorError:
            self.proc.kill()
            self.proc.wait()
            self._selector.close()
            raise

    def _send(self, message: WireMessage) -> None:
        try:
            self.proc.stdin.write(message.encode())
            self.proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise Disconnect(str(exc)) from exc

    def _readline(self) -> bytes:
        if not self._selector.select(self.timeout_s):
            raise ExchangeTimeout("no observation within %.1f s" % self.timeout_s)
        return self.proc.stdout.readline()

    def close(self) -> None:
        self._send_shutdown()
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            self.proc.kill()
        self._selector.close()


# ---------------------------------------------------------------------------
# Specification-state synchronization


def step_predicates(spec_state, obs: CycleObservation, inputs: Mapping, strict: bool = False):
    """Step every predicate with this cycle's literal values (inputs plus the
    pre-cycle state) at the system time the subject saw; returns the new
    predicate states and the cycle's time flags."""
    env = dict(spec_state.state_vars)
    env.update({k: int(v) for k, v in inputs.items()})
    stepped = temporal.step_all(spec_state.predicate_states, env, obs.sys_time_ms)
    flags = temporal.compute_time_flags(stepped, obs.sys_time_ms, strict)
    return stepped, flags


def sync_state(spec_state, obs: CycleObservation, inputs: Mapping, ast: ModelAst,
               model_state_post: Mapping, strict: bool = False, stepped=None):
    """Synchronize the specification state after one exchange.

    Readable state variables are copied from the observation; hidden ones are
    taken from the model's computed post-state (assuming an error-free
    subject, their model representation is the reference value).  Predicate
    states are stepped unless ``stepped`` carries the already-stepped
    (states, flags) pair.
    """
    if stepped is None:
        stepped = step_predicates(spec_state, obs, inputs, strict)
    predicate_states, flags = stepped

    readable = {d.name for d in ast.readable_state()}
    for name in obs.visible_state:
        if name not in readable:
            raise UnknownStateVar(name)
    state_vars = {}
    for decl in ast.state_vars:
        if decl.visibility == "readable":
            if decl.name not in obs.visible_state:
                raise UnknownStateVar(decl.name)
            state_vars[decl.name] = int(obs.visible_state[decl.name])
        else:
            if decl.name not in model_state_post:
                raise UnknownStateVar(decl.name)
            state_vars[decl.name] = int(model_state_post[decl.name])

    return type(spec_state)(
        state_vars=state_vars,
        predicate_states=predicate_states,
        flags=flags,
        sys_time_ms=obs.sys_time_ms,
        observation=obs,
    )
