import json
import sys

import pytest

from cyclotest.contracts import SpecificationState
from cyclotest.dsl import extract_predicates, parse_model
from cyclotest.iron import IronSut, DESK_DURATIONS_MS
from cyclotest.kernel import KernelConfig
from cyclotest.mediator import (
    CycleObservation,
    Disconnect,
    HandshakeMismatch,
    InProcessLink,
    ProtocolError,
    UnknownStateVar,
    WireMessage,
    _StreamLink,
    hello_for_model,
    step_predicates,
    sync_state,
    validate_hello,
)
from cyclotest.temporal import initial_states


class TestWireFormat:
    def test_set_inputs_schema(self):
        msg = WireMessage("set_inputs", 3, {"values": {"move": 0, "position": 1}})
        data = json.loads(msg.encode())
        assert data == {"type": "set_inputs", "cycle": 3,
                        "values": {"move": 0, "position": 1}}

    def test_observation_roundtrip(self):
        raw = (b'{"type":"observation","cycle":2,"sys_time_ms":3000,'
               b'"outputs":{"heating":1},"state":{}}')
        msg = WireMessage.decode(raw)
        assert msg.type == "observation"
        assert msg.cycle == 2
        assert msg.payload["outputs"] == {"heating": 1}

    def test_bad_json_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            WireMessage.decode(b"not json\n")

    def test_hello_schema(self, iron_ast):
        hello = hello_for_model(iron_ast, 1000)
        assert hello == {
            "type": "hello",
            "model": "iron",
            "inputs": ["move", "position"],
            "outputs": ["heating"],
            "state": [],
            "cycle_period_ms": 1000,
        }

    def test_handshake_mismatch(self, iron_ast):
        hello = hello_for_model(iron_ast, 1000)
        hello["outputs"] = ["boiler"]
        with pytest.raises(HandshakeMismatch):
            validate_hello(hello, iron_ast)


class TestInProcessLink:
    def _link(self, iron_desk):
        sut = IronSut(DESK_DURATIONS_MS, 1000)
        return InProcessLink(iron_desk, sut, KernelConfig(cycle_period_ms=1000))

    def test_exchange_shape(self, iron_desk):
        link = self._link(iron_desk)
        obs = link.exchange({"move": 0, "position": 1})
        assert obs.cycle == 0
        assert obs.sys_time_ms == 1000
        assert set(obs.outputs) == {"heating"}
        assert obs.visible_state == {}

    def test_cycle_indices_increase_by_one(self, iron_desk):
        link = self._link(iron_desk)
        cycles = [link.exchange({"move": 0, "position": 0}).cycle for _ in range(5)]
        assert cycles == [0, 1, 2, 3, 4]

    def test_mediators_bracket_the_subject(self, iron_desk):
        link = self._link(iron_desk)
        order = link.kernel.subsystem_order
        assert order[0] == "set-mediator"
        assert order[-1] == "get-mediator"
        assert "iron" in order


class ScriptedLink(_StreamLink):
    """Stream link with canned responses instead of a real transport."""

    def __init__(self, model, lines):
        super().__init__(model, timeout_s=0.1)
        self.lines = list(lines)
        self.sent = []
        self._handshake()

    def _send(self, message):
        self.sent.append(json.loads(message.encode()))

    def _readline(self):
        return self.lines.pop(0) if self.lines else b""


def _hello_line(model):
    return (json.dumps(hello_for_model(model, 1000)) + "\n").encode()


class TestStreamProtocol:
    def test_handshake_mismatch_aborts_before_cycle_zero(self, iron_ast):
        wrong = hello_for_model(iron_ast, 1000)
        wrong["model"] = "kettle"
        with pytest.raises(HandshakeMismatch):
            ScriptedLink(iron_ast, [(json.dumps(wrong) + "\n").encode()])

    def test_out_of_order_cycle(self, iron_ast):
        obs = {"type": "observation", "cycle": 2, "sys_time_ms": 1000,
               "outputs": {"heating": 1}, "state": {}}
        link = ScriptedLink(iron_ast, [_hello_line(iron_ast),
                                       (json.dumps(obs) + "\n").encode()])
        with pytest.raises(ProtocolError, match="cycle 2 after set_inputs 0"):
            link.exchange({"move": 0, "position": 0})

    def test_disconnect_mid_cycle(self, iron_ast):
        link = ScriptedLink(iron_ast, [_hello_line(iron_ast)])
        with pytest.raises(Disconnect):
            link.exchange({"move": 0, "position": 0})

    def test_error_message_surfaces(self, iron_ast):
        err = {"type": "error", "message": "kaput"}
        link = ScriptedLink(iron_ast, [_hello_line(iron_ast),
                                       (json.dumps(err) + "\n").encode()])
        with pytest.raises(Exception, match="kaput"):
            link.exchange({"move": 0, "position": 0})

    def test_wrong_payload_keys(self, iron_ast):
        obs = {"type": "observation", "cycle": 0, "sys_time_ms": 1000,
               "outputs": {"boiler": 1}, "state": {}}
        link = ScriptedLink(iron_ast, [_hello_line(iron_ast),
                                       (json.dumps(obs) + "\n").encode()])
        with pytest.raises(ProtocolError, match="outputs"):
            link.exchange({"move": 0, "position": 0})


STATEFUL_SRC = """
model gauge {
  input tick: bool;
  output level_out: int 0..3;
  state level: int 0..3 readable = 0;
  state armed: bool hidden = 0;

  logic {
    if (tick) {
      level = 1;
      armed = 1;
      level_out = 1;
    } else {
      level_out = 0;
    }
  }
}
"""


class TestSyncState:
    def _state(self, extraction, model):
        return SpecificationState(
            state_vars=model.initial_state(),
            predicate_states=initial_states(extraction.predicates),
            flags={p.id: False for p in extraction.predicates},
        )

    def test_iron_only_predicates_updated(self, iron_extraction):
        model = iron_extraction.model
        state = self._state(iron_extraction, model)
        obs = CycleObservation(0, 1000, {"heating": 1}, {})
        new = sync_state(state, obs, {"move": 0, "position": 0}, model, {})
        assert new.state_vars == {}
        assert new.predicate_states["move_eq_f_t1"].since_ms == 1000
        assert new.predicate_states["position_eq_t_t2"].since_ms is None
        assert new.flags["move_eq_f_t1"] is False

    def test_hidden_var_from_model_post_readable_from_observation(self):
        ast = parse_model(STATEFUL_SRC)
        ex = extract_predicates(ast)
        state = self._state(ex, ex.model)
        obs = CycleObservation(0, 1000, {"level_out": 1}, {"level": 3})
        new = sync_state(state, obs, {"tick": 1}, ex.model, {"level": 1, "armed": 1})
        assert new.state_vars["armed"] == 1  # hidden: model value
        assert new.state_vars["level"] == 3  # readable: observation wins

    def test_missing_readable_var_rejected(self):
        ast = parse_model(STATEFUL_SRC)
        ex = extract_predicates(ast)
        state = self._state(ex, ex.model)
        obs = CycleObservation(0, 1000, {"level_out": 1}, {})
        with pytest.raises(UnknownStateVar):
            sync_state(state, obs, {"tick": 1}, ex.model, {"level": 1, "armed": 1})

    def test_predicates_step_at_observed_time(self, iron_extraction):
        model = iron_extraction.model
        state = self._state(iron_extraction, model)
        obs = CycleObservation(0, 123_456, {"heating": 1}, {})
        _, flags = step_predicates(state, obs, {"move": 0, "position": 1})
        new = sync_state(state, obs, {"move": 0, "position": 1}, model, {})
        assert new.predicate_states["position_eq_t_t2"].since_ms == 123_456
        assert new.flags == flags


class TestStdioTransport:
    def test_silent_subject_times_out(self, iron_desk):
        from cyclotest.mediator import ExchangeTimeout, StdioLink

        with pytest.raises(ExchangeTimeout):
            StdioLink(iron_desk, [sys.executable, "-c", "import time; time.sleep(30)"],
                      timeout_s=0.3)

    def test_short_session_against_real_subject(self, iron_desk):
        from cyclotest.mediator import StdioLink

        link = StdioLink(
            iron_desk,
            [sys.executable, "-m", "cyclotest.iron_sut", "--durations", "3000,5000"],
            timeout_s=10.0,
        )
        try:
            first = link.exchange({"move": 0, "position": 0})
            assert first.cycle == 0 and first.outputs == {"heating": 1}
            for _ in range(3):
                obs = link.exchange({"move": 0, "position": 0})
            assert obs.cycle == 3
            assert obs.outputs == {"heating": 0}  # short condition fires at 3 cycles
        finally:
            link.close()
