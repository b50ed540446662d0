"""Standalone iron shut-off subject speaking the NDJSON mediator protocol.

Runs the iron step function inside its own simulation kernel and serves one
test session over stdio or a single TCP connection: hello first, then a
strict set_inputs/observation alternation until shutdown or EOF.
"""
from __future__ import annotations

import argparse
import json
import socket
import sys

from .iron import DESK_DURATIONS_MS, FULL_DURATIONS_MS, IronSut, MUTANT_IDS
from .kernel import Kernel, KernelConfig

SIGNATURE = {"inputs": ["move", "position"], "outputs": ["heating"], "state": []}


class _Session:
    def __init__(self, sut: IronSut, period_ms: int):
        self.sut = sut
        self.kernel = Kernel(KernelConfig(cycle_period_ms=period_ms))
        self._staged = {}
        self._inputs = {}
        self._outputs = {}
        self._obs = None
        self.kernel.register_subsystem("set-mediator", self._set_mediator)
        self.kernel.register_subsystem("iron", self._step)
        self.kernel.register_subsystem("get-mediator", self._get_mediator)

    def _set_mediator(self, ctx) -> None:
        self._inputs = dict(self._staged)

    def _step(self, ctx) -> None:
        self._outputs = self.sut.step(self._inputs, ctx.sys_time_ms)

    def _get_mediator(self, ctx) -> None:
        self._obs = {
            "type": "observation",
            "cycle": ctx.cycle_index,
            "sys_time_ms": ctx.sys_time_ms,
            "outputs": dict(self._outputs),
            "state": self.sut.visible_state(),
        }

    def cycle(self, values: dict) -> dict:
        self._staged = values
        self.kernel.run_cycle()
        return self._obs


def serve(reader, writer, sut: IronSut, period_ms: int) -> int:
    def send(data: dict) -> None:
        writer.write((json.dumps(data, sort_keys=True) + "\n").encode("utf-8"))
        writer.flush()

    session = _Session(sut, period_ms)
    send({"type": "hello", "model": "iron", "cycle_period_ms": period_ms, **SIGNATURE})
    expected_cycle = 0
    while True:
        line = reader.readline()
        if not line:
            return 0
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            send({"type": "error", "message": "bad message: %s" % exc})
            return 1
        mtype = msg.get("type")
        if mtype == "shutdown":
            return 0
        if mtype != "set_inputs":
            send({"type": "error", "message": "unexpected message type %r" % mtype})
            return 1
        if msg.get("cycle") != expected_cycle:
            send({"type": "error",
                  "message": "cycle %r out of order, expected %d" % (msg.get("cycle"),
                                                                     expected_cycle)})
            return 1
        values = msg.get("values") or {}
        missing = [k for k in SIGNATURE["inputs"] if k not in values]
        if missing:
            send({"type": "error", "message": "missing input(s): %s" % ", ".join(missing)})
            return 1
        send(session.cycle(values))
        expected_cycle += 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="iron-sut",
                                     description="iron shut-off subject (NDJSON protocol)")
    parser.add_argument("--mutant", choices=MUTANT_IDS, help="serve a seeded fault")
    parser.add_argument("--listen", metavar="tcp:HOST:PORT",
                        help="serve one TCP connection instead of stdio")
    parser.add_argument("--stdio", action="store_true", help="serve on stdin/stdout (default)")
    parser.add_argument("--period-ms", type=int, default=1000)
    parser.add_argument("--desk-scale", action="store_true",
                        help="3/5-cycle durations instead of 60 s/900 s")
    parser.add_argument("--durations", metavar="SHORT_MS,LONG_MS",
                        help="explicit condition durations in ms")
    args = parser.parse_args(argv)

    durations = FULL_DURATIONS_MS
    if args.desk_scale:
        durations = DESK_DURATIONS_MS
    if args.durations:
        short, long_ = args.durations.split(",")
        durations = (int(short), int(long_))
    sut = IronSut(durations, args.period_ms, mutant=args.mutant)

    if args.listen:
        kind, _, addr = args.listen.partition(":")
        if kind != "tcp":
            parser.error("--listen expects tcp:HOST:PORT")
        host, _, port = addr.rpartition(":")
        server = socket.create_server((host, int(port)))
        host, port = server.getsockname()[:2]
        print("listening on %s:%d" % (host, port), flush=True)
        conn, _ = server.accept()
        with conn:
            with conn.makefile("rb") as reader, conn.makefile("wb") as writer:
                code = serve(reader, writer, sut, args.period_ms)
        server.close()
        return code
    return serve(sys.stdin.buffer, sys.stdout.buffer, sut, args.period_ms)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
