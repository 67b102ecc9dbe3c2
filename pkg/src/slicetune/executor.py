"""Evaluation of (configuration, query set) pairs.

Two executors share one surface: a deterministic seeded simulator used for all
desk-scale runs, and a client for an external controller speaking a
newline-delimited JSON protocol (see :class:`ExternalExecutor`).

Failure/timeout policy: any non-ok outcome is charged twice the summed default
cost of the requested queries, and produces no per-query data.
"""

from __future__ import annotations

import json
import math
import socket
from dataclasses import dataclass
from typing import Any

import numpy as np

from .space import ConfigSpace, Configuration
from .workload import Query, Workload, workload_cost

PENALTY_FACTOR = 2.0

STATUS_OK = "ok"
STATUS_FAILED = "failed"
STATUS_TIMEOUT = "timeout"


class ExecutorProtocolError(RuntimeError):
    """Transport or protocol failure talking to an external controller."""


@dataclass(frozen=True)
class EvalRequest:
    configuration: Configuration
    query_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.query_ids:
            raise ValueError("query_ids must be non-empty")


@dataclass(frozen=True)
class EvalOutcome:
    status: str
    per_query_latency: dict[str, float] | None = None
    penalized_total: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def total(self) -> float:
        """Simulated seconds charged to the clock for this evaluation."""
        if self.ok:
            return sum(self.per_query_latency.values())
        return self.penalized_total


class SimModel:
    """Seeded multiplicative log-linear latency model.

    Each query gets a per-knob weight in [-0.5, 0.5]; numeric knobs get a
    per-query optimum position in [0, 1] and categorical knobs per-choice
    offsets in [-1, 1]. Latency is exactly ``default_cost`` at the default
    configuration. A seeded axis-aligned box over at most two numeric knob
    dimensions (about 5% of the space) marks failing configurations.
    """

    def __init__(self, workload: Workload, space: ConfigSpace, seed: int):
        self.workload = workload
        self.space = space
        self.seed = seed
        rng = np.random.default_rng(seed)
        nq, nk = len(workload), len(space)
        # Queries share a system-level knob response plus a per-query deviation,
        # so subsets are informative about the full workload without being
        # interchangeable. Ranges: weights [-0.5, 0.5], optima [0, 1].
        shared_w = rng.uniform(-0.5, 0.5, size=nk)
        self._weights = 0.8 * shared_w + 0.2 * rng.uniform(-0.5, 0.5, size=(nq, nk))
        shared_o = rng.uniform(0.0, 1.0, size=nk)
        self._optima = np.clip(
            shared_o + 0.1 * rng.uniform(-1.0, 1.0, size=(nq, nk)), 0.0, 1.0
        )
        self._cat_offsets: dict[tuple[int, int], np.ndarray] = {}
        shared_s = {
            ki: rng.uniform(-1.0, 1.0, size=len(knob.choices))
            for ki, knob in enumerate(space.knobs)
            if knob.is_categorical
        }
        for qi in range(nq):
            for ki, knob in enumerate(space.knobs):
                if knob.is_categorical:
                    self._cat_offsets[(qi, ki)] = 0.7 * shared_s[ki] + 0.3 * rng.uniform(
                        -1.0, 1.0, size=len(knob.choices)
                    )
        self._qindex = {q.id: i for i, q in enumerate(workload.queries)}
        self._default_unit = [
            knob.to_unit(knob.default) if knob.is_numeric else None for knob in space.knobs
        ]
        self._failure_box = self._draw_failure_box(rng)

    def _draw_failure_box(self, rng: np.random.Generator) -> list[tuple[int, float, float]]:
        numeric = [i for i, k in enumerate(self.space.knobs) if k.is_numeric]
        if not numeric:
            return []
        dims = list(rng.choice(numeric, size=min(2, len(numeric)), replace=False))
        width = 0.05 ** (1.0 / len(dims))
        for _ in range(64):
            box = []
            for ki in dims:
                center = rng.uniform(width / 2, 1 - width / 2)
                box.append((int(ki), center - width / 2, center + width / 2))
            inside_default = all(
                lo <= self._default_unit[ki] <= hi for ki, lo, hi in box
            )
            if not inside_default:
                return box
        return []  # give up: no failure region rather than a failing default

    @property
    def failure_box(self) -> list[tuple[int, float, float]]:
        return list(self._failure_box)

    def fails(self, theta: Configuration) -> bool:
        if not self._failure_box:
            return False
        for ki, lo, hi in self._failure_box:
            u = self.space.knobs[ki].to_unit(theta.values[ki])
            if not lo <= u <= hi:
                return False
        return True

    def latency(self, q: Query, theta: Configuration) -> float:
        qi = self._qindex[q.id]
        exponent = 0.0
        for ki, knob in enumerate(self.space.knobs):
            w = self._weights[qi, ki]
            if knob.is_categorical:
                offsets = self._cat_offsets[(qi, ki)]
                r = offsets[knob.choices.index(theta.values[ki])] - offsets[
                    knob.choices.index(knob.default)
                ]
            else:
                x = knob.to_unit(theta.values[ki])
                o = self._optima[qi, ki]
                xd = self._default_unit[ki]
                r = (x - o) ** 2 - (xd - o) ** 2
            exponent += w * r
        return q.default_cost * math.exp(exponent)


def simulate_query(model: SimModel, q: Query, theta: Configuration) -> float:
    return model.latency(q, theta)


def _penalty(workload: Workload, query_ids: tuple[str, ...]) -> float:
    return PENALTY_FACTOR * workload_cost(workload, query_ids)


class SimulatedExecutor:
    """Pure, reentrant executor over a :class:`SimModel`."""

    def __init__(self, model: SimModel):
        self.model = model

    def evaluate(self, req: EvalRequest) -> EvalOutcome:
        penalty = _penalty(self.model.workload, req.query_ids)
        if self.model.fails(req.configuration):
            return EvalOutcome(status=STATUS_FAILED, penalized_total=penalty)
        latencies: dict[str, float] = {}
        total = 0.0
        for qid in req.query_ids:
            lat = self.model.latency(self.model.workload[qid], req.configuration)
            latencies[qid] = lat
            total += lat
            if total > penalty:
                return EvalOutcome(status=STATUS_TIMEOUT, penalized_total=penalty)
        return EvalOutcome(status=STATUS_OK, per_query_latency=latencies)


def encode_request(space: ConfigSpace, req: EvalRequest, timeout_s: float) -> bytes:
    msg = {
        "config": req.configuration.as_dict(space),
        "queries": list(req.query_ids),
        "timeout_s": timeout_s,
    }
    return (json.dumps(msg) + "\n").encode()


def decode_reply(line: bytes, req: EvalRequest, penalty: float) -> EvalOutcome:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ExecutorProtocolError(f"malformed reply: {exc}") from exc
    status = msg.get("status")
    if status == STATUS_OK:
        latencies = msg.get("latencies")
        if not isinstance(latencies, dict):
            raise ExecutorProtocolError("ok reply missing latencies")
        missing = [qid for qid in req.query_ids if qid not in latencies]
        if missing:
            raise ExecutorProtocolError(f"reply lacks latencies for {missing}")
        per_query = {qid: float(latencies[qid]) for qid in req.query_ids}
        if any(not lat > 0 for lat in per_query.values()):
            raise ExecutorProtocolError("non-positive latency in reply")
        return EvalOutcome(status=STATUS_OK, per_query_latency=per_query)
    if status in (STATUS_FAILED, STATUS_TIMEOUT):
        return EvalOutcome(status=status, penalized_total=penalty)
    raise ExecutorProtocolError(f"unknown status {status!r}")


class ExternalExecutor:
    """Client for an external controller over a TCP stream.

    Wire format (newline-delimited JSON, one request in flight):
    request ``{"config": {name: value, ...}, "queries": [ids], "timeout_s": n}``,
    reply ``{"status": "ok"|"failed"|"timeout", "latencies": {id: seconds}}``.
    """

    def __init__(self, address: str, workload: Workload, space: ConfigSpace, timeout: float = 60.0):
        host, _, port = address.rpartition(":")
        if not host:
            raise ValueError(f"address must be host:port, got {address!r}")
        self.workload = workload
        self.space = space
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise ExecutorProtocolError(f"cannot connect to {address}: {exc}") from exc
        self._rfile = self._sock.makefile("rb")

    def close(self) -> None:
        self._rfile.close()
        self._sock.close()

    def evaluate(self, req: EvalRequest) -> EvalOutcome:
        penalty = _penalty(self.workload, req.query_ids)
        try:
            self._sock.sendall(encode_request(self.space, req, timeout_s=penalty))
            line = self._rfile.readline()
        except OSError as exc:
            raise ExecutorProtocolError(f"transport error: {exc}") from exc
        if not line:
            raise ExecutorProtocolError("connection closed by controller")
        return decode_reply(line, req, penalty)


def serve_protocol_stream(executor, space: ConfigSpace, rfile, wfile) -> None:
    """Answer protocol requests from a stream using a backing executor.

    Used to expose the simulator behind the wire protocol (tests, demos).
    Runs until the peer closes the stream.
    """
    for line in rfile:
        msg = json.loads(line)
        theta = space.configuration_from_dict(msg["config"])
        outcome = executor.evaluate(EvalRequest(configuration=theta, query_ids=tuple(msg["queries"])))
        if outcome.ok:
            reply: dict[str, Any] = {"status": STATUS_OK, "latencies": outcome.per_query_latency}
        else:
            reply = {"status": outcome.status, "latencies": {}}
        wfile.write((json.dumps(reply) + "\n").encode())
        wfile.flush()
