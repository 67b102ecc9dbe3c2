"""Sparse per-query run history and the representativity metric.

The history is a (query id, configuration id) -> latency table. It is
append-only: re-recording a cell with a conflicting value signals a bug,
because the simulator is deterministic.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

from .space import ConfigSpace, Configuration

NEUTRAL_REPRESENTATIVITY = 0.5


class RunHistory:
    def __init__(self) -> None:
        self._entries: dict[tuple[str, int], float] = {}
        self._registry: dict[int, Configuration] = {}
        self._order: list[int] = []
        self.default_perf: dict[str, float] = {}

    # -- registry -------------------------------------------------------

    def register(self, theta: Configuration) -> None:
        if theta.id not in self._registry:
            self._registry[theta.id] = theta
            self._order.append(theta.id)

    def configuration(self, cid: int) -> Configuration:
        return self._registry[cid]

    @property
    def config_ids(self) -> tuple[int, ...]:
        """Registered configuration ids in registration order."""
        return tuple(self._order)

    # -- cells ----------------------------------------------------------

    def record(self, qid: str, cid: int, latency: float) -> None:
        if not latency > 0:
            raise ValueError("latency must be positive")
        if cid not in self._registry:
            raise KeyError(f"configuration {cid} not registered")
        key = (qid, cid)
        existing = self._entries.get(key)
        if existing is not None:
            if existing != latency:
                raise ValueError(
                    f"conflicting latency for ({qid!r}, {cid}): {existing} vs {latency}"
                )
            return
        self._entries[key] = latency

    def get(self, qid: str, cid: int) -> float | None:
        return self._entries.get((qid, cid))

    def has(self, qid: str, cid: int) -> bool:
        return (qid, cid) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    # -- aggregations ---------------------------------------------------

    def aggregate_cost(self, ids: Iterable[str], cid: int) -> float | None:
        """Sum of latencies over ``ids`` under ``cid``; None if any cell is missing."""
        total = 0.0
        for qid in ids:
            lat = self._entries.get((qid, cid))
            if lat is None:
                return None
            total += lat
        return total

    def lacked_history(self, qid: str) -> int:
        """Registered configurations with no latency recorded for ``qid``."""
        return sum(1 for cid in self._order if (qid, cid) not in self._entries)

    def missing_ids(self, ids: Iterable[str], cid: int) -> list[str]:
        return [qid for qid in ids if (qid, cid) not in self._entries]

    def fully_covered_configs(self, ids: Iterable[str]) -> list[int]:
        """Configurations with a cell for every query in ``ids``, in registration order."""
        ids = list(ids)
        return [cid for cid in self._order if not self.missing_ids(ids, cid)]

    def representativity(self, sub: Sequence[str], full: Sequence[str]) -> float:
        """Fraction of configuration pairs whose total-latency ordering agrees
        between ``sub`` and ``full``.

        Only configurations fully covered for both query sets are paired; with
        fewer than two such configurations the neutral value 0.5 is returned.
        Ties (<=) count as concordant on both sides.
        """
        sub, full = list(sub), list(full)
        totals: list[tuple[float, float]] = []
        for cid in self._order:
            s = self.aggregate_cost(sub, cid)
            if s is None:
                continue
            f = self.aggregate_cost(full, cid)
            if f is None:
                continue
            totals.append((s, f))
        m = len(totals)
        if m < 2:
            return NEUTRAL_REPRESENTATIVITY
        concordant = 0
        for j in range(m):
            sj, fj = totals[j]
            for k in range(j + 1, m):
                sk, fk = totals[k]
                if (fj <= fk) == (sj <= sk):
                    concordant += 1
        return 2.0 * concordant / (m * (m - 1))

    # -- persistence ----------------------------------------------------

    def save(self, entries_path: str, registry_path: str, space: ConfigSpace) -> None:
        with open(entries_path, "w") as fh:
            for (qid, cid), lat in sorted(self._entries.items(), key=lambda kv: (kv[0][1], kv[0][0])):
                fh.write(json.dumps({"query": qid, "config": cid, "latency": lat}) + "\n")
        with open(registry_path, "w") as fh:
            for cid in self._order:
                theta = self._registry[cid]
                fh.write(json.dumps({"id": cid, "values": theta.as_dict(space)}) + "\n")

    @classmethod
    def load(cls, entries_path: str, registry_path: str, space: ConfigSpace) -> "RunHistory":
        h = cls()
        if os.path.exists(registry_path):
            with open(registry_path) as fh:
                for line in fh:
                    obj = json.loads(line)
                    theta = Configuration(
                        id=int(obj["id"]),
                        values=tuple(obj["values"][k.name] for k in space.knobs),
                    )
                    h.register(theta)
        if os.path.exists(entries_path):
            with open(entries_path) as fh:
                for line in fh:
                    obj = json.loads(line)
                    h.record(obj["query"], int(obj["config"]), float(obj["latency"]))
        return h
