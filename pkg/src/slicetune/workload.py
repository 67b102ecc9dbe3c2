"""Workload ingestion and the query/cost data model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

RATIO_TOL = 1e-9


@dataclass(frozen=True)
class Query:
    """One workload member; ``default_cost`` is its execution time (seconds)
    under the default configuration and the unit of the compression budget."""

    id: str
    text: str
    default_cost: float

    def __post_init__(self) -> None:
        if not self.default_cost > 0:
            raise ValueError(f"query {self.id}: default_cost must be positive")


class Workload:
    """Ordered multiset of queries. Duplicate texts are allowed, ids are not."""

    def __init__(self, queries: Sequence[Query]):
        if not queries:
            raise ValueError("workload must be non-empty")
        seen = set()
        for q in queries:
            if q.id in seen:
                raise ValueError(f"duplicate query id {q.id!r}")
            seen.add(q.id)
        self.queries = tuple(queries)
        self._by_id = {q.id: q for q in self.queries}

    def __len__(self) -> int:
        return len(self.queries)

    def __contains__(self, qid: str) -> bool:
        return qid in self._by_id

    def __getitem__(self, qid: str) -> Query:
        return self._by_id[qid]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(q.id for q in self.queries)

    def total_cost(self) -> float:
        return workload_cost(self, self.ids)


def workload_cost(w: Workload, ids: Iterable[str]) -> float:
    """Sum of default costs over ``ids`` (the c(.) of the compression budget)."""
    total = 0.0
    for qid in ids:
        if qid not in w:
            raise KeyError(f"unknown query id {qid!r}")
        total += w[qid].default_cost
    return total


@dataclass(frozen=True)
class CompressedWorkload:
    """A selected subset and its compression ratio (pruned cost fraction)."""

    member_ids: tuple[str, ...]
    ratio: float

    def __post_init__(self) -> None:
        if not self.member_ids:
            raise ValueError("compressed workload must be non-empty")

    @classmethod
    def from_members(cls, w: Workload, member_ids: Sequence[str]) -> "CompressedWorkload":
        ratio = 1.0 - workload_cost(w, member_ids) / w.total_cost()
        return cls(member_ids=tuple(member_ids), ratio=ratio)

    def check_ratio(self, w: Workload) -> None:
        expected = 1.0 - workload_cost(w, self.member_ids) / w.total_cost()
        if abs(expected - self.ratio) > RATIO_TOL:
            raise ValueError("stored ratio inconsistent with member costs")


def load_workload(path: str) -> Workload:
    """Parse a workload file: JSON array of {id, text, default_cost?} objects.

    Entries missing ``default_cost`` must be filled by one default-configuration
    evaluation before the workload is usable (the harness does this).
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("workload file must contain a JSON array")
    if not raw:
        raise ValueError("workload must be non-empty")
    queries = []
    pending = False
    for obj in raw:
        qid, text = str(obj["id"]), str(obj.get("text", ""))
        cost = obj.get("default_cost")
        if cost is None:
            queries.append(_PendingQuery(id=qid, text=text))
            pending = True
        else:
            if not cost > 0:
                raise ValueError(f"query {qid!r}: default_cost must be positive")
            queries.append(Query(id=qid, text=text, default_cost=float(cost)))
    if pending:
        # Costs come from one default-configuration run; the harness resolves this.
        return _PendingWorkload(queries)
    return Workload(queries)


@dataclass(frozen=True)
class _PendingQuery:
    id: str
    text: str


class _PendingWorkload:
    """Workload whose costs must come from a default-configuration run."""

    def __init__(self, queries):
        seen = set()
        for q in queries:
            if q.id in seen:
                raise ValueError(f"duplicate query id {q.id!r}")
            seen.add(q.id)
        self.queries = tuple(queries)

    def resolve(self, costs: dict[str, float]) -> Workload:
        resolved = []
        for q in self.queries:
            if isinstance(q, Query):
                resolved.append(q)
            else:
                resolved.append(Query(id=q.id, text=q.text, default_cost=costs[q.id]))
        return Workload(resolved)
