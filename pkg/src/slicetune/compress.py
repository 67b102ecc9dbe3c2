"""Representative-subset selection and the adaptive compression ratio.

Cold start uses either uniform random packing or a coverage-per-cost greedy
over distinct query text tokens. Warm slices rerun a budgeted greedy that
maximizes the representativity gain per unit cost, penalized by each query's
missing-history count (backfill overhead).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .history import RunHistory
from .workload import CompressedWorkload, Query, Workload

BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class CompressorParams:
    eta0: float = 0.75
    eta_step: float = 0.1
    eta_floor: float = 0.0
    beta: float = 0.1

    def __post_init__(self) -> None:
        if not 0 < self.eta0 < 1:
            raise ValueError("eta0 must be in (0, 1)")
        if not 0 < self.eta_step <= self.eta0:
            raise ValueError("eta_step must be in (0, eta0]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def budget_for_ratio(w: Workload, eta: float) -> float:
    return (1.0 - eta) * w.total_cost()


def _check_budget(w: Workload, budget: float) -> None:
    if min(q.default_cost for q in w.queries) > budget + BUDGET_TOL:
        raise ValueError("budget below minimum query cost")


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"\w+", text))


def initial_subset(
    w: Workload, eta: float, seed: int, strategy: str = "random"
) -> CompressedWorkload:
    """Cold-start subset under budget (1 - eta) * c(W).

    ``random``: uniform shuffle, adding each query that still fits.
    ``coverage``: greedy on new-distinct-token coverage per unit cost, ties by
    lower cost then earlier workload position.
    """
    budget = budget_for_ratio(w, eta)
    _check_budget(w, budget)
    if strategy == "random":
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(w))
        members = []
        remaining = budget
        for idx in order:
            q = w.queries[idx]
            if q.default_cost <= remaining + BUDGET_TOL:
                members.append(q.id)
                remaining -= q.default_cost
        members.sort(key=lambda qid: w.ids.index(qid))
        return CompressedWorkload.from_members(w, members)
    if strategy == "coverage":
        token_sets = {q.id: _tokens(q.text) for q in w.queries}
        covered: set[str] = set()
        members: list[str] = []
        remaining = budget
        while True:
            best: Query | None = None
            best_key = None
            for pos, q in enumerate(w.queries):
                if q.id in members or q.default_cost > remaining + BUDGET_TOL:
                    continue
                gain = len(token_sets[q.id] - covered) / q.default_cost
                key = (-gain, q.default_cost, pos)
                if best is None or key < best_key:
                    best, best_key = q, key
            if best is None:
                break
            members.append(best.id)
            covered |= token_sets[best.id]
            remaining -= best.default_cost
        return CompressedWorkload.from_members(w, members)
    raise ValueError(f"unknown strategy {strategy!r}")


def marginal_gain(
    q: Query, sub: CompressedWorkload, w: Workload, h: RunHistory, beta: float
) -> float:
    """Representativity gain per unit cost of adding ``q``, minus the
    missing-history penalty ``beta * lacked_history(q)``."""
    if q.id in sub.member_ids:
        raise ValueError(f"query {q.id!r} already in the subset")
    full = list(w.ids)
    with_q = h.representativity(list(sub.member_ids) + [q.id], full)
    without = h.representativity(list(sub.member_ids), full)
    return (with_q - without) / q.default_cost - beta * h.lacked_history(q.id)


class _GainEvaluator:
    """Incremental representativity over registered configurations.

    Caches per-query cell vectors and full-workload totals so each greedy step
    scores all candidates without re-walking the history.
    """

    def __init__(self, w: Workload, h: RunHistory):
        self.w = w
        cids = h.config_ids
        self.n = len(cids)
        self.cells = {
            q.id: np.array(
                [h.get(q.id, cid) if h.has(q.id, cid) else np.nan for cid in cids]
            )
            for q in w.queries
        }
        full_tot = np.zeros(self.n)
        full_ok = np.ones(self.n, dtype=bool)
        for q in w.queries:
            col = self.cells[q.id]
            full_ok &= ~np.isnan(col)
            full_tot += np.where(np.isnan(col), 0.0, col)
        self.full_tot = full_tot
        self.full_ok = full_ok
        self.sub_sum = np.zeros(self.n)
        self.sub_ok = np.ones(self.n, dtype=bool)

    def add(self, qid: str) -> None:
        col = self.cells[qid]
        self.sub_ok &= ~np.isnan(col)
        self.sub_sum += np.where(np.isnan(col), 0.0, col)

    def _r(self, s: np.ndarray, f: np.ndarray) -> float:
        m = len(s)
        if m < 2:
            return 0.5
        agree = (f[:, None] <= f[None, :]) == (s[:, None] <= s[None, :])
        iu = np.triu_indices(m, k=1)
        return float(np.mean(agree[iu]))

    def current_r(self) -> float:
        mask = self.sub_ok & self.full_ok
        return self._r(self.sub_sum[mask], self.full_tot[mask])

    def r_with(self, qid: str) -> float:
        col = self.cells[qid]
        mask = self.sub_ok & self.full_ok & ~np.isnan(col)
        s = self.sub_sum[mask] + col[mask]
        return self._r(s, self.full_tot[mask])


def greedy_compress(
    w: Workload, h: RunHistory, eta: float, beta: float, seed: int = 0
) -> CompressedWorkload:
    """Budgeted greedy subset selection by penalized representativity gain.

    Starts empty; each step adds the affordable query with the highest gain
    (ties: lower cost, then earlier workload position). Only the budget
    terminates the loop, so negative-gain queries remain eligible.
    """
    budget = budget_for_ratio(w, eta)
    _check_budget(w, budget)
    ev = _GainEvaluator(w, h)
    lacked = {q.id: h.lacked_history(q.id) for q in w.queries}
    members: list[str] = []
    remaining = budget
    while True:
        r_current = ev.current_r()
        best_pos = None
        best_key = None
        for pos, q in enumerate(w.queries):
            if q.id in members or q.default_cost > remaining + BUDGET_TOL:
                continue
            gain = (ev.r_with(q.id) - r_current) / q.default_cost - beta * lacked[q.id]
            key = (-gain, q.default_cost, pos)
            if best_key is None or key < best_key:
                best_pos, best_key = pos, key
        if best_pos is None:
            break
        chosen = w.queries[best_pos]
        members.append(chosen.id)
        ev.add(chosen.id)
        remaining -= chosen.default_cost
    return CompressedWorkload.from_members(w, members)


def adapt_ratio(eta: float, improved_this_slice: bool, params: CompressorParams) -> float:
    """Keep eta when the slice improved; otherwise step it down toward the floor."""
    if not 0 <= eta < 1:
        raise ValueError("eta must be in [0, 1)")
    if improved_this_slice:
        return eta
    return max(eta - params.eta_step, params.eta_floor)
