"""End-of-slice candidate pruning, hybrid scoring, and full-workload verification.

One exploit/explore draw is made per slice: exploit with probability 1 - eta,
explore with probability eta. Exploit ranks by predicted-plus-measured cost;
explore ranks by dissimilarity to labeled configurations plus model variance.
The top fraction of survivors is verified by executing only the queries not
already covered for that configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import forest
from .executor import EvalRequest, PENALTY_FACTOR, STATUS_OK
from .history import RunHistory
from .runtime import EvalContext
from .space import ConfigSpace, Configuration, encode, set_similarity
from .tuning import Observation
from .workload import CompressedWorkload, Workload

MODE_EXPLOIT = "exploit"
MODE_EXPLORE = "explore"

DEFAULT_ALPHA = 0.25
EXPLORE_PRUNE_FACTOR = 1.2


@dataclass
class VerifierState:
    default_full_perf: float
    alpha: float = DEFAULT_ALPHA
    explore_prune_factor: float = EXPLORE_PRUNE_FACTOR
    forest_params: forest.ForestParams = field(default_factory=forest.ForestParams)
    global_surrogate: forest.SurrogateModel | None = None
    labeled: list[tuple[Configuration, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not self.default_full_perf > 0:
            raise ValueError("default_full_perf must be positive")

    @property
    def labeled_configs(self) -> list[Configuration]:
        return [theta for theta, _ in self.labeled]

    def best(self) -> tuple[Configuration, float] | None:
        if not self.labeled:
            return None
        return min(self.labeled, key=lambda pair: pair[1])


def exploit_score(
    theta: Configuration,
    subset_cost: float,
    sub_size: int,
    full_size: int,
    m: forest.SurrogateModel,
    space: ConfigSpace,
) -> float:
    """Negated estimate of full-workload cost; higher is better."""
    if m is None:
        raise ValueError("exploit_score requires a fitted global surrogate")
    mean, _ = forest.predict_with_uncertainty(m, encode(theta, space))
    weight = 1.0 - sub_size / full_size
    return -(weight * mean + subset_cost)


def explore_potential(
    theta: Configuration,
    labeled: list[Configuration],
    m: forest.SurrogateModel,
    alpha: float,
    space: ConfigSpace,
) -> float:
    """Dissimilarity-to-labeled and model-variance blend; higher is better."""
    if m is None:
        raise ValueError("explore_potential requires a fitted global surrogate")
    if not labeled:
        raise ValueError("no labeled configurations")
    phi = set_similarity(theta, labeled, space)
    _, variance = forest.predict_with_uncertainty(m, encode(theta, space))
    return alpha * (1.0 - phi) + (1.0 - alpha) * variance


def choose_mode(eta: float, rng: np.random.Generator) -> str:
    """One draw per slice: exploit with probability 1 - eta."""
    if not 0 <= eta < 1:
        raise ValueError("eta must be in [0, 1)")
    return MODE_EXPLOIT if rng.random() < 1.0 - eta else MODE_EXPLORE


def prune_candidates(
    proposals: list[Observation],
    mode: str,
    default_subset_cost: float,
    factor: float = EXPLORE_PRUNE_FACTOR,
) -> list[Observation]:
    """Drop penalized proposals and those worse than the mode's threshold."""
    threshold = default_subset_cost if mode == MODE_EXPLOIT else factor * default_subset_cost
    return [
        p for p in proposals if p.status == STATUS_OK and p.objective <= threshold
    ]


def score_and_select(
    survivors: list[Observation],
    mode: str,
    state: VerifierState,
    sub_size: int,
    full_size: int,
    space: ConfigSpace,
    quota: int,
) -> list[Observation]:
    """Pick the top ceil(alpha * quota) survivors, ties by lower config id.

    Before any full-workload label exists (first slice), survivors are ranked
    by measured subset cost instead of the surrogate scores.
    """
    limit = math.ceil(state.alpha * quota)
    if state.global_surrogate is None or not state.labeled:
        ranked = sorted(survivors, key=lambda p: (p.objective, p.configuration.id))
    else:
        if mode == MODE_EXPLOIT:
            def score(p: Observation) -> float:
                return exploit_score(
                    p.configuration, p.objective, sub_size, full_size,
                    state.global_surrogate, space,
                )
        else:
            def score(p: Observation) -> float:
                return explore_potential(
                    p.configuration, state.labeled_configs,
                    state.global_surrogate, state.alpha, space,
                )
        ranked = sorted(survivors, key=lambda p: (-score(p), p.configuration.id))
    return ranked[:limit]


def verify_on_full_workload(
    theta: Configuration,
    sub: CompressedWorkload,
    w: Workload,
    h: RunHistory,
    ctx: EvalContext,
    state: VerifierState,
    space: ConfigSpace,
) -> float:
    """Measure theta on the full workload, executing only uncovered queries.

    On failure/timeout of the remainder run the configuration is labeled with
    the 2x full-workload penalty and no cells are recorded. The global
    surrogate is refit on the labeled set after every verification.
    """
    h.register(theta)
    missing = h.missing_ids(w.ids, theta.id)
    if missing:
        outcome = ctx.evaluate(
            EvalRequest(configuration=theta, query_ids=tuple(missing)), event="verify"
        )
        if outcome.ok:
            for qid in missing:
                h.record(qid, theta.id, outcome.per_query_latency[qid])
            full_latency = h.aggregate_cost(w.ids, theta.id)
        else:
            full_latency = PENALTY_FACTOR * w.total_cost()
    else:
        full_latency = h.aggregate_cost(w.ids, theta.id)
    state.labeled.append((theta, full_latency))
    xs = [encode(c, space) for c in state.labeled_configs]
    ys = [y for _, y in state.labeled]
    state.global_surrogate = forest.fit(xs, ys, state.forest_params)
    return full_latency
