"""Per-slice Bayesian-optimization loop over the current subset.

Each slice bootstraps its local surrogate from reusable history cells
(executing only the missing ones), tops up with Latin hypercube samples when
reuse is thin, then proposes and evaluates configurations by expected
improvement until the valid-observation quota is met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import forest
from .executor import EvalRequest
from .history import RunHistory
from .runtime import BudgetExhausted, EvalContext
from .space import ConfigSpace, Configuration, encode, sample_lhs
from .workload import CompressedWorkload

DEFAULT_QUOTA = 20
DEFAULT_LHS_FLOOR = 10
N_RANDOM_CANDIDATES = 2000
N_NEIGHBOR_CANDIDATES = 10


@dataclass
class Observation:
    configuration: Configuration
    objective: float
    status: str


@dataclass
class SliceState:
    index: int
    subset: CompressedWorkload
    surrogate: forest.SurrogateModel | None = None
    proposals: list[Observation] = field(default_factory=list)
    incumbent_cost: float = math.inf
    incumbent_config: Configuration | None = None
    bootstrap_pairs: int = 0
    lhs_evaluations: int = 0
    random_fallbacks: int = 0
    completed: bool = False


def bootstrap_training_set(
    h: RunHistory, sub: CompressedWorkload, ctx: EvalContext
) -> list[tuple[Configuration, float]]:
    """Training pairs (theta, subset latency) for every registered configuration.

    Fully covered configurations reuse history cells; partially covered ones
    execute exactly their missing cells first. Configurations whose backfill
    run fails or times out are skipped (the penalty is charged but never used
    as training data).
    """
    pairs: list[tuple[Configuration, float]] = []
    for cid in h.config_ids:
        missing = h.missing_ids(sub.member_ids, cid)
        theta = h.configuration(cid)
        if missing:
            outcome = ctx.evaluate(
                EvalRequest(configuration=theta, query_ids=tuple(missing)), event="backfill"
            )
            if not outcome.ok:
                continue
            for qid in missing:
                h.record(qid, cid, outcome.per_query_latency[qid])
        pairs.append((theta, h.aggregate_cost(sub.member_ids, cid)))
    return pairs


class CandidateSet:
    """Lazily materialized candidate configurations with precomputed encodings."""

    def __init__(self, space: ConfigSpace, columns: list, enc: np.ndarray):
        self._space = space
        self._columns = columns
        self.enc = enc

    def __len__(self) -> int:
        return self.enc.shape[0]

    def materialize(self, i: int) -> Configuration:
        values = tuple(col[i] for col in self._columns)
        return self._space.configuration(values)


def _random_columns(space: ConfigSpace, n: int, rng: np.random.Generator):
    columns = []
    enc = np.empty((n, len(space.knobs)))
    for i, knob in enumerate(space.knobs):
        if knob.is_categorical:
            idx = rng.integers(len(knob.choices), size=n)
            enc[:, i] = idx
            columns.append([knob.choices[j] for j in idx])
        else:
            u = rng.random(n)
            values = [knob.from_unit(v) for v in u]
            enc[:, i] = [knob.to_unit(v) for v in values]
            columns.append(values)
    return columns, enc


_PERTURB_SCALES = (0.02, 0.05, 0.1, 0.2)


def _perturb(space: ConfigSpace, theta: Configuration, rng: np.random.Generator) -> tuple:
    # Mixed step sizes so the neighborhood covers both fine polish and jumps.
    sigma = _PERTURB_SCALES[rng.integers(len(_PERTURB_SCALES))]
    values = []
    for knob, v in zip(space.knobs, theta.values):
        if knob.is_categorical:
            if rng.random() < 2 * sigma:
                values.append(knob.choices[rng.integers(len(knob.choices))])
            else:
                values.append(v)
        else:
            u = min(max(knob.to_unit(v) + rng.normal(0.0, sigma), 0.0), 1.0)
            values.append(knob.from_unit(u))
    return tuple(values)


def generate_candidates(
    space: ConfigSpace,
    seed: int,
    incumbent_config: Configuration | None,
    n_random: int = N_RANDOM_CANDIDATES,
    n_neighbors: int = N_NEIGHBOR_CANDIDATES,
) -> CandidateSet:
    """Seeded random candidates plus neighborhood perturbations of the incumbent."""
    rng = np.random.default_rng(seed)
    columns, enc = _random_columns(space, n_random, rng)
    if incumbent_config is not None:
        extra = [_perturb(space, incumbent_config, rng) for _ in range(n_neighbors)]
        extra_enc = np.empty((len(extra), len(space.knobs)))
        for j, values in enumerate(extra):
            for i, (knob, v) in enumerate(zip(space.knobs, values)):
                extra_enc[j, i] = knob.choices.index(v) if knob.is_categorical else knob.to_unit(v)
        for i in range(len(space.knobs)):
            columns[i] = list(columns[i]) + [values[i] for values in extra]
        enc = np.vstack([enc, extra_enc])
    return CandidateSet(space, columns, enc)


def expected_improvement(means: np.ndarray, variances: np.ndarray, incumbent: float) -> np.ndarray:
    """EI for minimization under a normal approximation at each candidate."""
    imp = incumbent - means
    sigma = np.sqrt(variances)
    ei = np.where(sigma > 0, 0.0, np.maximum(imp, 0.0))
    pos = sigma > 0
    if np.any(pos):
        z = imp[pos] / sigma[pos]
        pdf = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
        ei[pos] = imp[pos] * ndtr(z) + sigma[pos] * pdf
    return ei


def propose_configuration(
    m: forest.SurrogateModel,
    space: ConfigSpace,
    seed: int,
    incumbent: float,
    incumbent_config: Configuration | None = None,
) -> tuple[Configuration, bool]:
    """Maximize EI over the candidate set; ties resolve to the earliest candidate.

    Returns (configuration, random_fallback). The fallback fires when the
    model's variance is zero at every candidate, in which case a seeded random
    candidate is returned instead.
    """
    candidates = generate_candidates(space, seed, incumbent_config)
    means, variances = forest.predict_batch(m, candidates.enc)
    if np.all(variances == 0.0):
        rng = np.random.default_rng(seed + 1)
        return candidates.materialize(int(rng.integers(len(candidates)))), True
    ei = expected_improvement(means, variances, incumbent)
    return candidates.materialize(int(np.argmax(ei))), False


def run_slice(
    state: SliceState,
    ctx: EvalContext,
    h: RunHistory,
    space: ConfigSpace,
    seed: int,
    quota: int = DEFAULT_QUOTA,
    lhs_floor: int = DEFAULT_LHS_FLOOR,
    forest_params: forest.ForestParams | None = None,
) -> SliceState:
    """Run one slice's subset-tuning loop to its valid-evaluation quota.

    Failed/timeout evaluations count toward the quota with the penalty as
    their objective and write no history cells. Duplicate proposals are
    skipped without consuming quota. Budget exhaustion stops the loop early
    with the partial state preserved.
    """
    if forest_params is None:
        forest_params = forest.ForestParams(seed=seed)
    sub_ids = state.subset.member_ids

    def observe(theta: Configuration, objective: float, status: str) -> None:
        state.proposals.append(Observation(theta, objective, status))
        if objective < state.incumbent_cost:
            state.incumbent_cost = objective
            state.incumbent_config = theta

    try:
        pairs = bootstrap_training_set(h, state.subset, ctx)
        state.bootstrap_pairs = len(pairs)
        xs = [encode(theta, space) for theta, _ in pairs]
        ys = [cost for _, cost in pairs]
        seen = {theta.values for theta, _ in pairs}
        for theta, cost in pairs:
            if cost < state.incumbent_cost:
                state.incumbent_cost = cost
                state.incumbent_config = theta

        if len(pairs) < lhs_floor:
            for theta in sample_lhs(space, lhs_floor, seed=seed):
                if theta.values in seen:
                    continue
                outcome = ctx.evaluate(
                    EvalRequest(configuration=theta, query_ids=sub_ids), event="lhs"
                )
                h.register(theta)
                if outcome.ok:
                    for qid, lat in outcome.per_query_latency.items():
                        h.record(qid, theta.id, lat)
                observe(theta, outcome.total, outcome.status)
                seen.add(theta.values)
                xs.append(encode(theta, space))
                ys.append(outcome.total)
                state.lhs_evaluations += 1

        attempt = 0
        while len(state.proposals) < quota:
            if xs:
                state.surrogate = forest.fit(xs, ys, forest_params)
            theta, fallback = propose_configuration(
                state.surrogate,
                space,
                seed=seed + 1000 + attempt,
                incumbent=state.incumbent_cost,
                incumbent_config=state.incumbent_config,
            )
            attempt += 1
            if fallback:
                state.random_fallbacks += 1
            if theta.values in seen:
                continue
            outcome = ctx.evaluate(
                EvalRequest(configuration=theta, query_ids=sub_ids), event="subset-eval"
            )
            h.register(theta)
            if outcome.ok:
                for qid, lat in outcome.per_query_latency.items():
                    h.record(qid, theta.id, lat)
            observe(theta, outcome.total, outcome.status)
            seen.add(theta.values)
            xs.append(encode(theta, space))
            ys.append(outcome.total)
        if xs:
            state.surrogate = forest.fit(xs, ys, forest_params)
        state.completed = True
    except BudgetExhausted:
        pass
    return state
