import numpy as np
import pytest

from slicetune.executor import (
    STATUS_FAILED,
    STATUS_OK,
    EvalOutcome,
    EvalRequest,
    SimModel,
    SimulatedExecutor,
)
from slicetune.forest import ForestParams, fit
from slicetune.history import RunHistory
from slicetune.runtime import Clock, EvalContext
from slicetune.space import encode, sample_uniform
from slicetune.tuning import Observation
from slicetune.verify import (
    MODE_EXPLOIT,
    MODE_EXPLORE,
    VerifierState,
    choose_mode,
    exploit_score,
    explore_potential,
    prune_candidates,
    score_and_select,
    verify_on_full_workload,
)
from slicetune.workload import CompressedWorkload, Query, Workload

from synth import make_space

from test_tuning import CountingExecutor


def _surrogate(space, ys=None, n=12, seed=0):
    rng = np.random.default_rng(seed)
    thetas = sample_uniform(space, n, rng)
    if ys is None:
        ys = rng.uniform(1.0, 9.0, size=n)
    m = fit([encode(t, space) for t in thetas], ys, ForestParams(n_trees=10, seed=seed))
    return m, thetas


class TestScores:
    def test_exploit_score_hand_example(self):
        # Size ratio 0.5, predicted full cost 10, measured subset cost 5:
        # -(0.5 * 10 + 5) = -10.
        space = make_space(4, seed=0)
        m, thetas = _surrogate(space, ys=[10.0] * 12)
        got = exploit_score(thetas[0], subset_cost=5.0, sub_size=5, full_size=10, m=m, space=space)
        assert got == pytest.approx(-10.0, abs=1e-12)

    def test_explore_potential_hand_example(self):
        # alpha 0.25, similarity 0.8, variance 1:
        # 0.25 * (1 - 0.8) + 0.75 * 1 = 0.80.
        from slicetune.space import ConfigSpace, KnobSpec, set_similarity

        space = ConfigSpace(
            [
                KnobSpec("m", "numeric-continuous", lower=0.0, upper=100.0, default=0.0),
                KnobSpec("c", "categorical", choices=("x", "y"), default="x"),
            ]
        )

        class StubModel:
            def per_tree_predictions(self, x):
                return np.array([[4.0], [6.0]])  # variance 1

        labeled = [space.configuration((0.0, "x"))]
        probe = space.configuration((50.0, "x"))  # D = 0.25 -> phi = 0.8
        assert set_similarity(probe, labeled, space) == pytest.approx(0.8)
        got = explore_potential(probe, labeled, StubModel(), alpha=0.25, space=space)
        assert got == pytest.approx(0.25 * 0.2 + 0.75 * 1.0, abs=1e-12)

    def test_scores_require_surrogate(self):
        space = make_space(4, seed=0)
        theta = space.default_configuration()
        with pytest.raises(ValueError):
            exploit_score(theta, 1.0, 1, 2, None, space)
        with pytest.raises(ValueError):
            explore_potential(theta, [theta], None, 0.25, space)


class TestChooseMode:
    def test_frequency_matches_one_minus_eta(self):
        rng = np.random.default_rng(123)
        n = 10_000
        draws = [choose_mode(0.75, rng) for _ in range(n)]
        explore_frac = sum(d == MODE_EXPLORE for d in draws) / n
        assert 0.73 <= explore_frac <= 0.77

    def test_eta_zero_always_exploits(self):
        rng = np.random.default_rng(0)
        assert all(choose_mode(0.0, rng) == MODE_EXPLOIT for _ in range(100))

    def test_invalid_eta(self):
        with pytest.raises(ValueError):
            choose_mode(1.0, np.random.default_rng(0))


def _obs(space, objective, status=STATUS_OK):
    return Observation(space.default_configuration(), objective, status)


class TestPrune:
    space = make_space(4, seed=0)

    def test_exploit_keeps_at_most_default_cost(self):
        props = [_obs(self.space, v) for v in (10.0, 9.99, 10.01)]
        kept = prune_candidates(props, MODE_EXPLOIT, default_subset_cost=10.0)
        assert [p.objective for p in kept] == [10.0, 9.99]

    def test_explore_stretches_threshold(self):
        props = [_obs(self.space, v) for v in (11.9, 12.0, 12.1)]
        kept = prune_candidates(props, MODE_EXPLORE, default_subset_cost=10.0)
        assert [p.objective for p in kept] == [11.9, 12.0]

    def test_penalized_always_pruned(self):
        props = [_obs(self.space, 1.0, STATUS_FAILED), _obs(self.space, 1.0, "timeout")]
        assert prune_candidates(props, MODE_EXPLORE, 10.0) == []


class TestScoreAndSelect:
    def _survivors(self, space, objectives):
        rng = np.random.default_rng(5)
        thetas = sample_uniform(space, len(objectives), rng)
        return [Observation(t, o, STATUS_OK) for t, o in zip(thetas, objectives)]

    def test_first_slice_ranks_by_subset_cost(self):
        space = make_space(4, seed=0)
        state = VerifierState(default_full_perf=10.0, forest_params=ForestParams(n_trees=5))
        survivors = self._survivors(space, [5.0, 1.0, 3.0, 2.0, 4.0, 6.0, 0.5])
        picked = score_and_select(survivors, MODE_EXPLOIT, state, 3, 6, space, quota=20)
        assert len(picked) == 5  # ceil(0.25 * 20)
        assert [p.objective for p in picked] == [0.5, 1.0, 2.0, 3.0, 4.0]

    def test_fewer_survivors_than_quota_selects_all(self):
        space = make_space(4, seed=0)
        state = VerifierState(default_full_perf=10.0)
        survivors = self._survivors(space, [2.0, 1.0])
        picked = score_and_select(survivors, MODE_EXPLOIT, state, 3, 6, space, quota=20)
        assert len(picked) == 2

    def test_later_slices_rank_by_mode_score(self):
        space = make_space(4, seed=0)
        m, thetas = _surrogate(space, seed=2)
        state = VerifierState(
            default_full_perf=10.0,
            forest_params=ForestParams(n_trees=5),
            global_surrogate=m,
            labeled=[(thetas[0], 5.0)],
        )
        survivors = self._survivors(space, [3.0, 2.0, 4.0, 1.0, 5.0, 2.5])
        for mode in (MODE_EXPLOIT, MODE_EXPLORE):
            picked = score_and_select(survivors, mode, state, 3, 6, space, quota=20)
            assert len(picked) == 5
            if mode == MODE_EXPLOIT:
                def score(p):
                    return exploit_score(p.configuration, p.objective, 3, 6, m, space)
            else:
                def score(p):
                    return explore_potential(
                        p.configuration, state.labeled_configs, m, state.alpha, space
                    )
            ranked = sorted(survivors, key=lambda p: (-score(p), p.configuration.id))
            assert [p.configuration.id for p in picked] == [
                p.configuration.id for p in ranked[:5]
            ]


def verification_fixture(n_queries=10, covered=7):
    space = make_space(4, seed=3)
    w = Workload([Query(f"q{i}", f"select {i}", 1.0 + 0.1 * i) for i in range(n_queries)])
    model = SimModel(w, space, seed=21)
    model._failure_box = []
    counting = CountingExecutor(SimulatedExecutor(model))
    ctx = EvalContext(executor=counting, clock=Clock(1e9))
    h = RunHistory()
    sub_ids = tuple(f"q{i}" for i in range(covered))
    sub = CompressedWorkload.from_members(w, sub_ids)
    theta = sample_uniform(space, 1, np.random.default_rng(9))[0]
    h.register(theta)
    out = counting.evaluate(EvalRequest(configuration=theta, query_ids=sub_ids))
    for qid, lat in out.per_query_latency.items():
        h.record(qid, theta.id, lat)
    counting.requests = 0
    counting.query_executions = 0
    state = VerifierState(default_full_perf=w.total_cost(), forest_params=ForestParams(n_trees=5))
    return space, w, sub, h, ctx, counting, state, theta


class TestVerification:
    def test_executes_only_uncovered_remainder(self):
        space, w, sub, h, ctx, counting, state, theta = verification_fixture()
        got = verify_on_full_workload(theta, sub, w, h, ctx, state, space)
        assert counting.query_executions == 3  # |W| - |W'| = 10 - 7
        # Recomputation oracle: the label equals the sum of history cells.
        assert got == pytest.approx(
            sum(h.get(qid, theta.id) for qid in w.ids), abs=1e-9
        )
        assert state.labeled == [(theta, got)]
        assert state.global_surrogate is not None
        assert state.best() == (theta, got)

    def test_fully_covered_config_reuses_everything(self):
        space, w, sub, h, ctx, counting, state, theta = verification_fixture(
            n_queries=7, covered=7
        )
        got = verify_on_full_workload(theta, sub, w, h, ctx, state, space)
        assert counting.query_executions == 0
        assert got == pytest.approx(sum(h.get(qid, theta.id) for qid in w.ids))

    def test_failed_remainder_gets_full_penalty_and_no_cells(self):
        space, w, sub, h, ctx, counting, state, theta = verification_fixture()

        class FailingRemainder:
            def evaluate(self, req):
                return EvalOutcome(status=STATUS_FAILED, penalized_total=2.0 * 1.0)

        ctx = EvalContext(executor=FailingRemainder(), clock=Clock(1e9))
        cells_before = len(h)
        got = verify_on_full_workload(theta, sub, w, h, ctx, state, space)
        assert got == pytest.approx(2.0 * w.total_cost())
        assert len(h) == cells_before
        # The penalized label still enters the labeled set.
        assert state.labeled[-1][1] == pytest.approx(2.0 * w.total_cost())


class TestVerifierState:
    def test_alpha_validation(self):
        with pytest.raises(ValueError):
            VerifierState(default_full_perf=1.0, alpha=0.0)
        with pytest.raises(ValueError):
            VerifierState(default_full_perf=0.0)

    def test_best_empty(self):
        assert VerifierState(default_full_perf=1.0).best() is None
