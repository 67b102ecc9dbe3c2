import itertools

import numpy as np
import pytest

from slicetune.history import NEUTRAL_REPRESENTATIVITY, RunHistory
from slicetune.space import ConfigSpace, Configuration, KnobSpec


def _config(cid):
    return Configuration(id=cid, values=(float(cid),))


def history_with(cells):
    """Build a history from {(qid, cid): latency} with configs registered in cid order."""
    h = RunHistory()
    for cid in sorted({cid for _, cid in cells}):
        h.register(_config(cid))
    for (qid, cid), lat in cells.items():
        h.record(qid, cid, lat)
    return h


def sparse_coverage_fixture():
    """Four queries, three configs; q2 lacks one config and q3 lacks two."""
    return history_with(
        {
            ("q1", 1): 1.0, ("q1", 2): 2.0, ("q1", 3): 3.0,
            ("q2", 1): 1.5, ("q2", 3): 2.5,
            ("q3", 1): 4.0,
            ("q4", 1): 0.5, ("q4", 2): 0.7, ("q4", 3): 0.9,
        }
    )


class TestRecording:
    def test_idempotent_on_same_value(self):
        h = history_with({("q", 1): 2.0})
        h.record("q", 1, 2.0)
        assert len(h) == 1

    def test_conflicting_value_rejected(self):
        h = history_with({("q", 1): 2.0})
        with pytest.raises(ValueError, match="conflicting"):
            h.record("q", 1, 2.5)

    def test_unregistered_config_rejected(self):
        h = RunHistory()
        with pytest.raises(KeyError):
            h.record("q", 7, 1.0)

    def test_nonpositive_latency_rejected(self):
        h = RunHistory()
        h.register(_config(1))
        with pytest.raises(ValueError, match="positive"):
            h.record("q", 1, 0.0)

    def test_register_is_idempotent(self):
        h = RunHistory()
        theta = _config(1)
        h.register(theta)
        h.register(theta)
        assert h.config_ids == (1,)


class TestCoverage:
    def test_lacked_history_counts(self):
        h = sparse_coverage_fixture()
        assert h.lacked_history("q1") == 0
        assert h.lacked_history("q2") == 1
        assert h.lacked_history("q3") == 2
        assert h.lacked_history("q4") == 0

    def test_fully_covered_configs(self):
        h = sparse_coverage_fixture()
        assert h.fully_covered_configs(["q1", "q4"]) == [1, 2, 3]
        assert h.fully_covered_configs(["q2", "q3"]) == [1]

    def test_missing_ids(self):
        h = sparse_coverage_fixture()
        assert h.missing_ids(["q1", "q2", "q3", "q4"], 2) == ["q2", "q3"]
        assert h.missing_ids(["q1", "q4"], 3) == []

    def test_aggregate_cost(self):
        h = sparse_coverage_fixture()
        assert h.aggregate_cost(["q1", "q4"], 2) == pytest.approx(2.7)
        assert h.aggregate_cost(["q1", "q3"], 2) is None


class TestRepresentativity:
    def test_worked_pair_example(self):
        # Subset totals (3, 2, 6), full totals (4, 5, 7) over three configs:
        # the (c1, c2) pair inverts, the other two agree, so R = 2/3.
        h = history_with(
            {
                ("s1", 1): 3.0, ("s1", 2): 2.0, ("s1", 3): 6.0,
                ("f1", 1): 1.0, ("f1", 2): 3.0, ("f1", 3): 1.0,
            }
        )
        assert h.representativity(["s1"], ["s1", "f1"]) == pytest.approx(2.0 / 3.0)

    def test_fewer_than_two_covered_is_neutral(self):
        h = history_with({("s1", 1): 3.0, ("f1", 1): 1.0})
        assert h.representativity(["s1"], ["s1", "f1"]) == NEUTRAL_REPRESENTATIVITY
        assert RunHistory().representativity(["s1"], ["s1", "f1"]) == 0.5

    def test_partially_covered_configs_are_excluded(self):
        h = history_with(
            {
                ("s1", 1): 3.0, ("s1", 2): 2.0, ("s1", 3): 6.0,
                ("f1", 1): 1.0, ("f1", 3): 1.0,  # config 2 lacks the full set
            }
        )
        # Only configs 1 and 3 count; 3 < 6 and 4 < 7 agree.
        assert h.representativity(["s1"], ["s1", "f1"]) == 1.0

    def test_ties_count_as_concordant(self):
        h = history_with(
            {
                ("s1", 1): 2.0, ("s1", 2): 2.0,
                ("f1", 1): 1.0, ("f1", 2): 5.0,
            }
        )
        assert h.representativity(["s1"], ["s1", "f1"]) == 1.0

    def test_perfect_inversion_gives_zero(self):
        h = history_with(
            {
                ("s1", 1): 1.0, ("s1", 2): 2.0, ("s1", 3): 3.0,
                ("f1", 1): 9.0, ("f1", 2): 6.0, ("f1", 3): 2.0,
            }
        )
        assert h.representativity(["s1"], ["s1", "f1"]) == 0.0

    def test_registration_order_does_not_matter(self):
        cells = {
            ("s1", 1): 3.0, ("s1", 2): 2.0, ("s1", 3): 6.0,
            ("f1", 1): 1.0, ("f1", 2): 3.0, ("f1", 3): 1.0,
        }
        h = RunHistory()
        for cid in (3, 1, 2):
            h.register(_config(cid))
        for (qid, cid), lat in cells.items():
            h.record(qid, cid, lat)
        assert h.representativity(["s1"], ["s1", "f1"]) == pytest.approx(2.0 / 3.0)

    def test_matches_brute_force_oracle_on_random_histories(self):
        rng = np.random.default_rng(42)
        queries = [f"q{i}" for i in range(6)]
        for trial in range(40):
            n_configs = int(rng.integers(2, 9))
            h = RunHistory()
            for cid in range(n_configs):
                h.register(_config(cid))
            for qid in queries:
                for cid in range(n_configs):
                    if rng.random() < 0.8:
                        h.record(qid, cid, float(rng.uniform(0.1, 10.0)))
            k = int(rng.integers(1, len(queries)))
            sub = list(rng.choice(queries, size=k, replace=False))
            assert h.representativity(sub, queries) == pytest.approx(
                _oracle_representativity(h, sub, queries, n_configs)
            )


def _oracle_representativity(h, sub, full, n_configs):
    covered = []
    for cid in range(n_configs):
        s = [h.get(q, cid) for q in sub]
        f = [h.get(q, cid) for q in full]
        if None in s or None in f:
            continue
        covered.append((sum(s), sum(f)))
    if len(covered) < 2:
        return 0.5
    agree = [
        (fa <= fb) == (sa <= sb)
        for (sa, fa), (sb, fb) in itertools.combinations(covered, 2)
    ]
    return sum(agree) / len(agree)


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        space = ConfigSpace(
            [KnobSpec("k", "numeric-continuous", lower=0.0, upper=10.0, default=5.0)]
        )
        h = RunHistory()
        for v in (1.0, 4.0, 9.0):
            h.register(space.configuration((v,)))
        for qid in ("a", "b"):
            for cid in h.config_ids:
                h.record(qid, cid, 0.5 + cid)
        entries = str(tmp_path / "history.jsonl")
        registry = str(tmp_path / "configs.jsonl")
        h.save(entries, registry, space)
        loaded = RunHistory.load(entries, registry, space)
        assert loaded.config_ids == h.config_ids
        assert len(loaded) == len(h)
        for cid in h.config_ids:
            assert loaded.configuration(cid).values == h.configuration(cid).values
            for qid in ("a", "b"):
                assert loaded.get(qid, cid) == h.get(qid, cid)
