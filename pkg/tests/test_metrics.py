from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import oracle_ndcg, oracle_recall
from serval.core import MetricSpec, Qrels, RunList
from serval.metrics import (
    MISSING_SKIP,
    evaluate_run,
    macro_average,
    ndcg_at_k,
    recall_at_k,
)


def run_of(*doc_ids):
    return RunList.from_scores("q", [(d, float(len(doc_ids) - i)) for i, d in enumerate(doc_ids)])


class TestNdcg:
    def test_single_relevant_ranked_first(self):
        assert ndcg_at_k(run_of("d1", "d2"), {"d1": 1}, 5) == 1.0

    def test_single_relevant_ranked_second(self):
        value = ndcg_at_k(run_of("d2", "d1"), {"d1": 1}, 5)
        assert value == pytest.approx(1 / math.log2(3))
        assert value == pytest.approx(0.63093, abs=5e-6)

    def test_graded_example(self):
        # DCG = 1/1 + 3/log2(3) = 2.8928; IDCG = 3/1 + 1/log2(3) = 3.6309
        value = ndcg_at_k(run_of("d2", "d1"), {"d1": 3, "d2": 1}, 2)
        dcg = 1.0 + 3.0 / math.log2(3)
        idcg = 3.0 + 1.0 / math.log2(3)
        assert value == pytest.approx(dcg / idcg)
        assert value == pytest.approx(0.79671, abs=5e-6)

    def test_unjudged_docs_score_zero_gain(self):
        assert ndcg_at_k(run_of("x", "y", "d1"), {"d1": 1}, 3) == pytest.approx(
            (1 / math.log2(4)) / 1.0
        )

    def test_requires_positive_judgment(self):
        with pytest.raises(ValueError):
            ndcg_at_k(run_of("d1"), {"d1": 0}, 5)

    def test_permutation_invariance_of_judgment_order(self):
        judgments = [("a", 3), ("b", 1), ("c", 2), ("d", 0)]
        run = run_of("c", "a", "d", "b")
        values = set()
        for _ in range(10):
            random.shuffle(judgments)
            values.add(ndcg_at_k(run, dict(judgments), 4))
        assert len(values) == 1

    def test_swapping_relevant_upward_never_decreases(self):
        judgments = {"rel": 2, "other": 1}
        lower = ndcg_at_k(run_of("x", "y", "rel", "other"), judgments, 4)
        higher = ndcg_at_k(run_of("rel", "y", "x", "other"), judgments, 4)
        assert higher >= lower


class TestRecall:
    def test_one_relevant_in_top1(self):
        assert recall_at_k(run_of("d1", "d2"), {"d1": 1}, 1) == 1.0

    def test_half_found(self):
        assert recall_at_k(run_of("d1", "x", "y", "z", "w"), {"d1": 1, "d9": 1}, 5) == 0.5

    def test_random_rankings_match_set_oracle(self):
        rng = random.Random(5)
        docs = [f"d{i}" for i in range(12)]
        for _ in range(50):
            ranking = rng.sample(docs, k=len(docs))
            relevant = rng.sample(docs, k=4)
            judgments = {d: 1 for d in relevant}
            run = run_of(*ranking)
            for k in (1, 5, 10):
                assert recall_at_k(run, judgments, k) == oracle_recall(ranking, judgments, k)

    def test_k_monotonicity(self):
        rng = random.Random(9)
        docs = [f"d{i}" for i in range(15)]
        for _ in range(20):
            ranking = rng.sample(docs, k=len(docs))
            judgments = {d: rng.randint(0, 3) for d in rng.sample(docs, k=6)}
            if not any(r > 0 for r in judgments.values()):
                judgments[docs[0]] = 1
            run = run_of(*ranking)
            values = [recall_at_k(run, judgments, k) for k in range(1, 16)]
            assert values == sorted(values)


class TestEvaluateRun:
    def test_dataset_mean(self):
        runs = [
            RunList.from_scores("q1", [("d1", 2.0), ("d2", 1.0)]),
            RunList.from_scores("q2", [("d2", 2.0), ("d1", 1.0)]),
        ]
        qrels = Qrels({"q1": {"d1": 1}, "q2": {"d1": 1}})
        result = evaluate_run(runs, qrels, MetricSpec((5,)))
        # q1 ranks its relevant doc first (1.0), q2 second (0.63093)
        assert result.means["ndcg@5"] == pytest.approx((1.0 + 1 / math.log2(3)) / 2)

    def test_missing_query_scores_zero_by_default(self):
        runs = [RunList.from_scores("q1", [("d1", 1.0)])]
        qrels = Qrels({"q1": {"d1": 1}, "q2": {"d1": 1}})
        result = evaluate_run(runs, qrels, MetricSpec((5,)))
        assert result.means["ndcg@5"] == pytest.approx(0.5)
        assert result.missing_queries == 1
        assert result.evaluated_queries == 2

    def test_missing_query_skipped_with_flag(self):
        runs = [RunList.from_scores("q1", [("d1", 1.0)])]
        qrels = Qrels({"q1": {"d1": 1}, "q2": {"d1": 1}})
        result = evaluate_run(runs, qrels, MetricSpec((5,)), missing=MISSING_SKIP)
        assert result.means["ndcg@5"] == pytest.approx(1.0)
        assert result.skipped_queries == 1

    def test_no_positive_judgments_skipped(self):
        runs = [RunList.from_scores("q1", [("d1", 1.0)])]
        qrels = Qrels({"q1": {"d1": 1}, "q3": {"d9": 0}})
        result = evaluate_run(runs, qrels, MetricSpec((5,)))
        assert result.skipped_queries == 1
        assert result.evaluated_queries == 1

    def test_all_queries_unjudgeable_is_error(self):
        runs = [RunList.from_scores("q1", [("d1", 1.0)])]
        qrels = Qrels({"q1": {"d1": 0}})
        with pytest.raises(ValueError):
            evaluate_run(runs, qrels, MetricSpec((5,)))

    def test_values_in_unit_range(self):
        rng = random.Random(13)
        docs = [f"d{i}" for i in range(10)]
        runs = []
        judgments = {}
        for qi in range(8):
            ranking = rng.sample(docs, k=rng.randint(1, 10))
            runs.append(
                RunList.from_scores(f"q{qi}", [(d, float(10 - i)) for i, d in enumerate(ranking)])
            )
            judgments[f"q{qi}"] = {d: rng.randint(0, 3) for d in rng.sample(docs, k=5)}
            judgments[f"q{qi}"][ranking[0]] = max(1, judgments[f"q{qi}"].get(ranking[0], 1))
        result = evaluate_run(runs, Qrels(judgments), MetricSpec((1, 5, 10)))
        for pq in result.per_query:
            for value in pq.values.values():
                assert 0.0 <= value <= 1.0


class TestMacroAverage:
    def test_two_datasets(self):
        assert macro_average({"A": 0.6, "B": 0.8}) == pytest.approx(0.7)

    def test_single_dataset_identity(self):
        assert macro_average({"A": 0.42}) == 0.42

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            macro_average({})


class TestOracleAgreement:
    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_matches_brute_force(self, data):
        docs = [f"d{i}" for i in range(data.draw(st.integers(1, 20)))]
        ranking = data.draw(st.permutations(docs))
        judged = data.draw(
            st.dictionaries(st.sampled_from(docs), st.integers(0, 3), min_size=1)
        )
        if not any(r > 0 for r in judged.values()):
            judged[docs[0]] = 1
        run = run_of(*ranking)
        for k in (1, 5, 10):
            assert ndcg_at_k(run, judged, k) == pytest.approx(
                oracle_ndcg(list(ranking), judged, k), abs=1e-12
            )
            assert recall_at_k(run, judged, k) == pytest.approx(
                oracle_recall(list(ranking), judged, k), abs=1e-12
            )
