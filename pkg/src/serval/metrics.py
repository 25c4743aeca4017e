"""nDCG@k and Recall@k with per-dataset and macro aggregation.

Conventions (trec_eval compatible, matching the BEIR/MTEB stack):

* linear gain — DCG@k = sum_{i=1..min(k, |ranking|)} rel(doc_i) / log2(i + 1),
  with unjudged documents contributing rel 0;
* IDCG@k from the judgments sorted by relevance descending;
* a document is relevant iff rel > 0, and graded values feed the gain;
* queries with no positive judgment are skipped, not scored zero;
* queries that are judged but missing from a run score zero by default
  (``missing="skip"`` excludes them instead — harness behavior differs in
  the wild, so both are available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import MetricSpec, Qrels, RunList

MISSING_ZERO = "zero"
MISSING_SKIP = "skip"


@dataclass(frozen=True)
class PerQueryMetrics:
    """Metric values for one query, keyed like ``ndcg@5`` / ``recall@10``."""

    query_id: str
    values: Mapping[str, float]

    def __post_init__(self):
        for name, value in self.values.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} for {self.query_id!r}: {value} outside [0,1]")


def ndcg_at_k(run: RunList, judgments: Mapping[str, int], k: int) -> float:
    """Normalized discounted cumulative gain at cutoff ``k``.

    Requires at least one positive judgment; callers skip such queries.
    """
    if k <= 0:
        raise ValueError("k must be > 0")
    ideal = sorted((rel for rel in judgments.values() if rel > 0), reverse=True)
    if not ideal:
        raise ValueError("ndcg_at_k requires at least one positive judgment")

    dcg = 0.0
    for i, (doc_id, _score) in enumerate(run.ranking[:k], start=1):
        rel = judgments.get(doc_id, 0)
        if rel > 0:
            dcg += rel / math.log2(i + 1)
    idcg = 0.0
    for i, rel in enumerate(ideal[:k], start=1):
        idcg += rel / math.log2(i + 1)
    return dcg / idcg


def recall_at_k(run: RunList, judgments: Mapping[str, int], k: int) -> float:
    """Fraction of all relevant documents present in the top ``k``."""
    if k <= 0:
        raise ValueError("k must be > 0")
    relevant = {doc_id for doc_id, rel in judgments.items() if rel > 0}
    if not relevant:
        raise ValueError("recall_at_k requires at least one positive judgment")
    top = {doc_id for doc_id, _ in run.ranking[:k]}
    return len(top & relevant) / len(relevant)


@dataclass
class DatasetEval:
    """Evaluation of one run against one dataset's qrels."""

    per_query: list[PerQueryMetrics]
    means: dict[str, float]
    evaluated_queries: int
    skipped_queries: int
    missing_queries: int = 0


def evaluate_run(
    runs: Sequence[RunList],
    qrels: Qrels,
    spec: MetricSpec,
    *,
    missing: str = MISSING_ZERO,
) -> DatasetEval:
    """Score a run: per-query metrics plus their arithmetic mean.

    Queries with no positive judgment are skipped and counted. Judged
    queries absent from the run score zero (default) or are skipped too,
    depending on ``missing``.
    """
    if missing not in (MISSING_ZERO, MISSING_SKIP):
        raise ValueError(f"missing must be '{MISSING_ZERO}' or '{MISSING_SKIP}'")

    runs_by_id = {run.query_id: run for run in runs}
    names = spec.metric_names()
    per_query: list[PerQueryMetrics] = []
    skipped = 0
    missing_count = 0

    for qid in sorted(qrels.judgments):
        judgments = qrels.for_query(qid)
        if not any(rel > 0 for rel in judgments.values()):
            skipped += 1
            continue
        run = runs_by_id.get(qid)
        if run is None:
            missing_count += 1
            if missing == MISSING_SKIP:
                skipped += 1
                continue
            values = {name: 0.0 for name in names}
        else:
            values = {}
            for k in spec.cutoffs:
                values[f"ndcg@{k}"] = ndcg_at_k(run, judgments, k)
                values[f"recall@{k}"] = recall_at_k(run, judgments, k)
            values = {name: values[name] for name in names}
        per_query.append(PerQueryMetrics(query_id=qid, values=values))

    if not per_query:
        raise ValueError("no evaluable queries: every query lacks positive judgments")

    means = {
        name: sum(pq.values[name] for pq in per_query) / len(per_query) for name in names
    }
    return DatasetEval(
        per_query=per_query,
        means=means,
        evaluated_queries=len(per_query),
        skipped_queries=skipped,
        missing_queries=missing_count,
    )


def macro_average(per_dataset: Mapping[str, float]) -> float:
    """Unweighted arithmetic mean across datasets."""
    if not per_dataset:
        raise ValueError("macro_average requires at least one dataset")
    return sum(per_dataset[name] for name in sorted(per_dataset)) / len(per_dataset)
