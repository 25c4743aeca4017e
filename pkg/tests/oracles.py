"""Brute-force reference implementations used to cross-check the package.

Written from the metric/search definitions, independent of the code under
test: explicit loops, python sums, full sorts.
"""

from __future__ import annotations

import math

import numpy as np


def oracle_ndcg(ranked_doc_ids, judgments, k):
    """nDCG@k evaluated term by term from its definition."""
    gains = []
    for position, doc_id in enumerate(ranked_doc_ids, start=1):
        if position > k:
            break
        gains.append(judgments.get(doc_id, 0) / math.log2(position + 1))
    dcg = 0.0
    for g in gains:
        dcg += g
    ideal = sorted((r for r in judgments.values() if r > 0), reverse=True)
    idcg = 0.0
    for position, rel in enumerate(ideal, start=1):
        if position > k:
            break
        idcg += rel / math.log2(position + 1)
    return dcg / idcg


def oracle_recall(ranked_doc_ids, judgments, k):
    """Recall@k as a plain set intersection."""
    relevant = {d for d, r in judgments.items() if r > 0}
    retrieved = set(ranked_doc_ids[:k])
    return len(retrieved & relevant) / len(relevant)


def oracle_dense_topk(index, query, k):
    """Full sort of all dense scores; shares the implementation's dot-product
    arithmetic (BLAS and naive loops differ in final ulps, so exact score
    comparison requires it) while selection and tie handling stay independent."""
    q = np.asarray(query, dtype=np.float64)
    if index.similarity == "cosine":
        norm = float(np.linalg.norm(q))
        if norm != 0.0:
            q = q / norm
    scores = index.matrix.astype(np.float64) @ q
    ranked = sorted(zip(index.doc_ids, scores.tolist()), key=lambda p: (-p[1], p[0]))
    return ranked[: min(k, len(index.doc_ids))]


def oracle_sparse_topk(index, query, k):
    """Materialize every document over the full term space and compute plain
    python dot products."""
    docs = {d: {} for d in index.doc_ids}
    for term, plist in index.postings.items():
        for ordinal, weight in plist:
            docs[index.doc_ids[ordinal]][term] = weight
    scored = []
    for doc_id, terms in docs.items():
        score = 0.0
        for term in sorted(terms):
            score += query.get(term, 0.0) * terms[term]
        if score != 0.0:
            scored.append((doc_id, score))
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def dyadic_weights(rng, n, lo=1, hi=160, denom=16.0):
    """Small dyadic rationals; sums and products are exact in float64, so
    score comparisons hold bit-for-bit regardless of accumulation order."""
    return (rng.integers(lo, hi, size=n) / denom).tolist()
