"""Domain types shared by every pipeline stage.

Identifiers follow the BEIR convention (string ids), relevance judgments are
graded non-negative integers, and a document counts as *relevant* iff its
judgment is > 0. Rankings are always ordered by (score descending, doc_id
ascending) so ties resolve identically on every platform.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CorpusValidationError


def sha256_text(text: str) -> str:
    """Hex SHA-256 of a UTF-8 encoded string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_bytes(data: bytes) -> str:
    """Hex SHA-256 of raw bytes."""
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class DocRef:
    """A corpus document: either a page image on disk or inline text.

    Exactly one of ``image_path`` / ``text`` must be set.
    """

    doc_id: str
    image_path: Path | None = None
    text: str | None = None

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if (self.image_path is None) == (self.text is None):
            raise ValueError(
                f"doc {self.doc_id!r}: exactly one of image_path or text must be set"
            )

    @property
    def kind(self) -> str:
        return "image" if self.image_path is not None else "text"


@dataclass(frozen=True)
class Query:
    """A natural-language retrieval query (any language)."""

    query_id: str
    text: str

    def __post_init__(self):
        if not self.query_id:
            raise ValueError("query_id must be non-empty")
        if not self.text:
            raise ValueError(f"query {self.query_id!r}: text must be non-empty")


@dataclass(frozen=True)
class Qrels:
    """Graded relevance judgments: query_id -> doc_id -> rel (integer >= 0).

    A document is *relevant* iff rel > 0; graded values are kept for nDCG gain.
    """

    judgments: Mapping[str, Mapping[str, int]]

    def __post_init__(self):
        for qid, docs in self.judgments.items():
            for doc_id, rel in docs.items():
                if rel < 0:
                    raise ValueError(
                        f"qrels ({qid!r}, {doc_id!r}): relevance {rel} < 0"
                    )

    def for_query(self, query_id: str) -> Mapping[str, int]:
        return self.judgments.get(query_id, {})

    def relevant_docs(self, query_id: str) -> set[str]:
        return {d for d, rel in self.for_query(query_id).items() if rel > 0}

    def query_ids(self) -> list[str]:
        return list(self.judgments.keys())


@dataclass(frozen=True)
class Description:
    """VLM output for one document, keyed by (model_id, prompt_hash, content_hash)."""

    doc_id: str
    model_id: str
    prompt_hash: str
    content_hash: str
    text: str
    token_count: int
    gen_latency_s: float

    def __post_init__(self):
        if self.token_count < 0:
            raise ValueError("token_count must be >= 0")
        if self.gen_latency_s < 0:
            raise ValueError("gen_latency_s must be >= 0")

    @property
    def cache_key(self) -> tuple[str, str, str]:
        return (self.model_id, self.prompt_hash, self.content_hash)


def sparse_vector(entries: Mapping[str, float]) -> dict[str, float]:
    """Build a sparse term-weight vector, dropping zero/negative weights."""
    out: dict[str, float] = {}
    for term, weight in entries.items():
        w = float(weight)
        if not math.isfinite(w):
            raise ValueError(f"sparse weight for {term!r} is not finite")
        if w > 0.0:
            out[term] = w
    return out


@dataclass(frozen=True)
class RunList:
    """Ranked retrieval output for one query.

    ``ranking`` is ordered by (score descending, doc_id ascending); use
    :meth:`from_scores` to construct from unordered pairs.
    """

    query_id: str
    ranking: tuple[tuple[str, float], ...]

    def __post_init__(self):
        seen: set[str] = set()
        prev: tuple[float, str] | None = None
        for doc_id, score in self.ranking:
            if not math.isfinite(score):
                raise ValueError(f"run {self.query_id!r}: score for {doc_id!r} not finite")
            if doc_id in seen:
                raise ValueError(f"run {self.query_id!r}: duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            key = (-score, doc_id)
            if prev is not None and key < prev:
                raise ValueError(
                    f"run {self.query_id!r}: ranking not ordered (score desc, doc_id asc)"
                )
            prev = key

    @classmethod
    def from_scores(cls, query_id: str, pairs: Iterable[tuple[str, float]]) -> "RunList":
        ordered = sorted(
            ((doc_id, float(score)) for doc_id, score in pairs),
            key=lambda p: (-p[1], p[0]),
        )
        return cls(query_id, tuple(ordered))

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.ranking]


@dataclass(frozen=True)
class MetricSpec:
    """Cutoffs at which nDCG@k and Recall@k are computed."""

    cutoffs: tuple[int, ...] = (1, 5, 10)

    def __post_init__(self):
        if not self.cutoffs:
            raise ValueError("cutoffs must be non-empty")
        if any(k <= 0 for k in self.cutoffs):
            raise ValueError("cutoffs must all be positive")
        ordered = tuple(sorted(set(self.cutoffs)))
        object.__setattr__(self, "cutoffs", ordered)

    @property
    def max_cutoff(self) -> int:
        return self.cutoffs[-1]

    def metric_names(self) -> list[str]:
        return [f"ndcg@{k}" for k in self.cutoffs] + [f"recall@{k}" for k in self.cutoffs]


@dataclass(frozen=True)
class MetricReport:
    """Per-dataset metric values plus their unweighted macro average."""

    per_dataset: Mapping[str, Mapping[str, float]]
    macro_avg: Mapping[str, float]

    @classmethod
    def from_per_dataset(cls, per_dataset: Mapping[str, Mapping[str, float]]) -> "MetricReport":
        names: set[str] = set()
        for values in per_dataset.values():
            names.update(values)
        macro: dict[str, float] = {}
        for name in sorted(names):
            cells = [per_dataset[ds][name] for ds in sorted(per_dataset) if name in per_dataset[ds]]
            macro[name] = sum(cells) / len(cells)
        return cls(per_dataset=per_dataset, macro_avg=macro)


@dataclass
class ValidationReport:
    """Outcome of corpus/queries/qrels validation.

    ``errors`` are fatal (duplicate identifiers); ``warnings`` are advisory
    (stray qrels references, unreadable image paths).
    """

    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self) -> None:
        if self.errors:
            raise CorpusValidationError("; ".join(self.errors))


def validate_corpus(docs: list[DocRef], queries: list[Query], qrels: Qrels) -> ValidationReport:
    """Check corpus/queries/qrels consistency.

    Duplicate doc or query ids are fatal. Qrels entries that judge unknown
    queries or documents are warnings only: benchmark qrels commonly outlive
    corpus subsets, so a sampled corpus slice must stay usable. Unreadable
    image paths are reported as warnings and rejected later, at the point the
    image is actually ingested.
    """
    report = ValidationReport()

    doc_ids: set[str] = set()
    for doc in docs:
        if doc.doc_id in doc_ids:
            report.errors.append(f"duplicate doc_id {doc.doc_id!r}")
        doc_ids.add(doc.doc_id)
        if doc.image_path is not None and not _readable(doc.image_path):
            report.warnings.append(
                f"doc {doc.doc_id!r}: image path {str(doc.image_path)!r} is not readable"
            )

    query_ids: set[str] = set()
    for query in queries:
        if query.query_id in query_ids:
            report.errors.append(f"duplicate query_id {query.query_id!r}")
        query_ids.add(query.query_id)

    for qid, docs_for_q in qrels.judgments.items():
        if qid not in query_ids:
            report.warnings.append(f"qrels judge unknown query {qid!r}")
        for doc_id in docs_for_q:
            if doc_id not in doc_ids:
                report.warnings.append(f"qrels ({qid!r}, {doc_id!r}): unknown doc")

    return report


def _readable(path: Path) -> bool:
    try:
        with open(path, "rb") as fh:
            fh.read(1)
        return True
    except OSError:
        return False
