"""Readers and writers for the on-disk exchange formats.

Formats:

* corpus JSONL — one object per line with ``_id`` plus either ``image_path``
  (resolved relative to the corpus file) or ``text``.
* queries JSONL — ``_id``, ``text``.
* qrels — BEIR 3-column TSV (``query-id  corpus-id  score``, header optional)
  or TREC 4-column (``qid 0 docid rel``); detected by column count.
* run — TREC 6-column ``qid Q0 docid rank score tag``, rank starting at 1.
  Scores are written with :func:`repr` (shortest exact float form) so that
  parsing a written file recovers every score bit-for-bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .core import DocRef, Qrels, Query, RunList


def load_corpus(path: str | Path) -> list[DocRef]:
    """Parse a corpus JSONL file; relative image paths resolve against it."""
    path = Path(path)
    base = path.parent
    docs: list[DocRef] = []
    for lineno, obj in _iter_jsonl(path):
        doc_id = _require_str(obj, "_id", path, lineno)
        image_path = obj.get("image_path")
        text = obj.get("text")
        if image_path is not None:
            resolved = Path(image_path)
            if not resolved.is_absolute():
                resolved = base / resolved
            docs.append(DocRef(doc_id=doc_id, image_path=resolved))
        elif text is not None:
            docs.append(DocRef(doc_id=doc_id, text=str(text)))
        else:
            raise ValueError(f"{path}:{lineno}: need one of 'image_path' or 'text'")
    return docs


def save_corpus(docs: Iterable[DocRef], path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            if doc.image_path is not None:
                obj = {"_id": doc.doc_id, "image_path": str(doc.image_path)}
            else:
                obj = {"_id": doc.doc_id, "text": doc.text}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_queries(path: str | Path) -> list[Query]:
    path = Path(path)
    queries: list[Query] = []
    for lineno, obj in _iter_jsonl(path):
        queries.append(
            Query(
                query_id=_require_str(obj, "_id", path, lineno),
                text=_require_str(obj, "text", path, lineno),
            )
        )
    return queries


def save_queries(queries: Iterable[Query], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for query in queries:
            fh.write(
                json.dumps({"_id": query.query_id, "text": query.text}, ensure_ascii=False)
                + "\n"
            )


def load_qrels(path: str | Path) -> Qrels:
    """Parse qrels, accepting BEIR 3-column and TREC 4-column layouts."""
    path = Path(path)
    judgments: dict[str, dict[str, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) == 3:
                qid, doc_id, rel_str = cols
            elif len(cols) == 4:
                qid, _, doc_id, rel_str = cols
            else:
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 columns, got {len(cols)}")
            if lineno == 1 and _is_qrels_header(cols):
                continue
            try:
                rel = int(rel_str)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: relevance {rel_str!r} is not an integer") from exc
            judgments.setdefault(qid, {})[doc_id] = rel
    return Qrels(judgments=judgments)


def save_qrels(qrels: Qrels, path: str | Path) -> None:
    """Write qrels as BEIR 3-column TSV with header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query-id\tcorpus-id\tscore\n")
        for qid, docs in qrels.judgments.items():
            _check_id(qid)
            for doc_id, rel in docs.items():
                _check_id(doc_id)
                fh.write(f"{qid}\t{doc_id}\t{rel}\n")


def _is_qrels_header(cols: list[str]) -> bool:
    # Data lines always end with an integer relevance; headers end with a label.
    try:
        int(cols[-1])
        return False
    except ValueError:
        return True


def load_run(path: str | Path) -> list[RunList]:
    """Parse a TREC run file into RunLists, one per query, in file order.

    Rankings are re-sorted on construction, so the ordering invariant holds
    no matter how the file was produced. The tag column is ignored.
    """
    path = Path(path)
    per_query: dict[str, list[tuple[str, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(cols)}")
            qid, _, doc_id, _rank, score_str, _tag = cols
            per_query.setdefault(qid, []).append((doc_id, float(score_str)))
    return [RunList.from_scores(qid, pairs) for qid, pairs in per_query.items()]


def save_run(runs: Iterable[RunList], path: str | Path, tag: str = "serval") -> None:
    """Write RunLists in TREC 6-column format, ranks starting at 1."""
    with open(path, "w", encoding="utf-8") as fh:
        for run in runs:
            _check_id(run.query_id)
            for rank, (doc_id, score) in enumerate(run.ranking, start=1):
                _check_id(doc_id)
                fh.write(f"{run.query_id} Q0 {doc_id} {rank} {repr(float(score))} {tag}\n")


def _check_id(identifier: str) -> None:
    # TREC/qrels lines are whitespace-delimited; ids with whitespace would
    # silently shift every column on re-parse.
    if any(c.isspace() for c in identifier):
        raise ValueError(f"identifier {identifier!r} contains whitespace")


def _iter_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _require_str(obj: dict, key: str, path: Path, lineno: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise ValueError(f"{path}:{lineno}: field {key!r} must be a non-empty string")
    return value
