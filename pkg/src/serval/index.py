"""Exact dense index and sparse inverted index with persistence.

Search is exhaustive by design: collections at the intended scale are small
and exact scores keep metric numbers deterministic. Scores accumulate in
double precision even though dense rows are stored as float32, and every
ranking is ordered (score descending, doc_id ascending).

On-disk layouts (little-endian):

* dense —  magic ``SRVD``, version u32, dim u32, count u64, similarity u8
  (0 = cosine, 1 = dot), count x dim float32 row-major, JSON doc_id list,
  CRC32 (u32) of all preceding bytes.
* sparse — magic ``SRVS``, version u32, JSON body
  ``{"doc_ids": [...], "postings": {term: [[ordinal, weight], ...]}}``,
  CRC32 of all preceding bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import IndexFormatError

SIM_COSINE = "cosine"
SIM_DOT = "dot"

FORMAT_VERSION = 1

_DENSE_MAGIC = b"SRVD"
_SPARSE_MAGIC = b"SRVS"
_SIM_CODES = {SIM_COSINE: 0, SIM_DOT: 1}
_SIM_NAMES = {code: name for name, code in _SIM_CODES.items()}


@dataclass(frozen=True)
class DenseIndex:
    """Immutable row-per-document matrix (float32) plus doc_id ordering."""

    doc_ids: tuple[str, ...]
    matrix: np.ndarray
    similarity: str

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.doc_ids)


@dataclass(frozen=True)
class SparseIndex:
    """Term -> sorted (doc ordinal, weight) postings plus doc_id ordering."""

    doc_ids: tuple[str, ...]
    postings: Mapping[str, tuple[tuple[int, float], ...]]

    def __len__(self) -> int:
        return len(self.doc_ids)


def build_dense(
    doc_ids: Sequence[str],
    vectors: Sequence[Sequence[float]],
    similarity: str = SIM_COSINE,
) -> DenseIndex:
    """Build a dense index; cosine mode renormalizes rows before storage."""
    if similarity not in _SIM_CODES:
        raise ValueError(f"similarity must be one of {sorted(_SIM_CODES)}")
    if len(doc_ids) != len(vectors):
        raise ValueError(f"{len(doc_ids)} doc_ids for {len(vectors)} vectors")
    if not doc_ids:
        raise ValueError("cannot build an empty index")
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("duplicate doc_ids")

    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"inconsistent vector dimensions: {sorted(dims)}")

    matrix = np.asarray(vectors, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("vectors must be finite")
    if similarity == SIM_COSINE:
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0):
            zero = [doc_ids[i] for i in np.nonzero(norms == 0.0)[0]]
            raise ValueError(f"cosine index cannot hold zero vectors: {zero}")
        matrix = matrix / norms[:, None]

    return DenseIndex(
        doc_ids=tuple(doc_ids),
        matrix=np.ascontiguousarray(matrix, dtype=np.float32),
        similarity=similarity,
    )


def search_dense(index: DenseIndex, query: Sequence[float], k: int) -> list[tuple[str, float]]:
    """Exact top-min(k, N) by dot product, ties broken by ascending doc_id.

    In cosine mode the query is renormalized first, so scores are true
    cosines against the unit-norm rows. Every document is scored; zero
    scores are kept.
    """
    if k <= 0:
        raise ValueError("k must be > 0")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise ValueError(f"query dim {q.shape} does not match index dim {index.dim}")
    if index.similarity == SIM_COSINE:
        q = _normalize64(q)

    scores = index.matrix.astype(np.float64) @ q
    order = np.lexsort((np.asarray(index.doc_ids), -scores))[: min(k, len(index))]
    return [(index.doc_ids[i], float(scores[i])) for i in order]


def build_sparse(
    doc_ids: Sequence[str],
    sparse_vectors: Sequence[Mapping[str, float]],
) -> SparseIndex:
    """Build an inverted index; every doc occupies an ordinal, even if empty."""
    if len(doc_ids) != len(sparse_vectors):
        raise ValueError(f"{len(doc_ids)} doc_ids for {len(sparse_vectors)} vectors")
    if not doc_ids:
        raise ValueError("cannot build an empty index")
    if len(set(doc_ids)) != len(doc_ids):
        raise ValueError("duplicate doc_ids")

    postings: dict[str, list[tuple[int, float]]] = {}
    for ordinal, vec in enumerate(sparse_vectors):
        for term, weight in vec.items():
            w = float(weight)
            if not w > 0.0:
                raise ValueError(
                    f"doc {doc_ids[ordinal]!r} term {term!r}: weight {w} must be > 0"
                )
            postings.setdefault(term, []).append((ordinal, w))

    return SparseIndex(
        doc_ids=tuple(doc_ids),
        postings={term: tuple(plist) for term, plist in postings.items()},
    )


def search_sparse(
    index: SparseIndex, query: Mapping[str, float], k: int
) -> list[tuple[str, float]]:
    """Top-k by term-weight dot product; unreached (zero-score) docs are excluded."""
    if k <= 0:
        raise ValueError("k must be > 0")
    accum: dict[int, float] = {}
    for term, q_weight in query.items():
        for ordinal, d_weight in index.postings.get(term, ()):
            accum[ordinal] = accum.get(ordinal, 0.0) + float(q_weight) * d_weight
    scored = [
        (index.doc_ids[ordinal], score) for ordinal, score in accum.items() if score != 0.0
    ]
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def save_index(index: DenseIndex | SparseIndex, path: str | Path) -> None:
    path = Path(path)
    if isinstance(index, DenseIndex):
        blob = _dense_bytes(index)
    elif isinstance(index, SparseIndex):
        blob = _sparse_bytes(index)
    else:
        raise TypeError(f"cannot persist {type(index).__name__}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob + struct.pack("<I", zlib.crc32(blob)))


def load_index(path: str | Path) -> DenseIndex | SparseIndex:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12:
        raise IndexFormatError(f"{path}: truncated file ({len(blob)} bytes)")
    body, crc_stored = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) != crc_stored:
        raise IndexFormatError(f"{path}: checksum mismatch, file is corrupt")
    magic = body[:4]
    if magic == _DENSE_MAGIC:
        return _dense_from_bytes(body, path)
    if magic == _SPARSE_MAGIC:
        return _sparse_from_bytes(body, path)
    raise IndexFormatError(f"{path}: unknown magic {magic!r}")


def _normalize64(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return v
    return v / norm


_DENSE_HEADER = struct.Struct("<4sIIQB")


def _dense_bytes(index: DenseIndex) -> bytes:
    header = _DENSE_HEADER.pack(
        _DENSE_MAGIC,
        FORMAT_VERSION,
        index.dim,
        len(index.doc_ids),
        _SIM_CODES[index.similarity],
    )
    matrix = np.ascontiguousarray(index.matrix, dtype="<f4").tobytes()
    doc_ids = json.dumps(list(index.doc_ids), ensure_ascii=False).encode("utf-8")
    return header + matrix + doc_ids


def _dense_from_bytes(body: bytes, path: Path) -> DenseIndex:
    if len(body) < _DENSE_HEADER.size:
        raise IndexFormatError(f"{path}: truncated header")
    _, version, dim, count, sim_code = _DENSE_HEADER.unpack_from(body)
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if sim_code not in _SIM_NAMES:
        raise IndexFormatError(f"{path}: unknown similarity code {sim_code}")
    matrix_end = _DENSE_HEADER.size + count * dim * 4
    if len(body) < matrix_end:
        raise IndexFormatError(f"{path}: truncated matrix")
    matrix = np.frombuffer(body, dtype="<f4", count=count * dim, offset=_DENSE_HEADER.size)
    matrix = matrix.reshape(count, dim).copy()
    try:
        doc_ids = json.loads(body[matrix_end:].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IndexFormatError(f"{path}: unreadable doc_id list: {exc}") from exc
    if not isinstance(doc_ids, list) or len(doc_ids) != count:
        raise IndexFormatError(f"{path}: doc_id list does not match row count")
    return DenseIndex(
        doc_ids=tuple(str(d) for d in doc_ids),
        matrix=matrix,
        similarity=_SIM_NAMES[sim_code],
    )


def _sparse_bytes(index: SparseIndex) -> bytes:
    header = _SPARSE_MAGIC + struct.pack("<I", FORMAT_VERSION)
    body = json.dumps(
        {
            "doc_ids": list(index.doc_ids),
            "postings": {
                term: [[ordinal, weight] for ordinal, weight in plist]
                for term, plist in index.postings.items()
            },
        },
        ensure_ascii=False,
    ).encode("utf-8")
    return header + body


def _sparse_from_bytes(body: bytes, path: Path) -> SparseIndex:
    if len(body) < 8:
        raise IndexFormatError(f"{path}: truncated header")
    version = struct.unpack_from("<I", body, 4)[0]
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        payload = json.loads(body[8:].decode("utf-8"))
        doc_ids = payload["doc_ids"]
        postings = payload["postings"]
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError) as exc:
        raise IndexFormatError(f"{path}: unreadable sparse body: {exc}") from exc
    return SparseIndex(
        doc_ids=tuple(str(d) for d in doc_ids),
        postings={
            term: tuple((int(o), float(w)) for o, w in plist) for term, plist in postings.items()
        },
    )
