"""Query/description embedding through external encoder endpoints.

Dense vectors come from an OpenAI-style ``/v1/embeddings`` endpoint and are
renormalized client-side (cosine == dot thereafter, whatever the server did).
Sparse term-weight vectors come from a generic ``/encode_sparse`` endpoint or
from a precomputed JSONL file, since public sparse-encoder servers vary.
Instruction prefixes are prepended verbatim, with the query and document
roles kept strictly apart. Results are cached by
(model_id, role, instruction hash, text hash).
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import httpclient
from .core import sha256_text, sparse_vector
from .errors import ProtocolError

logger = logging.getLogger(__name__)

ROLE_QUERY = "query"
ROLE_DOCUMENT = "document"


@dataclass(frozen=True)
class EncoderConfig:
    """Connection and behavior settings for one encoder endpoint."""

    base_url: str
    model_id: str
    kind: str = "dense"
    query_instruction: str | None = None
    doc_instruction: str | None = None
    batch_size: int = 32
    normalize: bool = True
    api_key: str | None = None
    request_timeout_s: float = 120.0
    max_retries: int = 3
    max_concurrency: int = 4
    sparse_doc_vectors: Path | None = None
    sparse_query_vectors: Path | None = None

    def __post_init__(self):
        if self.kind not in ("dense", "sparse"):
            raise ValueError(f"kind must be 'dense' or 'sparse', got {self.kind!r}")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")
        if self.request_timeout_s <= 0:
            raise ValueError("request_timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency <= 0:
            raise ValueError("max_concurrency must be > 0")

    def instruction_for(self, role: str) -> str:
        if role == ROLE_QUERY:
            return self.query_instruction or ""
        if role == ROLE_DOCUMENT:
            return self.doc_instruction or ""
        raise ValueError(f"role must be 'query' or 'document', got {role!r}")


class EmbeddingCache:
    """Append-only JSONL store of embeddings, dense and sparse alike."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str, str, str], dict] = {}
        if self.path.exists():
            self._load()

    @staticmethod
    def key(model_id: str, role: str, instruction: str, text: str) -> tuple[str, str, str, str]:
        return (model_id, role, sha256_text(instruction), sha256_text(text))

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    key = (obj["model_id"], obj["role"], obj["instruction_hash"], obj["text_hash"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    logger.warning("%s:%d: skipping unreadable cache line (%s)", self.path, lineno, exc)
                    continue
                self._index[key] = obj

    def get_dense(self, key: tuple[str, str, str, str]) -> np.ndarray | None:
        obj = self._index.get(key)
        if obj is None or "vector" not in obj:
            return None
        return np.asarray(obj["vector"], dtype=np.float64)

    def get_sparse(self, key: tuple[str, str, str, str]) -> dict[str, float] | None:
        obj = self._index.get(key)
        if obj is None or "sparse" not in obj:
            return None
        return dict(obj["sparse"])

    def put(self, key: tuple[str, str, str, str], payload: dict) -> None:
        obj = {
            "model_id": key[0],
            "role": key[1],
            "instruction_hash": key[2],
            "text_hash": key[3],
            **payload,
        }
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            self._index[(key[0], key[1], key[2], key[3])] = obj

    def __len__(self) -> int:
        return len(self._index)


def normalize(vector: np.ndarray) -> np.ndarray:
    """L2-normalize in double precision; the zero vector passes through.

    Scales by the largest component first so subnormal or huge components
    cannot underflow/overflow the squared sum.
    """
    v = np.asarray(vector, dtype=np.float64)
    scale = float(np.max(np.abs(v)))
    if scale == 0.0:
        return v
    scaled = v / scale
    return scaled / float(np.linalg.norm(scaled))


def encode_dense(
    texts: Sequence[str],
    role: str,
    cfg: EncoderConfig,
    cache: EmbeddingCache | None = None,
) -> list[np.ndarray]:
    """Embed ``texts`` (in order) as dense vectors.

    The role picks which instruction prefix is prepended. All vectors must
    share one dimension; with ``cfg.normalize`` each result is renormalized
    client-side to unit L2 norm.
    """
    if cfg.kind != "dense":
        raise ValueError("encode_dense requires a dense encoder config")
    instruction = cfg.instruction_for(role)

    results: list[np.ndarray | None] = [None] * len(texts)
    keys = [EmbeddingCache.key(cfg.model_id, role, instruction, t) for t in texts]
    miss_indices: list[int] = []
    for i, key in enumerate(keys):
        hit = cache.get_dense(key) if cache is not None else None
        if hit is not None:
            results[i] = hit
        else:
            miss_indices.append(i)

    if miss_indices:
        batches = [
            miss_indices[start : start + cfg.batch_size]
            for start in range(0, len(miss_indices), cfg.batch_size)
        ]

        def fetch(batch: list[int]) -> list[list[float]]:
            payload = {
                "model": cfg.model_id,
                "input": [instruction + texts[i] for i in batch],
            }
            response, _ = httpclient.post_json(
                f"{cfg.base_url.rstrip('/')}/v1/embeddings",
                payload,
                timeout_s=cfg.request_timeout_s,
                max_retries=cfg.max_retries,
                api_key=cfg.api_key,
            )
            return _parse_embeddings(response, len(batch))

        with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
            for batch, vectors in zip(batches, pool.map(fetch, batches)):
                for i, raw in zip(batch, vectors):
                    v = np.asarray(raw, dtype=np.float64)
                    if v.ndim != 1:
                        raise ProtocolError("embedding is not a flat vector")
                    if not np.all(np.isfinite(v)):
                        raise ProtocolError("embedding contains non-finite values")
                    if cfg.normalize:
                        v = normalize(v)
                    results[i] = v
                    if cache is not None:
                        cache.put(keys[i], {"kind": "dense", "vector": v.tolist()})

    out = [v for v in results if v is not None]
    dims = {len(v) for v in out}
    if len(dims) > 1:
        raise ProtocolError(f"inconsistent embedding dimensions: {sorted(dims)}")
    return out


def encode_sparse(
    texts: Sequence[str],
    role: str,
    cfg: EncoderConfig,
    cache: EmbeddingCache | None = None,
) -> list[dict[str, float]]:
    """Embed ``texts`` (in order) as sparse term-weight maps.

    Zero and negative weights are dropped on ingestion; an empty map is valid
    and scores zero against everything.
    """
    if cfg.kind != "sparse":
        raise ValueError("encode_sparse requires a sparse encoder config")
    instruction = cfg.instruction_for(role)

    results: list[dict[str, float] | None] = [None] * len(texts)
    keys = [EmbeddingCache.key(cfg.model_id, role, instruction, t) for t in texts]
    miss_indices: list[int] = []
    for i, key in enumerate(keys):
        hit = cache.get_sparse(key) if cache is not None else None
        if hit is not None:
            results[i] = hit
        else:
            miss_indices.append(i)

    if miss_indices:
        batches = [
            miss_indices[start : start + cfg.batch_size]
            for start in range(0, len(miss_indices), cfg.batch_size)
        ]

        def fetch(batch: list[int]) -> list[dict]:
            payload = {
                "model": cfg.model_id,
                "input": [instruction + texts[i] for i in batch],
            }
            response, _ = httpclient.post_json(
                f"{cfg.base_url.rstrip('/')}/encode_sparse",
                payload,
                timeout_s=cfg.request_timeout_s,
                max_retries=cfg.max_retries,
                api_key=cfg.api_key,
            )
            return _parse_sparse(response, len(batch))

        with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
            for batch, maps in zip(batches, pool.map(fetch, batches)):
                for i, raw in zip(batch, maps):
                    vec = sparse_vector(raw)
                    results[i] = vec
                    if cache is not None:
                        cache.put(keys[i], {"kind": "sparse", "sparse": vec})

    return [v if v is not None else {} for v in results]


def load_sparse_vectors(path: str | Path) -> dict[str, dict[str, float]]:
    """Load precomputed sparse vectors: JSONL lines ``{"_id": ..., "sparse": {...}}``."""
    path = Path(path)
    out: dict[str, dict[str, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                item_id = obj["_id"]
                entries = obj["sparse"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed sparse vector line: {exc}") from exc
            out[str(item_id)] = sparse_vector(entries)
    return out


def _parse_embeddings(response: dict, expected: int) -> list[list[float]]:
    data = response.get("data")
    if not isinstance(data, list) or len(data) != expected:
        raise ProtocolError(
            f"embeddings response carries {len(data) if isinstance(data, list) else 'no'} items, expected {expected}"
        )
    ordered: list[list[float] | None] = [None] * expected
    for item in data:
        try:
            position = int(item["index"])
            embedding = item["embedding"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embeddings item: {exc}") from exc
        if not 0 <= position < expected:
            raise ProtocolError(f"embeddings index {position} out of range 0..{expected - 1}")
        ordered[position] = embedding
    if any(v is None for v in ordered):
        raise ProtocolError("embeddings response has missing indices")
    return ordered  # type: ignore[return-value]


def _parse_sparse(response: dict, expected: int) -> list[dict]:
    data = response.get("sparse")
    if not isinstance(data, list) or len(data) != expected:
        raise ProtocolError(
            f"sparse response carries {len(data) if isinstance(data, list) else 'no'} items, expected {expected}"
        )
    for item in data:
        if not isinstance(item, dict):
            raise ProtocolError("sparse response items must be term->weight maps")
    return data
