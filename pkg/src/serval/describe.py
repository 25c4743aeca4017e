"""Document description generation through an OpenAI-compatible vision endpoint.

Each document image is sent once, as a base64 data-URI, together with the
description prompt; the completion text becomes the document's searchable
surrogate. Results are cached in an append-only JSONL store keyed by
(model_id, prompt_hash, content_hash), so re-running a corpus costs zero
requests and changing the prompt, the model, or the image bytes forces
regeneration. Text-source documents bypass the endpoint entirely: their body
is the description.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

from . import httpclient
from .core import Description, DocRef, sha256_bytes, sha256_text
from .errors import EmptyDescriptionError, ProtocolError, ServalError

logger = logging.getLogger(__name__)

DEFAULT_PROMPT_TEXT = (
    "Provide a comprehensive description of the document in the image in English. "
    "Begin with a summary, then follow with details. "
    "Extract all visible text and numerical values from the document."
)

#: Local fallback tokenizers, used only when the endpoint does not report
#: ``usage.completion_tokens``. Token counts are comparable only within one
#: tokenizer, so the active tokenizer name is surfaced next to every stat.
TOKENIZERS: dict[str, Callable[[str], int]] = {
    "whitespace": lambda text: len(text.split()),
}


def count_tokens(tokenizer: str, text: str) -> int:
    try:
        fn = TOKENIZERS[tokenizer]
    except KeyError:
        raise ValueError(
            f"unknown tokenizer {tokenizer!r}; available: {sorted(TOKENIZERS)}"
        ) from None
    return fn(text)


@dataclass(frozen=True)
class PromptTemplate:
    text: str = DEFAULT_PROMPT_TEXT

    @property
    def prompt_hash(self) -> str:
        return sha256_text(self.text)


@dataclass(frozen=True)
class VlmEndpointConfig:
    """Connection settings for the chat-completion endpoint."""

    base_url: str
    model_id: str
    api_key: str | None = None
    max_tokens: int = 2048
    temperature: float = 0.0
    request_timeout_s: float = 120.0
    max_retries: int = 3
    max_concurrency: int = 4
    tokenizer: str = "whitespace"

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be > 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.request_timeout_s <= 0:
            raise ValueError("request_timeout_s must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency <= 0:
            raise ValueError("max_concurrency must be > 0")


class DescriptionCache:
    """Append-only JSONL store of Descriptions with an in-memory key index.

    Writes are serialized by a lock (single-writer append); reads after open
    never touch the file again.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str, str], Description] = {}
        self._order: list[Description] = []
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    desc = Description(**obj)
                except (json.JSONDecodeError, TypeError, ValueError) as exc:
                    # An interrupted append can leave a torn final line; skip it.
                    logger.warning("%s:%d: skipping unreadable cache line (%s)", self.path, lineno, exc)
                    continue
                self._put_mem(desc)

    def _put_mem(self, desc: Description) -> None:
        if desc.cache_key not in self._index:
            self._order.append(desc)
        self._index[desc.cache_key] = desc

    def get(self, model_id: str, prompt_hash: str, content_hash: str) -> Description | None:
        return self._index.get((model_id, prompt_hash, content_hash))

    def put(self, desc: Description) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(desc.__dict__, ensure_ascii=False) + "\n")
            self._put_mem(desc)

    def entries(self) -> list[Description]:
        return list(self._order)

    def __len__(self) -> int:
        return len(self._index)


def content_hash_for(doc: DocRef) -> str:
    """SHA-256 of the image bytes, or of the UTF-8 text body."""
    if doc.image_path is not None:
        return sha256_bytes(doc.image_path.read_bytes())
    return sha256_text(doc.text or "")


def describe_document(
    doc: DocRef,
    cfg: VlmEndpointConfig,
    prompt: PromptTemplate,
    cache: DescriptionCache,
) -> Description:
    """Return the description for one document, generating it on cache miss.

    On a hit no request is issued. Text-source documents copy their body as
    the description (token-counted locally, zero latency). Empty completions
    raise and are never cached.
    """
    content_hash = content_hash_for(doc)
    cached = cache.get(cfg.model_id, prompt.prompt_hash, content_hash)
    if cached is not None:
        # Identical content under two doc_ids shares one cache entry.
        if cached.doc_id != doc.doc_id:
            cached = replace(cached, doc_id=doc.doc_id)
        return cached

    if doc.text is not None:
        desc = Description(
            doc_id=doc.doc_id,
            model_id=cfg.model_id,
            prompt_hash=prompt.prompt_hash,
            content_hash=content_hash,
            text=doc.text,
            token_count=count_tokens(cfg.tokenizer, doc.text),
            gen_latency_s=0.0,
        )
        cache.put(desc)
        return desc

    image_bytes = doc.image_path.read_bytes()  # type: ignore[union-attr]
    payload = _chat_payload(cfg, prompt, image_bytes, _media_type(doc.image_path))
    response, latency_s = httpclient.post_json(
        f"{cfg.base_url.rstrip('/')}/v1/chat/completions",
        payload,
        timeout_s=cfg.request_timeout_s,
        max_retries=cfg.max_retries,
        api_key=cfg.api_key,
    )
    text = _completion_text(response)
    if not text.strip():
        raise EmptyDescriptionError(f"doc {doc.doc_id!r}: endpoint returned an empty description")

    completion_tokens = _usage_completion_tokens(response)
    token_count = (
        completion_tokens if completion_tokens is not None else count_tokens(cfg.tokenizer, text)
    )
    desc = Description(
        doc_id=doc.doc_id,
        model_id=cfg.model_id,
        prompt_hash=prompt.prompt_hash,
        content_hash=content_hash,
        text=text,
        token_count=token_count,
        gen_latency_s=latency_s,
    )
    cache.put(desc)
    return desc


@dataclass
class DescribeSummary:
    """Outcome of a corpus pass: counts plus per-document failures."""

    generated: int = 0
    cached: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)
    generated_ids: set[str] = field(default_factory=set)

    @property
    def failed(self) -> int:
        return len(self.failures)

    @property
    def ok(self) -> bool:
        return not self.failures


def describe_corpus(
    docs: Iterable[DocRef],
    cfg: VlmEndpointConfig,
    prompt: PromptTemplate,
    cache: DescriptionCache,
) -> tuple[list[Description], DescribeSummary]:
    """Describe every document, at most ``cfg.max_concurrency`` in flight.

    Cached documents are skipped, successes are cached as they complete, and
    failures are collected rather than raised, so an interrupted run resumes
    where it stopped. Returns the successful descriptions in corpus order.
    """
    docs = list(docs)
    summary = DescribeSummary()
    pending: list[DocRef] = []
    results: dict[str, Description] = {}

    for doc in docs:
        try:
            content_hash = content_hash_for(doc)
        except OSError as exc:
            summary.failures.append((doc.doc_id, str(exc)))
            continue
        cached = cache.get(cfg.model_id, prompt.prompt_hash, content_hash)
        if cached is not None:
            if cached.doc_id != doc.doc_id:
                cached = replace(cached, doc_id=doc.doc_id)
            results[doc.doc_id] = cached
            summary.cached += 1
        else:
            pending.append(doc)

    if pending:
        with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
            futures = {
                pool.submit(describe_document, doc, cfg, prompt, cache): doc
                for doc in pending
            }
            for future, doc in futures.items():
                try:
                    desc = future.result()
                except (ServalError, OSError) as exc:
                    logger.warning("describe failed for %s: %s", doc.doc_id, exc)
                    summary.failures.append((doc.doc_id, str(exc)))
                else:
                    results[doc.doc_id] = desc
                    summary.generated += 1
                    summary.generated_ids.add(doc.doc_id)

    ordered = [results[d.doc_id] for d in docs if d.doc_id in results]
    return ordered, summary


@dataclass(frozen=True)
class TokenStats:
    count: int
    mean: float
    min: int
    max: int


def token_stats(descriptions: list[Description]) -> TokenStats:
    """Mean/min/max of per-description token counts."""
    if not descriptions:
        raise ValueError("token_stats: empty input")
    counts = [d.token_count for d in descriptions]
    return TokenStats(
        count=len(counts),
        mean=sum(counts) / len(counts),
        min=min(counts),
        max=max(counts),
    )


def bench_latency(descriptions: list[Description]) -> float:
    """Arithmetic mean of generation latencies, in seconds.

    Callers benching fresh generations only should pass the subset produced
    this run (see ``DescribeSummary.generated_ids``); cache hits carry their
    original latency.
    """
    if not descriptions:
        raise ValueError("bench_latency: empty input")
    return sum(d.gen_latency_s for d in descriptions) / len(descriptions)


def _media_type(path: Path | None) -> str:
    guessed, _ = mimetypes.guess_type(str(path))
    if guessed and guessed.startswith("image/"):
        return guessed
    return "image/png"


def _chat_payload(
    cfg: VlmEndpointConfig, prompt: PromptTemplate, image_bytes: bytes, media_type: str
) -> dict:
    encoded = base64.b64encode(image_bytes).decode("ascii")
    return {
        "model": cfg.model_id,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "messages": [
            {
                "role": "user",
                "content": [
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{media_type};base64,{encoded}"},
                    },
                    {"type": "text", "text": prompt.text},
                ],
            }
        ],
    }


def _completion_text(response: dict) -> str:
    try:
        content = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed chat completion response: {exc}") from exc
    if not isinstance(content, str):
        raise ProtocolError("chat completion content is not a string")
    return content


def _usage_completion_tokens(response: dict) -> int | None:
    usage = response.get("usage")
    if isinstance(usage, dict):
        tokens = usage.get("completion_tokens")
        if isinstance(tokens, int) and tokens >= 0:
            return tokens
    return None
