from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from mocks import MockEncoderServer, MockVlmServer, keyword_counts

FIXTURES = Path(__file__).parent / "fixtures"

KEYWORDS = ["solar", "revenue", "menu", "allergen", "tissue", "insurance", "inflation", "flowchart"]


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def description_table() -> dict[str, dict]:
    return json.loads((FIXTURES / "descriptions.json").read_text())


@pytest.fixture
def vlm_descriptions(description_table) -> dict[str, tuple[str, int | None]]:
    """Mock-VLM script: sha256(image bytes) -> (description, completion_tokens)."""
    table = {}
    for doc_id, spec in description_table.items():
        digest = hashlib.sha256((FIXTURES / "images" / f"{doc_id}.png").read_bytes()).hexdigest()
        table[digest] = (spec["text"], spec["completion_tokens"])
    return table


@pytest.fixture
def vlm_server(vlm_descriptions):
    with MockVlmServer(vlm_descriptions) as server:
        yield server


@pytest.fixture
def encoder_server():
    with MockEncoderServer(embed_fn=lambda text: keyword_counts(text, KEYWORDS)) as server:
        yield server


@pytest.fixture
def pipeline_config(tmp_path, vlm_server, encoder_server) -> Path:
    """Write a pipeline config pointing at the shipped fixtures and live mocks."""
    return write_config(tmp_path, vlm_server.base_url, encoder_server.base_url)


def write_config(
    tmp_path: Path,
    vlm_url: str,
    encoder_url: str,
    *,
    normalize: bool = False,
    max_concurrency: int = 2,
    extra: str = "",
) -> Path:
    config = tmp_path / "config.toml"
    config.write_text(
        f"""
cache_dir = "{tmp_path / 'cache'}"
index_dir = "{tmp_path / 'indexes'}"
top_k_retrieve = 100

[metrics]
cutoffs = [1, 5, 10]

[vlm]
base_url = "{vlm_url}"
model_id = "mock-vlm"
max_concurrency = {max_concurrency}
max_retries = 0

[encoder]
base_url = "{encoder_url}"
model_id = "mock-encoder"
kind = "dense"
normalize = {"true" if normalize else "false"}
max_retries = 0

[datasets.fixture]
corpus = "{FIXTURES / 'corpus.jsonl'}"
queries = "{FIXTURES / 'queries.jsonl'}"
qrels = "{FIXTURES / 'qrels.tsv'}"
{extra}
""",
        encoding="utf-8",
    )
    return config


@pytest.fixture(autouse=True)
def fast_backoff(monkeypatch):
    """Keep retry sleeps out of the test clock."""
    import serval.httpclient as hc

    monkeypatch.setattr(hc, "_sleep", lambda s: None)
