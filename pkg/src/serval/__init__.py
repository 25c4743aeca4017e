"""Zero-shot visual document retrieval toolkit.

Pipeline: a vision-language endpoint writes a textual description of each
document page; a text encoder embeds descriptions and queries; an exact
index answers top-k searches; an evaluator reports nDCG@k / Recall@k per
dataset with macro averages.
"""

from .core import (
    Description,
    DocRef,
    MetricReport,
    MetricSpec,
    Qrels,
    Query,
    RunList,
    sparse_vector,
    validate_corpus,
)
from .describe import (
    DEFAULT_PROMPT_TEXT,
    DescriptionCache,
    PromptTemplate,
    VlmEndpointConfig,
    bench_latency,
    describe_corpus,
    describe_document,
    token_stats,
)
from .encode import EncoderConfig, EmbeddingCache, encode_dense, encode_sparse
from .index import (
    DenseIndex,
    SparseIndex,
    build_dense,
    build_sparse,
    load_index,
    save_index,
    search_dense,
    search_sparse,
)
from .metrics import evaluate_run, macro_average, ndcg_at_k, recall_at_k

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PROMPT_TEXT",
    "DenseIndex",
    "Description",
    "DescriptionCache",
    "DocRef",
    "EmbeddingCache",
    "EncoderConfig",
    "MetricReport",
    "MetricSpec",
    "PromptTemplate",
    "Qrels",
    "Query",
    "RunList",
    "SparseIndex",
    "VlmEndpointConfig",
    "bench_latency",
    "build_dense",
    "build_sparse",
    "describe_corpus",
    "describe_document",
    "encode_dense",
    "encode_sparse",
    "evaluate_run",
    "load_index",
    "macro_average",
    "ndcg_at_k",
    "recall_at_k",
    "save_index",
    "search_dense",
    "search_sparse",
    "sparse_vector",
    "token_stats",
    "validate_corpus",
]
