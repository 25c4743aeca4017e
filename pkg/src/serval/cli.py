"""Command-line pipeline: describe, encode, index, search, evaluate, report.

Each stage reads only the previous stage's cache, so stages can be re-run
independently and an interrupted pipeline resumes without repeating work.

Exit codes: 0 success, 1 usage/config error, 2 upstream endpoint failure,
3 data-validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import describe as describe_mod
from . import encode as encode_mod
from . import index as index_mod
from . import io as io_mod
from . import metrics as metrics_mod
from . import report as report_mod
from .config import DatasetPaths, PipelineConfig, load_config
from .core import Description, MetricSpec, RunList, validate_corpus
from .errors import (
    ConfigError,
    CorpusValidationError,
    EmptyDescriptionError,
    EndpointError,
    IndexFormatError,
    ProtocolError,
    ServalError,
    TransportError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ENDPOINT = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    # Spec exit-code contract: usage errors are 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="serval", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, func, with_dataset: bool = True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config TOML")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="KEY=VALUE",
            help="override a config field, e.g. --set vlm.max_concurrency=8 (repeatable)",
        )
        if with_dataset:
            p.add_argument("--dataset", required=True, help="configured dataset name")
        p.set_defaults(func=func)
        return p

    p = add("validate", "check corpus/queries/qrels consistency", cmd_validate)

    p = add("describe", "generate document descriptions into the cache", cmd_describe)
    p.add_argument("--limit", type=int, default=None, help="process at most N documents")

    p = add("encode", "embed descriptions and/or queries into the cache", cmd_encode)
    p.add_argument(
        "--role",
        choices=["document", "query", "both"],
        default="both",
        help="which side to encode (default: both)",
    )

    add("index", "build the persistent index from cached embeddings", cmd_index)

    p = add("search", "run all queries against the index, write a TREC run", cmd_search)
    p.add_argument("--out", required=True, help="output run file path")

    p = sub.add_parser("evaluate", help="score run files against qrels")
    p.add_argument(
        "--run",
        action="append",
        required=True,
        metavar="[NAME=]PATH",
        help="run file, optionally prefixed with a dataset name (repeatable)",
    )
    p.add_argument(
        "--qrels",
        action="append",
        required=True,
        metavar="[NAME=]PATH",
        help="qrels file for the same dataset names (repeatable)",
    )
    p.add_argument("--cutoffs", default="1,5,10", help="metric cutoffs, comma separated")
    p.add_argument(
        "--missing",
        choices=[metrics_mod.MISSING_ZERO, metrics_mod.MISSING_SKIP],
        default=metrics_mod.MISSING_ZERO,
        help="score judged-but-missing queries as zero, or skip them",
    )
    p.add_argument("--out-dir", default=".", help="where report files are written")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    p.set_defaults(func=cmd_evaluate)

    p = add("stats", "token statistics over cached descriptions", cmd_stats)
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")

    p = add("bench-latency", "mean generation latency over cached descriptions", cmd_bench_latency)
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, EndpointError, EmptyDescriptionError, ProtocolError) as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (CorpusValidationError, IndexFormatError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ServalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


# ---------------------------------------------------------------------------
# stage helpers

def _load_dataset(cfg: PipelineConfig, name: str):
    paths: DatasetPaths = cfg.dataset(name)
    docs = io_mod.load_corpus(paths.corpus)
    queries = io_mod.load_queries(paths.queries)
    qrels = io_mod.load_qrels(paths.qrels)
    return docs, queries, qrels


def _description_cache(cfg: PipelineConfig, dataset: str) -> describe_mod.DescriptionCache:
    return describe_mod.DescriptionCache(cfg.cache_dir / dataset / "descriptions.jsonl")


def _embedding_cache(cfg: PipelineConfig, dataset: str) -> encode_mod.EmbeddingCache:
    return encode_mod.EmbeddingCache(cfg.cache_dir / dataset / "embeddings.jsonl")


def _index_path(cfg: PipelineConfig, dataset: str) -> Path:
    suffix = "srvd" if cfg.encoder.kind == "dense" else "srvs"
    return cfg.index_dir / f"{dataset}.{suffix}"


def _similarity(cfg: PipelineConfig) -> str:
    # Normalized embeddings pair with cosine, raw ones with dot.
    return index_mod.SIM_COSINE if cfg.encoder.normalize else index_mod.SIM_DOT


def _cached_descriptions(cfg: PipelineConfig, docs, cache) -> tuple[list[Description], list[str]]:
    """Cached description per corpus doc, plus the doc_ids still missing."""
    found: list[Description] = []
    missing: list[str] = []
    for doc in docs:
        try:
            content_hash = describe_mod.content_hash_for(doc)
        except OSError:
            missing.append(doc.doc_id)
            continue
        desc = cache.get(cfg.vlm.model_id, cfg.prompt.prompt_hash, content_hash)
        if desc is None:
            missing.append(doc.doc_id)
        else:
            found.append(desc)
    return found, missing


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    docs, queries, qrels = _load_dataset(cfg, args.dataset)
    report = validate_corpus(docs, queries, qrels)
    for warning in report.warnings:
        print(f"warning: {warning}")
    for error in report.errors:
        print(f"error: {error}")
    print(
        f"{args.dataset}: {len(docs)} docs, {len(queries)} queries, "
        f"{len(qrels.judgments)} judged queries; "
        f"{len(report.errors)} errors, {len(report.warnings)} warnings"
    )
    return EXIT_OK if report.ok else EXIT_DATA


def cmd_describe(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    docs, _, _ = _load_dataset(cfg, args.dataset)
    if args.limit is not None:
        docs = docs[: args.limit]
    cache = _description_cache(cfg, args.dataset)
    descriptions, summary = describe_mod.describe_corpus(docs, cfg.vlm, cfg.prompt, cache)
    print(f"{summary.generated} generated, {summary.cached} cached, {summary.failed} failed")
    if summary.generated_ids:
        fresh = [d for d in descriptions if d.doc_id in summary.generated_ids]
        print(f"mean generation latency this run: {describe_mod.bench_latency(fresh):.3f} s")
    for doc_id, reason in summary.failures:
        print(f"failed {doc_id}: {reason}", file=sys.stderr)
    return EXIT_OK if summary.ok else EXIT_ENDPOINT


def cmd_encode(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    docs, queries, _ = _load_dataset(cfg, args.dataset)
    emb_cache = _embedding_cache(cfg, args.dataset)
    roles = ["document", "query"] if args.role == "both" else [args.role]

    for role in roles:
        if role == "document":
            if cfg.encoder.kind == "sparse" and cfg.encoder.sparse_doc_vectors:
                _check_sparse_file(cfg.encoder.sparse_doc_vectors, [d.doc_id for d in docs])
                print(f"documents: using precomputed sparse vectors ({cfg.encoder.sparse_doc_vectors})")
                continue
            desc_cache = _description_cache(cfg, args.dataset)
            descriptions, missing = _cached_descriptions(cfg, docs, desc_cache)
            if missing:
                raise CorpusValidationError(
                    f"missing descriptions for {len(missing)} docs: {', '.join(missing[:10])}"
                )
            texts = [d.text for d in descriptions]
        else:
            if cfg.encoder.kind == "sparse" and cfg.encoder.sparse_query_vectors:
                _check_sparse_file(cfg.encoder.sparse_query_vectors, [q.query_id for q in queries])
                print(f"queries: using precomputed sparse vectors ({cfg.encoder.sparse_query_vectors})")
                continue
            texts = [q.text for q in queries]

        before = len(emb_cache)
        if cfg.encoder.kind == "dense":
            encode_mod.encode_dense(texts, role, cfg.encoder, emb_cache)
        else:
            encode_mod.encode_sparse(texts, role, cfg.encoder, emb_cache)
        fresh = len(emb_cache) - before
        label = "documents" if role == "document" else "queries"
        print(f"{label}: {fresh} encoded, {len(texts) - fresh} cached")
    return EXIT_OK


def _check_sparse_file(path: Path, expected_ids: list[str]) -> None:
    vectors = encode_mod.load_sparse_vectors(path)
    missing = [i for i in expected_ids if i not in vectors]
    if missing:
        raise CorpusValidationError(
            f"{path}: missing sparse vectors for {len(missing)} ids: {', '.join(missing[:10])}"
        )


def cmd_index(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    docs, _, _ = _load_dataset(cfg, args.dataset)
    doc_ids = [d.doc_id for d in docs]

    if cfg.encoder.kind == "sparse" and cfg.encoder.sparse_doc_vectors:
        by_id = encode_mod.load_sparse_vectors(cfg.encoder.sparse_doc_vectors)
        vectors = [by_id[d] for d in doc_ids if d in by_id]
        if len(vectors) != len(doc_ids):
            missing = [d for d in doc_ids if d not in by_id]
            raise CorpusValidationError(f"missing sparse vectors for: {', '.join(missing[:10])}")
        idx = index_mod.build_sparse(doc_ids, vectors)
    else:
        desc_cache = _description_cache(cfg, args.dataset)
        descriptions, missing = _cached_descriptions(cfg, docs, desc_cache)
        if missing:
            raise CorpusValidationError(
                f"missing descriptions for {len(missing)} docs: {', '.join(missing[:10])}"
            )
        emb_cache = _embedding_cache(cfg, args.dataset)
        instruction = cfg.encoder.instruction_for("document")
        lookup = (
            emb_cache.get_dense if cfg.encoder.kind == "dense" else emb_cache.get_sparse
        )
        vectors = []
        absent = []
        for desc in descriptions:
            key = encode_mod.EmbeddingCache.key(
                cfg.encoder.model_id, "document", instruction, desc.text
            )
            vec = lookup(key)
            if vec is None:
                absent.append(desc.doc_id)
            else:
                vectors.append(vec)
        if absent:
            raise CorpusValidationError(
                f"missing embeddings for {len(absent)} docs: {', '.join(absent[:10])}"
            )
        if cfg.encoder.kind == "dense":
            idx = index_mod.build_dense(doc_ids, vectors, similarity=_similarity(cfg))
        else:
            idx = index_mod.build_sparse(doc_ids, vectors)

    out = _index_path(cfg, args.dataset)
    index_mod.save_index(idx, out)
    print(f"indexed {len(doc_ids)} docs -> {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    _, queries, _ = _load_dataset(cfg, args.dataset)
    idx = index_mod.load_index(_index_path(cfg, args.dataset))

    sparse_file = (
        cfg.encoder.sparse_query_vectors
        if cfg.encoder.kind == "sparse" and cfg.encoder.sparse_query_vectors
        else None
    )
    if sparse_file:
        by_id = encode_mod.load_sparse_vectors(sparse_file)

    emb_cache = _embedding_cache(cfg, args.dataset)
    instruction = cfg.encoder.instruction_for("query")
    runs: list[RunList] = []
    absent: list[str] = []
    for query in queries:
        if sparse_file:
            qvec = by_id.get(query.query_id)
        elif cfg.encoder.kind == "dense":
            qvec = emb_cache.get_dense(
                encode_mod.EmbeddingCache.key(cfg.encoder.model_id, "query", instruction, query.text)
            )
        else:
            qvec = emb_cache.get_sparse(
                encode_mod.EmbeddingCache.key(cfg.encoder.model_id, "query", instruction, query.text)
            )
        if qvec is None:
            absent.append(query.query_id)
            continue
        if isinstance(idx, index_mod.DenseIndex):
            ranking = index_mod.search_dense(idx, qvec, cfg.top_k_retrieve)
        else:
            ranking = index_mod.search_sparse(idx, qvec, cfg.top_k_retrieve)
        runs.append(RunList.from_scores(query.query_id, ranking))
    if absent:
        raise CorpusValidationError(
            f"missing query vectors for {len(absent)} queries: {', '.join(absent[:10])}"
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io_mod.save_run(runs, out, tag=cfg.run_tag())
    print(f"searched {len(runs)} queries -> {out}")
    return EXIT_OK


def _parse_named_paths(items: list[str], flag: str) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = "dataset", item
        if name in out:
            raise ConfigError(f"{flag}: dataset {name!r} given twice")
        out[name] = Path(path)
    return out


def cmd_evaluate(args) -> int:
    run_paths = _parse_named_paths(args.run, "--run")
    qrels_paths = _parse_named_paths(args.qrels, "--qrels")
    if set(run_paths) != set(qrels_paths):
        raise ConfigError(
            f"--run datasets {sorted(run_paths)} do not match --qrels datasets {sorted(qrels_paths)}"
        )
    try:
        cutoffs = tuple(int(c) for c in args.cutoffs.split(",") if c.strip())
        spec = MetricSpec(cutoffs=cutoffs)
    except ValueError as exc:
        raise ConfigError(f"invalid --cutoffs: {exc}") from exc

    eval_report = report_mod.EvalReport()
    tags: dict[str, str] = {}
    for name in sorted(run_paths):
        runs = io_mod.load_run(run_paths[name])
        tags[name] = _run_tag(run_paths[name])
        qrels = io_mod.load_qrels(qrels_paths[name])
        eval_report.datasets[name] = metrics_mod.evaluate_run(
            runs, qrels, spec, missing=args.missing
        )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(eval_report.to_json(), encoding="utf-8")

    records = []
    for name, ev in eval_report.datasets.items():
        vlm, _, encoder = tags[name].partition("+")
        records.append(
            report_mod.RunRecord(vlm=vlm, encoder=encoder, dataset=name, metrics=ev.means)
        )
    report_mod.write_tsv(records, out_dir / "report.tsv")
    tables = report_mod.render_tables(records)
    text = "\n".join(tables[m] for m in sorted(tables, key=report_mod.metric_sort_key))
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    for name, ev in eval_report.datasets.items():
        print(f"{name}: {ev.evaluated_queries} queries evaluated, {ev.skipped_queries} skipped")
    if not args.no_figure:
        report_mod.write_figure(records, out_dir / "report.png")
        print(f"wrote {out_dir / 'report.json'}, report.tsv, report.txt, report.png")
    else:
        print(f"wrote {out_dir / 'report.json'}, report.tsv, report.txt")
    return EXIT_OK


def _run_tag(path: Path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            cols = line.split()
            if len(cols) == 6:
                return cols[5]
    return "run"


def cmd_stats(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    descriptions = _dataset_cache_entries(cfg, args.dataset)
    stats = describe_mod.token_stats(descriptions)
    if args.json:
        print(json.dumps({
            "count": stats.count,
            "mean_tokens": stats.mean,
            "min_tokens": stats.min,
            "max_tokens": stats.max,
            "fallback_tokenizer": cfg.vlm.tokenizer,
        }))
    else:
        print(
            f"{stats.count} descriptions, mean tokens/doc: {stats.mean:.2f} "
            f"(min {stats.min}, max {stats.max}; fallback tokenizer: {cfg.vlm.tokenizer})"
        )
    return EXIT_OK


def cmd_bench_latency(args) -> int:
    cfg = load_config(args.config, overrides=args.overrides)
    descriptions = _dataset_cache_entries(cfg, args.dataset)
    mean = describe_mod.bench_latency(descriptions)
    if args.json:
        print(json.dumps({"count": len(descriptions), "mean_latency_s": mean}))
    else:
        print(f"mean generation latency: {mean:.3f} s over {len(descriptions)} descriptions")
    return EXIT_OK


def _dataset_cache_entries(cfg: PipelineConfig, dataset: str) -> list[Description]:
    cache = _description_cache(cfg, dataset)
    entries = [
        d
        for d in cache.entries()
        if d.model_id == cfg.vlm.model_id and d.prompt_hash == cfg.prompt.prompt_hash
    ]
    if not entries:
        raise CorpusValidationError(
            f"no cached descriptions for dataset {dataset!r} with model {cfg.vlm.model_id!r}"
        )
    return entries


if __name__ == "__main__":
    sys.exit(main())
