from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from serval.core import DocRef, Qrels, Query, RunList
from serval.io import (
    load_corpus,
    load_qrels,
    load_queries,
    load_run,
    save_corpus,
    save_qrels,
    save_queries,
    save_run,
)

ids = st.text(alphabet="abcdefghij0123456789", min_size=1, max_size=6)


def test_corpus_round_trip(tmp_path):
    docs = [
        DocRef("d1", image_path=tmp_path / "img" / "d1.png"),
        DocRef("d2", text="plain body"),
    ]
    path = tmp_path / "corpus.jsonl"
    save_corpus(docs, path)
    assert load_corpus(path) == docs


def test_corpus_relative_image_paths_resolve(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"_id": "d1", "image_path": "images/x.png"}\n')
    (docs,) = (load_corpus(path),)
    assert docs[0].image_path == tmp_path / "images" / "x.png"


def test_corpus_missing_source_rejected(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"_id": "d1"}\n')
    with pytest.raises(ValueError):
        load_corpus(path)


def test_queries_round_trip(tmp_path):
    queries = [Query("q1", "hello world"), Query("q2", "¿dónde está?")]
    path = tmp_path / "queries.jsonl"
    save_queries(queries, path)
    assert load_queries(path) == queries


class TestQrels:
    def test_beir_three_column_with_header(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("query-id\tcorpus-id\tscore\nq1\td1\t2\nq1\td2\t0\n")
        qrels = load_qrels(path)
        assert qrels.judgments == {"q1": {"d1": 2, "d2": 0}}

    def test_beir_three_column_without_header(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("q1\td1\t1\n")
        assert load_qrels(path).judgments == {"q1": {"d1": 1}}

    def test_trec_four_column(self, tmp_path):
        path = tmp_path / "qrels.txt"
        path.write_text("q1 0 d1 1\nq1 0 d2 0\nq2 0 d1 2\n")
        qrels = load_qrels(path)
        assert qrels.judgments == {"q1": {"d1": 1, "d2": 0}, "q2": {"d1": 2}}

    def test_bad_column_count(self, tmp_path):
        path = tmp_path / "qrels.tsv"
        path.write_text("q1\td1\t1\t0\textra\n")
        with pytest.raises(ValueError):
            load_qrels(path)

    def test_round_trip(self, tmp_path):
        qrels = Qrels({"q1": {"d1": 2, "d2": 0}, "q2": {"d3": 1}})
        path = tmp_path / "qrels.tsv"
        save_qrels(qrels, path)
        assert load_qrels(path).judgments == {
            q: dict(docs) for q, docs in qrels.judgments.items()
        }


class TestRunFiles:
    def test_round_trip_exact_scores(self, tmp_path):
        runs = [
            RunList.from_scores("q1", [("d1", 0.1234567890123), ("d2", -1.5)]),
            RunList.from_scores("q2", [("d3", 7.0)]),
        ]
        path = tmp_path / "run.trec"
        save_run(runs, path, tag="t")
        assert load_run(path) == runs

    def test_rank_column_starts_at_one(self, tmp_path):
        path = tmp_path / "run.trec"
        save_run([RunList.from_scores("q1", [("a", 2.0), ("b", 1.0)])], path)
        lines = path.read_text().splitlines()
        assert lines[0].split()[3] == "1"
        assert lines[1].split()[3] == "2"

    def test_parse_reorders_to_invariant(self, tmp_path):
        # A file written out of order still parses into a valid RunList.
        path = tmp_path / "run.trec"
        path.write_text("q1 Q0 b 1 1.0 t\nq1 Q0 a 2 5.0 t\nq1 Q0 c 3 1.0 t\n")
        (run,) = load_run(path)
        assert run.doc_ids() == ["a", "b", "c"]

    def test_bad_column_count(self, tmp_path):
        path = tmp_path / "run.trec"
        path.write_text("q1 Q0 d1 1 1.0\n")
        with pytest.raises(ValueError):
            load_run(path)

    def test_whitespace_in_ids_rejected_on_write(self, tmp_path):
        run = RunList.from_scores("q 1", [("d1", 1.0)])
        with pytest.raises(ValueError):
            save_run([run], tmp_path / "run.trec")
        with pytest.raises(ValueError):
            save_qrels(Qrels({"q1": {"d 1": 1}}), tmp_path / "qrels.tsv")

    @settings(max_examples=50)
    @given(
        st.dictionaries(
            ids,
            st.dictionaries(
                ids,
                st.floats(min_value=-1e9, max_value=1e9, allow_nan=False),
                min_size=1,
                max_size=8,
            ),
            min_size=1,
            max_size=5,
        )
    )
    def test_run_round_trip_property(self, by_query):
        runs = [RunList.from_scores(qid, pairs.items()) for qid, pairs in by_query.items()]
        with _scratch_file() as name:
            save_run(runs, name, tag="prop")
            parsed = load_run(name)
        assert sorted(parsed, key=lambda r: r.query_id) == sorted(
            runs, key=lambda r: r.query_id
        )


import contextlib
import os
import tempfile


@contextlib.contextmanager
def _scratch_file():
    fd, name = tempfile.mkstemp()
    os.close(fd)
    try:
        yield name
    finally:
        os.unlink(name)


# Any well-formed values must survive serialize -> parse untouched.
text_body = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=40
)


@settings(max_examples=50)
@given(st.dictionaries(ids, text_body, min_size=1, max_size=6))
def test_queries_round_trip_property(by_id):
    queries = [Query(qid, text) for qid, text in by_id.items()]
    with _scratch_file() as name:
        save_queries(queries, name)
        assert load_queries(name) == queries


@settings(max_examples=50)
@given(
    st.lists(st.tuples(ids, st.booleans(), text_body), min_size=1, max_size=6)
)
def test_corpus_round_trip_property(entries):
    docs = []
    seen = set()
    for doc_id, is_image, body in entries:
        if doc_id in seen:
            continue
        seen.add(doc_id)
        if is_image:
            docs.append(DocRef(doc_id, image_path=Path(f"/abs/{doc_id}.png")))
        else:
            docs.append(DocRef(doc_id, text=body))
    with _scratch_file() as name:
        save_corpus(docs, name)
        assert load_corpus(name) == docs


@settings(max_examples=50)
@given(
    st.dictionaries(
        ids, st.dictionaries(ids, st.integers(0, 5), min_size=1, max_size=6), min_size=1, max_size=5
    )
)
def test_qrels_round_trip_property(judgments):
    qrels = Qrels(judgments)
    with _scratch_file() as name:
        save_qrels(qrels, name)
        parsed = load_qrels(name)
    assert {q: dict(d) for q, d in parsed.judgments.items()} == {
        q: dict(d) for q, d in qrels.judgments.items()
    }
