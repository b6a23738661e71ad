import json

import pytest
from hypothesis import given, strategies as st

from rankcascade.corpus import (
    Corpus,
    Qrels,
    Query,
    QuerySet,
    load_corpus,
    load_qrels,
    load_queries,
    make_document,
    qrels_coverage,
    token_spans,
    tokenize,
    write_corpus,
    write_qrels,
    write_queries,
)
from rankcascade.errors import IngestError


class TestTokenize:
    def test_basic(self):
        assert tokenize("Hello, World!") == ["hello", "world"]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_runs(self):
        assert tokenize("BM25-based re-ranking") == ["bm25", "based", "re", "ranking"]

    def test_underscore_splits(self):
        assert tokenize("snake_case") == ["snake", "case"]

    @given(st.text(max_size=200))
    def test_idempotent_on_joined_output(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens

    @given(st.text(max_size=200))
    def test_spans_align_with_tokens(self, text):
        spans = token_spans(text)
        assert [text[a:b].lower() for a, b in spans] == tokenize(text)


class TestDocument:
    def test_token_count_covers_title_and_body(self):
        doc = make_document("d1", "Big Title", "body text here")
        assert doc.token_count == len(tokenize("Big Title body text here")) == 5

    def test_full_text_joins_with_one_space(self):
        assert make_document("d1", "a", "b").full_text == "a b"

    def test_two_token_body(self):
        assert make_document("d1", "", "hello world").token_count == 2


class TestCorpusLoading:
    def write_lines(self, tmp_path, lines, name="corpus.jsonl"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_order_preserved_and_fields_parsed(self, tmp_path):
        path = self.write_lines(
            tmp_path,
            [
                '{"_id":"d2","title":"T","text":"hello world"}',
                '{"_id":"d1","text":"second"}',
            ],
        )
        corpus = load_corpus(path)
        assert corpus.ids() == ["d2", "d1"]
        assert corpus.get("d2").token_count == 3

    def test_duplicate_id_names_the_doc(self, tmp_path):
        path = self.write_lines(
            tmp_path,
            ['{"_id":"d1","text":"a"}', '{"_id":"d1","text":"b"}'],
        )
        with pytest.raises(IngestError, match="d1"):
            load_corpus(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = self.write_lines(tmp_path, ['{"_id":"d1","text":"a"}', "{oops"])
        with pytest.raises(IngestError, match=":2:"):
            load_corpus(path)

    def test_missing_text_is_an_error(self, tmp_path):
        path = self.write_lines(tmp_path, ['{"_id":"d1"}'])
        with pytest.raises(IngestError, match="text"):
            load_corpus(path)

    def test_missing_id_is_an_error(self, tmp_path):
        path = self.write_lines(tmp_path, ['{"text":"a"}'])
        with pytest.raises(IngestError, match="_id"):
            load_corpus(path)

    def test_integer_ids_coerce_to_strings(self, tmp_path):
        path = self.write_lines(tmp_path, ['{"_id":31,"text":"a"}'])
        assert load_corpus(path).ids() == ["31"]

    def test_round_trip(self, tmp_path):
        docs = [make_document("d1", "t", "a b"), make_document("d2", "", "c")]
        out = tmp_path / "out.jsonl"
        write_corpus(Corpus(docs), out)
        again = load_corpus(out)
        assert again.documents == docs

    def test_duplicate_in_memory_rejected(self):
        with pytest.raises(IngestError, match="d1"):
            Corpus([make_document("d1", "", "a"), make_document("d1", "", "b")])


class TestQueries:
    def test_round_trip(self, tmp_path):
        queries = QuerySet([Query("q1", "first"), Query("q2", "second")])
        path = tmp_path / "queries.jsonl"
        write_queries(queries, path)
        again = load_queries(path)
        assert list(again) == list(queries)

    def test_duplicate_query_id(self, tmp_path):
        path = tmp_path / "queries.jsonl"
        path.write_text('{"_id":"q1","text":"a"}\n{"_id":"q1","text":"b"}\n')
        with pytest.raises(IngestError, match="q1"):
            load_queries(path)


class TestQrels:
    def write_tsv(self, tmp_path, rows):
        path = tmp_path / "qrels.tsv"
        path.write_text("query-id\tcorpus-id\tscore\n" + "".join(r + "\n" for r in rows))
        return path

    def test_direct_parse(self, tmp_path):
        qrels = load_qrels(self.write_tsv(tmp_path, ["q1\td7\t1"]))
        assert qrels.grade("q1", "d7") == 1

    def test_header_only_is_empty(self, tmp_path):
        assert len(load_qrels(self.write_tsv(tmp_path, []))) == 0

    def test_all_grades_retained(self, tmp_path):
        qrels = load_qrels(self.write_tsv(tmp_path, ["q1\td1\t0", "q1\td2\t1", "q1\td3\t2"]))
        assert sorted(qrels.for_query("q1").values()) == [0, 1, 2]
        assert qrels.has_positive("q1")

    def test_repeated_pair_keeps_last_and_warns(self, tmp_path, caplog):
        path = self.write_tsv(tmp_path, ["q1\td1\t1", "q1\td1\t2"])
        with caplog.at_level("WARNING"):
            qrels = load_qrels(path)
        assert qrels.grade("q1", "d1") == 2
        assert any("q1" in record.message for record in caplog.records)

    def test_non_integer_grade_is_an_error(self, tmp_path):
        with pytest.raises(IngestError, match=":2:"):
            load_qrels(self.write_tsv(tmp_path, ["q1\td1\thigh"]))

    def test_wrong_column_count_is_an_error(self, tmp_path):
        with pytest.raises(IngestError, match=":2:"):
            load_qrels(self.write_tsv(tmp_path, ["q1\td1"]))

    def test_round_trip(self, tmp_path):
        qrels = Qrels()
        qrels.set("q1", "d1", 2)
        qrels.set("q2", "d9", 1)
        path = tmp_path / "out.tsv"
        write_qrels(qrels, path)
        again = load_qrels(path)
        assert dict(again.items()) == dict(qrels.items())

    def test_negative_grade_rejected(self):
        with pytest.raises(IngestError):
            Qrels().set("q1", "d1", -1)


class TestCoverage:
    def test_reports_missing_queries_and_docs(self):
        qrels = Qrels()
        qrels.set("q1", "d1", 1)
        qrels.set("q9", "d9", 1)
        queries = QuerySet([Query("q1", "a")])
        corpus = Corpus([make_document("d1", "", "x")])
        missing_queries, missing_docs = qrels_coverage(qrels, queries, corpus)
        assert missing_queries == {"q9"}
        assert missing_docs == {"d9"}


class TestJsonlStreaming:
    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"_id":"d1","text":"a"}\n\n{"_id":"d2","text":"b"}\n')
        assert load_corpus(path).ids() == ["d1", "d2"]

    def test_written_lines_are_compact_json(self, tmp_path):
        out = tmp_path / "c.jsonl"
        write_corpus(Corpus([make_document("d1", "t", "a")]), out)
        line = out.read_text().splitlines()[0]
        assert json.loads(line) == {"_id": "d1", "title": "t", "text": "a"}
        assert ": " not in line
