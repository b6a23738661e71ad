"""Corpus, query, and relevance-judgment ingestion.

File formats follow the BEIR conventions: ``corpus.jsonl`` and
``queries.jsonl`` hold one JSON object per line with ``_id``/``text``
(and optional ``title`` for documents); qrels are tab-separated with a
``query-id  corpus-id  score`` header and integer grades.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import IngestError

logger = logging.getLogger(__name__)

# Maximal runs of alphanumeric characters (underscore excluded). Lowercased
# input, no stemming, no stop words: keeps scoring reproducible and easy to
# check against a full-scan reference scorer.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase *text* and split on runs of non-alphanumeric characters.

    Deterministic and idempotent on its own joined output:
    ``tokenize(" ".join(tokenize(s))) == tokenize(s)``.
    """
    return _TOKEN_RE.findall(text.lower())


def token_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of the tokens of *text*, against the original string.

    Used for tail truncation: cutting after span ``n-1`` keeps exactly the
    first ``n`` tokens while preserving the original casing and punctuation
    of the kept prefix.
    """
    return [(m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class Document:
    """One retrievable text unit. ``token_count`` is fixed at ingest time."""

    id: str
    title: str
    body: str
    token_count: int

    @property
    def full_text(self) -> str:
        """Title and body joined with a single space; the unit scorers see."""
        return f"{self.title} {self.body}"


@dataclass(frozen=True)
class Query:
    id: str
    text: str


def make_document(doc_id: str, title: str, body: str) -> Document:
    return Document(
        id=doc_id,
        title=title,
        body=body,
        token_count=len(tokenize(f"{title} {body}")),
    )


class Corpus:
    """Immutable collection of documents, preserving ingest order."""

    def __init__(self, documents: Iterable[Document]):
        self._documents: list[Document] = list(documents)
        self._by_id: dict[str, Document] = {}
        for doc in self._documents:
            if not doc.id:
                raise IngestError("document with empty id")
            if doc.id in self._by_id:
                raise IngestError(f"duplicate document id {doc.id!r}")
            self._by_id[doc.id] = doc

    def __len__(self) -> int:
        return len(self._documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise KeyError(f"unknown document id {doc_id!r}") from None

    @property
    def documents(self) -> list[Document]:
        return list(self._documents)

    def ids(self) -> list[str]:
        return [doc.id for doc in self._documents]


class QuerySet:
    """Queries in file order, addressable by id."""

    def __init__(self, queries: Iterable[Query]):
        self._queries: list[Query] = list(queries)
        self._by_id: dict[str, Query] = {}
        for query in self._queries:
            if not query.id:
                raise IngestError("query with empty id")
            if query.id in self._by_id:
                raise IngestError(f"duplicate query id {query.id!r}")
            self._by_id[query.id] = query

    def __len__(self) -> int:
        return len(self._queries)

    def __iter__(self) -> Iterator[Query]:
        return iter(self._queries)

    def get(self, query_id: str) -> Query:
        return self._by_id[query_id]

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._by_id


class Qrels:
    """Graded relevance judgments keyed by (query_id, doc_id).

    Grade 0 rows are retained: they are explicit negatives, and graded
    metrics treat them the same as unjudged documents.
    """

    def __init__(self, entries: dict[tuple[str, str], int] | None = None):
        self._entries: dict[tuple[str, str], int] = {}
        self._by_query: dict[str, dict[str, int]] = {}
        if entries:
            for (qid, did), grade in entries.items():
                self.set(qid, did, grade)

    def set(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise IngestError(
                f"negative relevance grade {grade} for ({query_id!r}, {doc_id!r})"
            )
        self._entries[(query_id, doc_id)] = grade
        self._by_query.setdefault(query_id, {})[doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._entries.get((query_id, doc_id), 0)

    def for_query(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def has_positive(self, query_id: str) -> bool:
        return any(g > 0 for g in self._by_query.get(query_id, {}).values())

    def query_ids(self) -> set[str]:
        return set(self._by_query)

    def doc_ids(self) -> set[str]:
        return {did for _, did in self._entries}

    def items(self) -> Iterator[tuple[tuple[str, str], int]]:
        return iter(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._entries


def _coerce_id(value, path: Path, lineno: int, field: str) -> str:
    if isinstance(value, str):
        out = value
    elif isinstance(value, int):
        out = str(value)
    else:
        raise IngestError(f"{path}:{lineno}: field {field!r} must be a string")
    if not out:
        raise IngestError(f"{path}:{lineno}: field {field!r} is empty")
    return out


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: malformed JSON line: {exc}") from None
            if not isinstance(obj, dict):
                raise IngestError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def load_corpus(path: str | Path) -> Corpus:
    """Read a JSON-lines corpus (``_id``, ``text``, optional ``title``).

    Lines are ingested in file order; the parse step streams line by line.
    Raises :class:`IngestError` with the offending line number for malformed
    lines, missing fields, or duplicate ids.
    """
    path = Path(path)
    documents: list[Document] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if "_id" not in obj:
            raise IngestError(f"{path}:{lineno}: missing field '_id'")
        if "text" not in obj:
            raise IngestError(f"{path}:{lineno}: missing field 'text'")
        doc_id = _coerce_id(obj["_id"], path, lineno, "_id")
        if doc_id in seen:
            raise IngestError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        text = obj["text"]
        title = obj.get("title", "")
        if not isinstance(text, str):
            raise IngestError(f"{path}:{lineno}: field 'text' must be a string")
        if not isinstance(title, str):
            raise IngestError(f"{path}:{lineno}: field 'title' must be a string")
        documents.append(make_document(doc_id, title, text))
    return Corpus(documents)


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize a corpus back to JSON-lines; inverse of :func:`load_corpus`."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus:
            record = {"_id": doc.id, "title": doc.title, "text": doc.body}
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def load_queries(path: str | Path) -> QuerySet:
    """Read a JSON-lines query file (``_id``, ``text``), preserving order."""
    path = Path(path)
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        if "_id" not in obj:
            raise IngestError(f"{path}:{lineno}: missing field '_id'")
        if "text" not in obj:
            raise IngestError(f"{path}:{lineno}: missing field 'text'")
        qid = _coerce_id(obj["_id"], path, lineno, "_id")
        if qid in seen:
            raise IngestError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        text = obj["text"]
        if not isinstance(text, str):
            raise IngestError(f"{path}:{lineno}: field 'text' must be a string")
        queries.append(Query(id=qid, text=text))
    return QuerySet(queries)


def write_queries(queries: QuerySet, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for query in queries:
            record = {"_id": query.id, "text": query.text}
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


_QRELS_HEADER = ("query-id", "corpus-id", "score")


def load_qrels(path: str | Path) -> Qrels:
    """Read tab-separated qrels with a ``query-id corpus-id score`` header.

    A repeated (query, doc) pair keeps the last-seen grade and logs a
    warning. Non-integer grades are an error.
    """
    path = Path(path)
    qrels = Qrels()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if lineno == 1 and tuple(p.strip() for p in parts[:3]) == _QRELS_HEADER:
                continue
            if len(parts) != 3:
                raise IngestError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(parts)}"
                )
            qid, did, raw_grade = (p.strip() for p in parts)
            if not qid or not did:
                raise IngestError(f"{path}:{lineno}: empty query or document id")
            try:
                grade = int(raw_grade)
            except ValueError:
                raise IngestError(
                    f"{path}:{lineno}: non-integer relevance grade {raw_grade!r}"
                ) from None
            if grade < 0:
                raise IngestError(f"{path}:{lineno}: negative relevance grade {grade}")
            if (qid, did) in qrels:
                logger.warning(
                    "%s:%d: repeated qrels pair (%s, %s); keeping last-seen grade %d",
                    path, lineno, qid, did, grade,
                )
            qrels.set(qid, did, grade)
    return qrels


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("query-id\tcorpus-id\tscore\n")
        for (qid, did), grade in sorted(qrels.items()):
            fh.write(f"{qid}\t{did}\t{grade}\n")


def qrels_coverage(
    qrels: Qrels, queries: QuerySet | None = None, corpus: Corpus | None = None
) -> tuple[set[str], set[str]]:
    """Return (unknown query ids, unknown doc ids) referenced by the qrels.

    Unresolvable ids are reported, never fatal: callers decide whether to
    warn or ignore.
    """
    missing_queries: set[str] = set()
    missing_docs: set[str] = set()
    if queries is not None:
        missing_queries = {qid for qid in qrels.query_ids() if qid not in queries}
    if corpus is not None:
        missing_docs = {did for did in qrels.doc_ids() if did not in corpus}
    return missing_queries, missing_docs
