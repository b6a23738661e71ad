"""Server-side view of the JSON-lines scoring protocol.

One JSON object per line, UTF-8. A client opens with ``hello`` naming the
protocol version and the mode it wants; the server answers ``hello_ok``
with the mode it serves and its token limit. Scoring requests echo their
``id`` verbatim in the reply:

    {"type": "score", "id": 7, "query": "...", "docs": ["...", "..."]}
    {"type": "scores", "id": 7, "scores": [0.12, -1.3]}

    {"type": "score_pairs", "id": 8, "query": "...", "pairs": [["a", "b"], ...]}
    {"type": "pair_scores", "id": 8, "p": [0.91, ...]}

Failures become ``{"type": "error", "id": ..., "message": "..."}`` and the
connection stays open. This module is deliberately self-contained: the
sidecar speaks to the engine only across the wire, so it carries its own
copy of the message shapes.
"""

from __future__ import annotations

import json
from typing import Sequence

PROTOCOL_VERSION = "1"

MODES = ("pointwise", "pairwise", "both")


class WireError(Exception):
    """A line that cannot be understood as a protocol message."""


def encode(message: dict) -> bytes:
    return (json.dumps(message, ensure_ascii=False, separators=(",", ":")) + "\n").encode(
        "utf-8"
    )


def decode(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"invalid JSON: {exc}") from None
    if not isinstance(message, dict):
        raise WireError(f"message must be a JSON object, got {type(message).__name__}")
    return message


def hello_ok(mode: str, max_input_tokens: int) -> dict:
    return {
        "type": "hello_ok",
        "version": PROTOCOL_VERSION,
        "mode": mode,
        "max_input_tokens": max_input_tokens,
    }


def scores_reply(request_id, scores: Sequence[float]) -> dict:
    return {"type": "scores", "id": request_id, "scores": [float(s) for s in scores]}


def pair_scores_reply(request_id, p: Sequence[float]) -> dict:
    return {"type": "pair_scores", "id": request_id, "p": [float(v) for v in p]}


def error_reply(request_id, message: str) -> dict:
    return {"type": "error", "id": request_id, "message": message}


def parse_hello(message: dict) -> str:
    """Validate a hello and return the mode the client asks for."""
    version = message.get("version")
    if version != PROTOCOL_VERSION:
        raise WireError(
            f"unsupported protocol version {version!r}, this server speaks {PROTOCOL_VERSION!r}"
        )
    mode = message.get("mode")
    if mode not in ("pointwise", "pairwise"):
        raise WireError(f"hello mode must be 'pointwise' or 'pairwise', got {mode!r}")
    return mode


def _require_id(message: dict):
    if "id" not in message:
        raise WireError("request is missing an 'id'")
    return message["id"]


def _require_query(message: dict) -> str:
    query = message.get("query")
    if not isinstance(query, str):
        raise WireError(f"request 'query' must be a string, got {type(query).__name__}")
    return query


def parse_score_request(message: dict) -> tuple[object, str, list[str]]:
    """Validate a pointwise request; returns (id, query, docs)."""
    request_id = _require_id(message)
    query = _require_query(message)
    docs = message.get("docs")
    if not isinstance(docs, list) or not all(isinstance(d, str) for d in docs):
        raise WireError("request 'docs' must be a list of strings")
    return request_id, query, docs


def parse_pairs_request(message: dict) -> tuple[object, str, list[tuple[str, str]]]:
    """Validate a pairwise request; returns (id, query, pairs)."""
    request_id = _require_id(message)
    query = _require_query(message)
    raw = message.get("pairs")
    if not isinstance(raw, list):
        raise WireError("request 'pairs' must be a list of [docA, docB] pairs")
    pairs = []
    for i, entry in enumerate(raw):
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not all(isinstance(text, str) for text in entry)
        ):
            raise WireError(f"pair {i} must be a [docA, docB] pair of strings")
        pairs.append((entry[0], entry[1]))
    return request_id, query, pairs
