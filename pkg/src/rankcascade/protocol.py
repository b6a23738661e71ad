"""JSON-lines scoring protocol: message shapes and validation.

One JSON object per line, UTF-8. The engine opens with a ``hello`` carrying
the protocol version and the mode it intends to use; a conforming server
answers ``hello_ok`` with its token limit. Scoring messages echo the
request id verbatim:

    {"type": "score", "id": 7, "query": "...", "docs": ["...", "..."]}
    {"type": "scores", "id": 7, "scores": [0.12, -1.3]}

    {"type": "score_pairs", "id": 8, "query": "...", "pairs": [["a", "b"], ...]}
    {"type": "pair_scores", "id": 8, "p": [0.91, ...]}

Servers report failures as ``{"type": "error", "id": ..., "message": "..."}``
and keep the connection open.
"""

from __future__ import annotations

import json
from typing import Sequence

from .errors import ProtocolError

PROTOCOL_VERSION = "1"

MODES = ("pointwise", "pairwise")


def encode(message: dict) -> bytes:
    """Serialize one protocol message as a JSON line."""
    return (json.dumps(message, ensure_ascii=False, separators=(",", ":")) + "\n").encode(
        "utf-8"
    )


def decode(line: bytes | str) -> dict:
    """Parse one line into a message object."""
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid JSON in protocol message: {exc}") from None
    if not isinstance(message, dict):
        raise ProtocolError(
            f"protocol message must be a JSON object, got {type(message).__name__}"
        )
    return message


def hello(mode: str) -> dict:
    return {"type": "hello", "version": PROTOCOL_VERSION, "mode": mode}


def hello_ok(mode: str, max_input_tokens: int) -> dict:
    return {
        "type": "hello_ok",
        "version": PROTOCOL_VERSION,
        "mode": mode,
        "max_input_tokens": max_input_tokens,
    }


def score_request(request_id: int, query: str, docs: Sequence[str]) -> dict:
    return {"type": "score", "id": request_id, "query": query, "docs": list(docs)}


def pairs_request(
    request_id: int, query: str, pairs: Sequence[tuple[str, str]]
) -> dict:
    return {
        "type": "score_pairs",
        "id": request_id,
        "query": query,
        "pairs": [[a, b] for a, b in pairs],
    }


def scores_reply(request_id: int, scores: Sequence[float]) -> dict:
    return {"type": "scores", "id": request_id, "scores": [float(s) for s in scores]}


def pair_scores_reply(request_id: int, p: Sequence[float]) -> dict:
    return {"type": "pair_scores", "id": request_id, "p": [float(v) for v in p]}


def error_reply(request_id, message: str) -> dict:
    return {"type": "error", "id": request_id, "message": message}


def expect_reply(message: dict, expected_type: str, expected_id) -> dict:
    """Check reply type and id echo; surfaces server-side error replies."""
    kind = message.get("type")
    if kind == "error":
        raise ProtocolError(
            f"server error for request {message.get('id')!r}: {message.get('message')}"
        )
    if kind != expected_type:
        raise ProtocolError(f"expected {expected_type!r} reply, got {kind!r}")
    if message.get("id") != expected_id:
        raise ProtocolError(
            f"reply id {message.get('id')!r} does not match request id {expected_id!r}"
        )
    return message


def float_list(message: dict, field: str, expected_len: int) -> list[float]:
    """Extract an order-aligned numeric list, enforcing the expected length."""
    values = message.get(field)
    if not isinstance(values, list):
        raise ProtocolError(f"reply field {field!r} must be a list")
    if len(values) != expected_len:
        raise ProtocolError(
            f"reply field {field!r} has {len(values)} values, expected {expected_len}"
        )
    out = []
    for i, value in enumerate(values):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ProtocolError(f"reply field {field!r}[{i}] is not a number: {value!r}")
        out.append(float(value))
    return out
