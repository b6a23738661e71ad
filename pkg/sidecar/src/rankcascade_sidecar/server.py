"""Serve loop: one scorer behind the JSON-lines protocol, stdio or TCP.

A session requires a successful handshake before scoring. Malformed lines
and scoring failures produce error replies and keep the connection open;
only transport EOF ends a session. Inference is serialized process-wide so
a single model worker stays deterministic under concurrent connections.
"""

from __future__ import annotations

import socketserver
import sys
import threading

from . import wire


class Session:
    """Protocol state machine for one connection, transport-agnostic."""

    def __init__(self, scorer, inference_lock: threading.Lock | None = None):
        self._scorer = scorer
        self._lock = inference_lock or threading.Lock()
        self._ready = False

    def handle_line(self, line: bytes) -> bytes | None:
        """Reply line for one request line; None for blank input."""
        if not line.strip():
            return None
        try:
            message = wire.decode(line)
        except wire.WireError as exc:
            return wire.encode(wire.error_reply(None, str(exc)))
        kind = message.get("type")
        request_id = message.get("id")
        try:
            if kind == "hello":
                return self._handle_hello(message)
            if kind == "score":
                return self._handle_score(message)
            if kind == "score_pairs":
                return self._handle_pairs(message)
            raise wire.WireError(f"unknown message type {kind!r}")
        except wire.WireError as exc:
            return wire.encode(wire.error_reply(request_id, str(exc)))
        except Exception as exc:  # scoring failure: report, stay open
            return wire.encode(wire.error_reply(request_id, f"scoring failed: {exc}"))

    def _served_mode(self) -> str:
        return self._scorer.binding.mode

    def _check_mode(self, requested: str) -> None:
        served = self._served_mode()
        if served != "both" and requested != served:
            raise wire.WireError(f"this server scores {served}, not {requested}")

    def _check_ready(self) -> None:
        if not self._ready:
            raise wire.WireError("handshake required before scoring")

    def _handle_hello(self, message: dict) -> bytes:
        requested = wire.parse_hello(message)
        self._check_mode(requested)
        self._ready = True
        return wire.encode(
            wire.hello_ok(self._served_mode(), self._scorer.max_input_tokens)
        )

    def _handle_score(self, message: dict) -> bytes:
        self._check_ready()
        self._check_mode("pointwise")
        request_id, query, docs = wire.parse_score_request(message)
        with self._lock:
            scores = self._scorer.score_documents(query, docs)
        return wire.encode(wire.scores_reply(request_id, scores))

    def _handle_pairs(self, message: dict) -> bytes:
        self._check_ready()
        self._check_mode("pairwise")
        request_id, query, pairs = wire.parse_pairs_request(message)
        with self._lock:
            p = self._scorer.score_pairs(query, pairs)
        return wire.encode(wire.pair_scores_reply(request_id, p))


def serve_stdio(scorer) -> int:
    """Single session over stdin/stdout; returns when the peer closes."""
    session = Session(scorer)
    out = sys.stdout.buffer
    for line in sys.stdin.buffer:
        reply = session.handle_line(line)
        if reply is not None:
            out.write(reply)
            out.flush()
    return 0


class _TcpHandler(socketserver.StreamRequestHandler):
    def handle(self):
        session = Session(self.server.scorer, self.server.inference_lock)
        for line in self.rfile:
            reply = session.handle_line(line)
            if reply is not None:
                self.wfile.write(reply)
                self.wfile.flush()


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def serve_tcp(scorer, host: str, port: int) -> int:
    """Threaded TCP server; prints the bound address to stderr (port 0
    binds an ephemeral port). Runs until interrupted."""
    with _TcpServer((host, port), _TcpHandler) as server:
        server.scorer = scorer
        server.inference_lock = threading.Lock()
        bound_host, bound_port = server.server_address[:2]
        print(f"listening on {bound_host}:{bound_port}", file=sys.stderr, flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0
