"""Out-of-process scorer backends reached over the JSON-lines protocol.

An endpoint spec is one of:

    "host:port"           TCP (shorthand)
    "tcp:host:port"       TCP
    "stdio:CMD ARG ..."   spawn CMD and talk over its stdin/stdout

Each scorer owns one connection and serializes request/reply exchanges on
it, so a single instance is safe to share between threads; use ``clone()``
to open extra connections when real concurrency is wanted. Batches default
to 32 payloads per request and time out after 30 seconds each; a timeout
or short/invalid reply fails the call, there are no retries.
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import subprocess
import threading
import time
from itertools import count
from typing import Sequence

from . import protocol
from .corpus import Document, Query
from .errors import ConfigError, ProtocolError, ScorerBackendError
from .scorers import (
    PairwiseScorer,
    PointwiseScorer,
    _CountsInferences,
    truncate_for_pair,
    truncate_for_pointwise,
)

DEFAULT_BATCH_SIZE = 32
DEFAULT_TIMEOUT = 30.0


def parse_endpoint(spec: str) -> tuple:
    """Split an endpoint spec into ("tcp", host, port) or ("stdio", argv)."""
    if spec.startswith("stdio:"):
        command = spec[len("stdio:") :].strip()
        if not command:
            raise ConfigError(f"empty stdio command in endpoint {spec!r}")
        return ("stdio", shlex.split(command))
    rest = spec[len("tcp:") :] if spec.startswith("tcp:") else spec
    host, sep, port_text = rest.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"endpoint {spec!r} is not host:port, tcp:host:port, or stdio:CMD")
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigError(f"endpoint {spec!r} has non-integer port {port_text!r}") from None
    if not 0 < port < 65536:
        raise ConfigError(f"endpoint {spec!r} port out of range")
    return ("tcp", host, port)


class _Channel:
    """One JSON-lines connection with deadline-based line reads."""

    def __init__(self):
        self._buffer = bytearray()

    def send(self, message: dict) -> None:
        try:
            self._write(protocol.encode(message))
        except OSError as exc:
            raise ScorerBackendError(f"send to scorer backend failed: {exc}") from None

    def recv(self, timeout: float) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = bytes(self._buffer[:newline])
                del self._buffer[: newline + 1]
                return protocol.decode(line)
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ScorerBackendError(
                    f"scorer backend timed out after {timeout:g}s waiting for a reply"
                )
            chunk = self._read_chunk(remaining)
            if not chunk:
                raise ScorerBackendError("scorer backend closed the connection")
            self._buffer.extend(chunk)

    def _write(self, data: bytes) -> None:
        raise NotImplementedError

    def _read_chunk(self, timeout: float) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class _TcpChannel(_Channel):
    def __init__(self, host: str, port: int, timeout: float):
        super().__init__()
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ScorerBackendError(f"cannot connect to {host}:{port}: {exc}") from None

    def _write(self, data: bytes) -> None:
        self._sock.sendall(data)

    def _read_chunk(self, timeout: float) -> bytes:
        self._sock.settimeout(timeout)
        try:
            return self._sock.recv(65536)
        except socket.timeout:
            raise ScorerBackendError(
                f"scorer backend timed out after {timeout:g}s waiting for a reply"
            ) from None
        except OSError as exc:
            raise ScorerBackendError(f"read from scorer backend failed: {exc}") from None

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class _StdioChannel(_Channel):
    def __init__(self, argv: list[str]):
        super().__init__()
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                # stderr passes through for server-side diagnostics
            )
        except OSError as exc:
            raise ScorerBackendError(f"cannot spawn {argv[0]!r}: {exc}") from None

    def _write(self, data: bytes) -> None:
        self._proc.stdin.write(data)
        self._proc.stdin.flush()

    def _read_chunk(self, timeout: float) -> bytes:
        stdout = self._proc.stdout
        ready, _, _ = select.select([stdout], [], [], timeout)
        if not ready:
            raise ScorerBackendError(
                f"scorer backend timed out after {timeout:g}s waiting for a reply"
            )
        try:
            return os.read(stdout.fileno(), 65536)
        except OSError as exc:
            raise ScorerBackendError(f"read from scorer backend failed: {exc}") from None

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


def _open_channel(spec: str, timeout: float) -> _Channel:
    parsed = parse_endpoint(spec)
    if parsed[0] == "tcp":
        return _TcpChannel(parsed[1], parsed[2], timeout)
    return _StdioChannel(parsed[1])


def _handshake(channel: _Channel, mode: str, timeout: float) -> dict:
    channel.send(protocol.hello(mode))
    reply = channel.recv(timeout)
    kind = reply.get("type")
    if kind == "error":
        raise ProtocolError(f"handshake rejected: {reply.get('message')}")
    if kind != "hello_ok":
        raise ProtocolError(f"expected 'hello_ok' handshake reply, got {kind!r}")
    version = reply.get("version")
    if version != protocol.PROTOCOL_VERSION:
        raise ProtocolError(
            f"protocol version mismatch: engine speaks {protocol.PROTOCOL_VERSION!r},"
            f" server speaks {version!r}"
        )
    server_mode = reply.get("mode")
    if server_mode not in (mode, "both"):
        raise ProtocolError(f"server mode {server_mode!r} cannot serve {mode!r} requests")
    limit = reply.get("max_input_tokens")
    if not isinstance(limit, int) or isinstance(limit, bool) or limit < 1:
        raise ProtocolError(f"handshake max_input_tokens invalid: {limit!r}")
    return reply


class _ExternalBase(_CountsInferences):
    """Connection, handshake, and request-id bookkeeping shared by both modes."""

    _mode: str

    def __init__(
        self,
        endpoint: str,
        max_input_tokens: int | None = None,
        batch_size: int = DEFAULT_BATCH_SIZE,
        timeout: float = DEFAULT_TIMEOUT,
        name: str | None = None,
    ):
        super().__init__()
        if batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
        if timeout <= 0:
            raise ConfigError(f"timeout must be positive, got {timeout}")
        self._endpoint = endpoint
        self._requested_limit = max_input_tokens
        self.batch_size = batch_size
        self.timeout = timeout
        self._io_lock = threading.Lock()
        self._ids = count(1)
        self._channel = _open_channel(endpoint, timeout)
        try:
            ok = _handshake(self._channel, self._mode, timeout)
        except Exception:
            self._channel.close()
            raise
        advertised = ok["max_input_tokens"]
        # engine-side truncation budget: never send more than the server takes
        self.max_input_tokens = (
            advertised if max_input_tokens is None else min(max_input_tokens, advertised)
        )
        self.name = name or f"external-{self._mode}({endpoint})"

    def _exchange(self, request: dict, reply_type: str, field: str, n: int) -> list[float]:
        with self._io_lock:
            self._channel.send(request)
            reply = self._channel.recv(self.timeout)
        protocol.expect_reply(reply, reply_type, request["id"])
        return protocol.float_list(reply, field, n)

    def clone(self):
        return type(self)(
            self._endpoint,
            max_input_tokens=self._requested_limit,
            batch_size=self.batch_size,
            timeout=self.timeout,
            name=self.name,
        )

    def close(self) -> None:
        self._channel.close()


class ExternalPointwiseScorer(_ExternalBase, PointwiseScorer):
    """Pointwise scoring forwarded to a protocol server."""

    _mode = "pointwise"

    def score_documents(self, query: Query, docs: Sequence[Document]) -> list[float]:
        docs = list(docs)
        scores: list[float] = []
        for start in range(0, len(docs), self.batch_size):
            batch = docs[start : start + self.batch_size]
            payloads = [
                truncate_for_pointwise(query.text, doc.full_text, self.max_input_tokens)
                for doc in batch
            ]
            request = protocol.score_request(next(self._ids), query.text, payloads)
            try:
                scores.extend(self._exchange(request, "scores", "scores", len(batch)))
            except ScorerBackendError as exc:
                ids = ", ".join(doc.id for doc in batch)
                raise type(exc)(f"{exc} (query {query.id!r}, docs [{ids}])") from None
            self._count(len(batch))
        return scores


class ExternalPairwiseScorer(_ExternalBase, PairwiseScorer):
    """Ordered-pair scoring forwarded to a protocol server."""

    _mode = "pairwise"

    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[Document, Document]]
    ) -> list[float]:
        pairs = list(pairs)
        probabilities: list[float] = []
        for start in range(0, len(pairs), self.batch_size):
            batch = pairs[start : start + self.batch_size]
            payloads = [
                truncate_for_pair(query.text, a.full_text, b.full_text, self.max_input_tokens)
                for a, b in batch
            ]
            request = protocol.pairs_request(next(self._ids), query.text, payloads)
            try:
                values = self._exchange(request, "pair_scores", "p", len(batch))
            except ScorerBackendError as exc:
                ids = ", ".join(f"({a.id},{b.id})" for a, b in batch)
                raise type(exc)(f"{exc} (query {query.id!r}, pairs [{ids}])") from None
            for value, (a, b) in zip(values, batch, strict=True):
                if not 0.0 <= value <= 1.0:
                    raise ProtocolError(
                        f"pair probability {value!r} out of [0, 1] for pair"
                        f" ({a.id!r}, {b.id!r}) of query {query.id!r}"
                    )
            probabilities.extend(values)
            self._count(len(batch))
        return probabilities


def make_external_scorer(
    endpoint: str,
    mode: str,
    max_input_tokens: int | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    timeout: float = DEFAULT_TIMEOUT,
    name: str | None = None,
):
    """Connect and handshake; returns a scorer of the requested mode."""
    if mode == "pointwise":
        cls = ExternalPointwiseScorer
    elif mode == "pairwise":
        cls = ExternalPairwiseScorer
    else:
        raise ConfigError(f"scorer mode must be 'pointwise' or 'pairwise', got {mode!r}")
    return cls(endpoint, max_input_tokens, batch_size, timeout, name)


def check_endpoint(endpoint: str, mode: str, timeout: float = DEFAULT_TIMEOUT) -> dict:
    """Health check: handshake plus one tiny scoring round trip.

    Returns the handshake info and the probe scores; raises on any failure.
    """
    scorer = make_external_scorer(endpoint, mode, timeout=timeout)
    try:
        query = Query(id="_probe", text="probe query")
        doc_a = Document(id="_a", title="", body="first probe document", token_count=3)
        doc_b = Document(id="_b", title="", body="second probe document", token_count=3)
        if mode == "pointwise":
            values = scorer.score_documents(query, [doc_a, doc_b])
        else:
            values = scorer.score_pairs(query, [(doc_a, doc_b), (doc_b, doc_a)])
        return {
            "endpoint": endpoint,
            "mode": mode,
            "max_input_tokens": scorer.max_input_tokens,
            "probe_values": values,
        }
    finally:
        scorer.close()
