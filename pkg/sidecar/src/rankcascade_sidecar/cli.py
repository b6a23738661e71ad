"""Sidecar entry point.

    rankcascade-sidecar --fake [--mode both] [--listen stdio]
    rankcascade-sidecar --model CHECKPOINT --mode pointwise --listen 127.0.0.1:0

``--listen stdio`` (the default) serves one session over stdin/stdout,
matching the engine's ``stdio:CMD`` endpoints. A host:port value starts a
TCP server and prints the bound address to stderr. Exit codes: 0 on clean
shutdown, 1 when the checkpoint cannot be loaded, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import sys

from .scoring import CrossEncoderScorer, FakeScorer, LoadError, ModelBinding
from .server import serve_stdio, serve_tcp


def parse_listen(spec: str) -> tuple:
    """"stdio", "host:port", or "tcp:host:port" -> transport tuple."""
    if spec == "stdio":
        return ("stdio",)
    rest = spec[len("tcp:") :] if spec.startswith("tcp:") else spec
    host, sep, port_text = rest.rpartition(":")
    if not sep or not host:
        raise ValueError(f"--listen must be 'stdio' or host:port, got {spec!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"--listen port is not an integer: {port_text!r}") from None
    if not 0 <= port < 65536:
        raise ValueError(f"--listen port out of range: {port}")
    return ("tcp", host, port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankcascade-sidecar",
        description="Serve a scoring model over the JSON-lines protocol.",
    )
    parser.add_argument("--model", help="cross-encoder checkpoint identifier or path")
    parser.add_argument(
        "--mode",
        choices=("pointwise", "pairwise", "both"),
        default="both",
        help="which request kinds to serve (default both)",
    )
    parser.add_argument(
        "--listen",
        default="stdio",
        help="'stdio' (default) or host:port (port 0 picks one)",
    )
    parser.add_argument(
        "--max-input-tokens",
        type=int,
        default=512,
        help="token budget per scored input (default 512)",
    )
    parser.add_argument(
        "--fake",
        action="store_true",
        help="deterministic hash scorer; no checkpoint needed",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.fake == bool(args.model):
        parser.error("exactly one of --model or --fake is required")
    if args.max_input_tokens < 1:
        parser.error(f"--max-input-tokens must be >= 1, got {args.max_input_tokens}")
    try:
        listen = parse_listen(args.listen)
    except ValueError as exc:
        parser.error(str(exc))

    binding = ModelBinding(
        model=args.model or "fake",
        mode=args.mode,
        max_input_tokens=args.max_input_tokens,
    )
    try:
        scorer = FakeScorer(binding) if args.fake else CrossEncoderScorer(binding)
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if listen[0] == "stdio":
        return serve_stdio(scorer)
    return serve_tcp(scorer, listen[1], listen[2])


if __name__ == "__main__":
    sys.exit(main())
