"""Scoring sidecar: hosts a model behind the JSON-lines protocol."""

from .scoring import CrossEncoderScorer, FakeScorer, LoadError, ModelBinding
from .server import Session, serve_stdio, serve_tcp
from .wire import PROTOCOL_VERSION, WireError

__version__ = "0.1.0"

__all__ = [
    "CrossEncoderScorer",
    "FakeScorer",
    "LoadError",
    "ModelBinding",
    "PROTOCOL_VERSION",
    "Session",
    "WireError",
    "serve_stdio",
    "serve_tcp",
    "__version__",
]
