"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems -> 1, configuration
problems -> 2, scorer backend problems -> 3.
"""


class RankCascadeError(Exception):
    """Base class for all package-specific errors."""


class IngestError(RankCascadeError):
    """Malformed or inconsistent input data (corpus, queries, qrels, snapshots)."""


class ConfigError(RankCascadeError):
    """Invalid pipeline configuration or unresolvable scorer binding."""


class ScorerBackendError(RankCascadeError):
    """A scorer backend failed (unreachable endpoint, bad reply, timeout)."""


class ProtocolError(ScorerBackendError):
    """The remote scorer violated the wire protocol (alignment, range, framing)."""
