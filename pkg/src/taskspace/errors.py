"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code (see cli.py).
"""


class TaskspaceError(Exception):
    """Base class for all package errors."""


class ConfigError(TaskspaceError):
    """Invalid configuration or arguments (exit code 2)."""


class ContractViolation(TaskspaceError):
    """A documented precondition was violated by the caller (exit code 2)."""


class NumericError(TaskspaceError):
    """NaN/Inf or other numeric failure during computation (exit code 3)."""


class TransportError(TaskspaceError):
    """External oracle process died, timed out, or the channel broke (exit code 4)."""


class ProtocolError(TaskspaceError):
    """Malformed message on the oracle wire protocol (exit code 4)."""


class IncompatibleSpaceError(TaskspaceError):
    """Embeddings from different methods or surrogate fingerprints (exit code 5)."""


class DegenerateEmbeddingError(TaskspaceError):
    """An all-zero embedding where a direction is required (exit code 5)."""


class DegeneratePoolError(TaskspaceError):
    """Pool construction produced no usable entries (exit code 2)."""
