"""Zero-dependency Python SDK for the Bhakti vector database (protocol v1)."""

from .client import (
    BhaktiClient,
    BhaktiClientError,
    ConnectionLost,
    ProtocolError,
    ServerException,
    Timeout,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BhaktiClient",
    "BhaktiClientError",
    "ConnectionLost",
    "ProtocolError",
    "ServerException",
    "Timeout",
    "ValidationError",
]
