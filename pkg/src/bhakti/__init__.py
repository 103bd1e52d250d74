"""Bhakti: a lightweight vector database with exact k-NN search, DSL
pre-filtering, snapshot persistence, a JSON wire protocol, and a
dialogue-memory layer."""

from . import bench, client, dsl, engine, errors, memory, metrics, pipeline, server, wire
from .client import BhaktiClient
from .engine import Document, Engine
from .memory import DialogueRecord, Weights, memorize_conversation, recall_memories_templated, toy_embedder
from .metrics import (
    METRIC_NAMES,
    DatasetStats,
    as_vector,
    chebyshev_distance,
    compute_stats,
    cosine_distance,
    euclidean_distance,
    euclidean_l2_distance,
    standardized_euclidean_distance,
)
from .server import BhaktiServer, ServerConfig

__version__ = "0.1.0"

__all__ = [
    "BhaktiClient",
    "BhaktiServer",
    "DatasetStats",
    "DialogueRecord",
    "Document",
    "Engine",
    "METRIC_NAMES",
    "ServerConfig",
    "Weights",
    "as_vector",
    "bench",
    "chebyshev_distance",
    "client",
    "compute_stats",
    "cosine_distance",
    "dsl",
    "engine",
    "errors",
    "euclidean_distance",
    "euclidean_l2_distance",
    "memorize_conversation",
    "memory",
    "metrics",
    "pipeline",
    "recall_memories_templated",
    "server",
    "standardized_euclidean_distance",
    "toy_embedder",
    "wire",
]
