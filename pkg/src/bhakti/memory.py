"""Dialogue memory: weighted query/answer embedding, storage and recall.

A conversation turn (query, answer) is embedded twice and stored under the
weighted combination ``V = w_q * embed(query) + w_a * embed(answer)``, so
the heavier-weighted side pulls the stored vector toward its direction and
dominates recall ranking. Recall filters to one (user_id, bot_id) pair via
the DSL and formats hits as prompt-ready template strings.

The production embedding model is out of scope: callers plug in anything
satisfying :class:`Embedder`. ``toy_embedder`` gives a deterministic,
collision-resistant stand-in used throughout the tests; ``HttpEmbedder``
adapts a user-provided HTTP endpoint.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Callable, Protocol, runtime_checkable

import numpy as np

from . import dsl
from .client import BhaktiClient
from .engine import Document, Engine
from .errors import (
    ConnectionLost,
    DuplicateMemory,
    ServerError,
    StoreUnavailable,
    Timeout,
    ValidationError,
    VectorExists,
)
from .metrics import Vector, as_vector

#: every dialogue field gets an inverted index at memorize time
MEMORY_FIELDS = ("query", "answer", "user_id", "bot_id", "timestamp")

_MULTI_NEWLINE = re.compile(r"\n{2,}")


@dataclass(frozen=True)
class DialogueRecord:
    """One stored conversation turn."""

    query: str
    answer: str
    user_id: str
    bot_id: str
    timestamp: float

    def to_fields(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "answer": self.answer,
            "user_id": self.user_id,
            "bot_id": self.bot_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_fields(cls, fields: dict[str, Any]) -> "DialogueRecord":
        return cls(
            query=str(fields["query"]),
            answer=str(fields["answer"]),
            user_id=str(fields["user_id"]),
            bot_id=str(fields["bot_id"]),
            timestamp=float(fields["timestamp"]),
        )


@dataclass(frozen=True)
class Weights:
    """Relative pull of query vs answer in the stored vector."""

    w_q: float = 0.5
    w_a: float = 0.5

    def __post_init__(self):
        if self.w_q < 0 or self.w_a < 0:
            raise ValidationError("weights must be non-negative")
        if self.w_q + self.w_a <= 0:
            raise ValidationError("at least one weight must be positive")


DEFAULT_WEIGHTS = Weights()


@runtime_checkable
class Embedder(Protocol):
    """Deterministic text -> fixed-dim vector."""

    dim: int

    def embed(self, text: str) -> Vector: ...


class ToyEmbedder:
    """Hash-seeded unit vectors: deterministic, dimension-stable, and with
    negligible collision probability for distinct short texts."""

    def __init__(self, dim: int):
        if dim < 2:
            raise ValidationError("toy embedder needs dim >= 2")
        self.dim = dim

    def embed(self, text: str) -> Vector:
        seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
        raw = np.random.default_rng(seed).standard_normal(self.dim)
        return as_vector(raw / np.linalg.norm(raw))


def toy_embedder(dim: int) -> ToyEmbedder:
    return ToyEmbedder(dim)


class HttpEmbedder:
    """POSTs ``{"text": ...}`` to an embedding endpoint, expects ``{"vector": [...]}``."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout
        self.dim = 0  # learned from the first response

    def embed(self, text: str) -> Vector:
        body = json.dumps({"text": text}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        with urllib.request.urlopen(request, timeout=self.timeout) as resp:
            vec = as_vector(json.loads(resp.read())["vector"])
        if self.dim == 0:
            self.dim = int(vec.shape[0])
        return vec


# --- store adapters: the memory layer runs on an engine or a remote client ---

class _EngineStore:
    def __init__(self, engine: Engine):
        self.engine = engine

    def add(self, vector: Vector, fields: dict[str, Any]) -> None:
        self.engine.create(vector, fields, indices=MEMORY_FIELDS)

    def search(self, vector: Vector, metric: str, k: int, query: str) -> list[tuple[Document, float]]:
        return self.engine.knn_search(vector, metric, k, dsl.parse(query))


class _ClientStore:
    def __init__(self, client: BhaktiClient):
        self.client = client

    def add(self, vector: Vector, fields: dict[str, Any]) -> None:
        self.client.create_doc(vector, fields, indices=MEMORY_FIELDS)

    def search(self, vector: Vector, metric: str, k: int, query: str) -> list[tuple[Document, float]]:
        return self.client.knn(vector, metric, k, query=query)


def _as_store(store: Any):
    if isinstance(store, Engine):
        return _EngineStore(store)
    if isinstance(store, BhaktiClient):
        return _ClientStore(store)
    if hasattr(store, "add") and hasattr(store, "search"):
        return store
    raise TypeError(f"not a usable memory store: {store!r}")


def normalize_answer(answer: str) -> str:
    """Collapse runs of 2+ newlines to one."""
    return _MULTI_NEWLINE.sub("\n", answer)


def weighted_embedding(v_q: Vector, v_a: Vector, weights: Weights) -> Vector:
    return as_vector(weights.w_q * v_q + weights.w_a * v_a)


def memorize_conversation(
    query: str,
    answer: str,
    user_id: str,
    bot_id: str,
    embedder: Embedder,
    store: Any,
    weights: Weights = DEFAULT_WEIGHTS,
    clock: Callable[[], float] = time.time,
) -> tuple[DialogueRecord, Vector]:
    """Embed and store one conversation turn; returns the record and its vector.

    Raises DuplicateMemory when an identical weighted vector is already
    stored (the vector key is semantic, so an identical q/a/weights triple
    is an honest uniqueness collision, never silently dropped).
    """
    if not query:
        raise ValidationError("query must be non-empty")
    answer = normalize_answer(answer)
    v_q = embedder.embed(query)
    v_a = embedder.embed(answer)
    vector = weighted_embedding(v_q, v_a, weights)
    timestamp = float(clock())
    if timestamp <= 0:
        raise ValidationError("clock must yield positive timestamps")
    record = DialogueRecord(query, answer, user_id, bot_id, timestamp)
    try:
        _as_store(store).add(vector, record.to_fields())
    except VectorExists as exc:
        raise DuplicateMemory(f"identical weighted vector already stored: {exc.detail}") from exc
    except ServerError as exc:
        if exc.message.startswith("VectorExists"):
            raise DuplicateMemory(exc.message) from exc
        raise
    except (ConnectionLost, Timeout, OSError) as exc:
        raise StoreUnavailable(str(exc)) from exc
    return record, vector


def pair_filter(user_id: str, bot_id: str, extra: str | None = None) -> str:
    """DSL conjunction isolating one conversation pair."""
    base = f"user_id == {dsl.quote_string(user_id)} && bot_id == {dsl.quote_string(bot_id)}"
    return base if extra is None else f"{base} && ({extra})"


def format_template(record: DialogueRecord) -> str:
    stamp = datetime.fromtimestamp(record.timestamp, tz=timezone.utc).isoformat()
    return f"[{stamp}] Q: {record.query} | A: {record.answer}"


def parse_template(template: str) -> DialogueRecord | None:
    """Inverse of :func:`format_template` (splits on the first ' | A: ';
    a query containing that literal separator will not round-trip)."""
    match = re.match(r"\[([^\]]+)\] Q: (.*)$", template, re.DOTALL)
    if match is None:
        return None
    stamp, rest = match.groups()
    sep = rest.find(" | A: ")
    if sep < 0:
        return None
    return DialogueRecord(
        query=rest[:sep],
        answer=rest[sep + len(" | A: "):],
        user_id="",
        bot_id="",
        timestamp=datetime.fromisoformat(stamp).timestamp(),
    )


def recall_memories_templated(
    query: str,
    k: int,
    metric: str,
    user_id: str,
    bot_id: str,
    embedder: Embedder,
    store: Any,
    extra_filter: str | None = None,
) -> list[str]:
    """Top-k memories of one (user, bot) pair, as template strings in
    ascending-distance order; empty list when nothing matches."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    vector = embedder.embed(query)
    filter_text = pair_filter(user_id, bot_id, extra_filter)
    try:
        hits = _as_store(store).search(vector, metric, k, filter_text)
    except (ConnectionLost, Timeout, OSError) as exc:
        raise StoreUnavailable(str(exc)) from exc
    return [format_template(DialogueRecord.from_fields(doc.fields)) for doc, _ in hits]


def recall_records(
    query: str,
    k: int,
    metric: str,
    user_id: str,
    bot_id: str,
    embedder: Embedder,
    store: Any,
    extra_filter: str | None = None,
) -> list[tuple[DialogueRecord, float]]:
    """Like :func:`recall_memories_templated` but keeps records and distances."""
    if k < 1:
        raise ValidationError("k must be at least 1")
    vector = embedder.embed(query)
    filter_text = pair_filter(user_id, bot_id, extra_filter)
    try:
        hits = _as_store(store).search(vector, metric, k, filter_text)
    except (ConnectionLost, Timeout, OSError) as exc:
        raise StoreUnavailable(str(exc)) from exc
    return [(DialogueRecord.from_fields(doc.fields), dist) for doc, dist in hits]
