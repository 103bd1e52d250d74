"""Dipamkara, the storage engine: a thread-safe document store keyed by
unique vectors, with inverted indices, exact k-NN search, DSL pre-filtering,
and atomic snapshot persistence.

Data structures:
  * document storage   -- id -> field map (in memory, or streamed from the
    snapshot file when ``cached=False``);
  * vector index       -- canonical vector string -> document id;
  * inverted indices   -- field name -> {vector string -> id}, restricted to
    documents possessing that field;
  * auto-increment ids -- never reused, monotone across save/load.

Concurrency: every public operation is linearizable under a single
writer-exclusive / multi-reader-shared lock. Snapshot writing copies state
under the read lock and serializes outside it, so it never blocks readers
beyond the copy instant.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

import numpy as np

from . import dsl
from .errors import (
    CorruptSnapshot,
    DimensionMismatch,
    InvalidFieldValue,
    MissingFiles,
    SnapshotIOError,
    VectorExists,
    VectorNotFound,
    ZeroVector,
)
from .metrics import METRIC_NAMES, DatasetStats, Vector, as_vector, compute_stats, distance

FORMAT_VERSION = 1
SNAPSHOT_FILES = ("documents.jsonl", "indices.json", "meta.json")
DEFAULT_FLUSH_INTERVAL = 1.0


# --- vector key codec ---

def _format_component(x: float) -> str:
    s = repr(float(x))  # shortest decimal that round-trips exactly
    return s[:-2] if s.endswith(".0") else s


def encode_key(vector: Vector) -> str:
    """Canonical string form of a vector, e.g. ``"1,0.5,-2.25"``.

    Components use the shortest round-tripping decimal form, so
    ``decode_key(encode_key(v))`` is bit-exact and two vectors share a key
    iff they are elementwise bit-equal.
    """
    return ",".join(_format_component(x) for x in vector)


def decode_key(key: str) -> Vector:
    """Inverse of :func:`encode_key`."""
    return as_vector([float(part) for part in key.split(",")])


# --- reader/writer lock ---

class RWLock:
    """Multi-reader / single-writer lock with writer preference."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._writers_waiting = 0

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer or self._writers_waiting:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            self._writers_waiting += 1
            while self._writer or self._readers > 0:
                self._cond.wait()
            self._writers_waiting -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


# --- documents ---

ScalarValue = dsl.ScalarValue
FieldMap = dict[str, ScalarValue]


@dataclass(frozen=True, eq=False)
class Document:
    """A stored document: auto-increment id, unique vector, flat field map."""

    id: int
    vector: Vector
    fields: FieldMap

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Document):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.vector, other.vector)
            and self.fields == other.fields
        )

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "vector": [float(x) for x in self.vector],
            "fields": dict(self.fields),
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping[str, Any]) -> "Document":
        return cls(
            id=int(obj["id"]),
            vector=as_vector(obj["vector"]),
            fields=_validate_fields(obj["fields"]),
        )


def _validate_scalar(value: Any) -> ScalarValue:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return float(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise InvalidFieldValue("field values must be finite numbers")
        return value
    raise InvalidFieldValue(
        f"field values must be string, number or boolean, got {type(value).__name__}"
    )


def _validate_fields(fields: Mapping[str, Any]) -> FieldMap:
    out: FieldMap = {}
    for name, value in fields.items():
        if not isinstance(name, str) or not name:
            raise InvalidFieldValue("field names must be non-empty strings")
        out[name] = _validate_scalar(value)
    return out


@dataclass(frozen=True)
class OpRecord:
    """One committed mutation; ``seq`` is the engine-wide commit order."""

    seq: int
    cmd: str
    param: dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "cmd": self.cmd, "param": self.param},
            ensure_ascii=False,
            separators=(",", ":"),
        )


# --- uncached field storage ---

class _LazyFields:
    """Field maps streamed from a backing documents.jsonl.

    Unsaved mutations live in ``overlay`` (which always wins); ``offsets``
    maps ids to byte offsets of their line in the backing file.
    """

    def __init__(self):
        self.backing: Path | None = None
        self.offsets: dict[int, int] = {}
        self.overlay: dict[int, FieldMap] = {}

    def get(self, doc_id: int) -> FieldMap:
        hit = self.overlay.get(doc_id)
        if hit is not None:
            return hit
        offset = self.offsets[doc_id]
        assert self.backing is not None
        with open(self.backing, "rb") as fh:
            fh.seek(offset)
            line = fh.readline()
        return _validate_fields(json.loads(line)["fields"])


class Engine:
    """See module docstring. Construct empty, or restore via :meth:`load`."""

    def __init__(
        self,
        cached: bool = True,
        home: str | Path | None = None,
        on_commit: Callable[[OpRecord], None] | None = None,
    ):
        self._lock = RWLock()
        self._save_lock = threading.Lock()  # serializes concurrent snapshots
        self._cached = cached
        self._home = None if home is None else Path(home)
        self._fields: dict[int, FieldMap] = {}
        self._lazy = _LazyFields()
        self._vectors: dict[int, Vector] = {}
        self._keys: dict[int, str] = {}
        self._vector_index: dict[str, int] = {}
        self._inverted: dict[str, dict[str, int]] = {}
        self._next_id = 0
        self._dim: int | None = None
        self._dirty = False
        self._version = 0  # bumped on every mutation; guards snapshot swaps
        self._stats_cache: DatasetStats | None = None
        self._commit_seq = 0
        # invoked under the write lock; must not reenter the engine
        self._on_commit = on_commit
        self._flusher: threading.Thread | None = None
        self._flusher_stop = threading.Event()

    # --- properties ---

    @property
    def cached(self) -> bool:
        return self._cached

    @property
    def home(self) -> Path | None:
        """Default snapshot directory (adopted from load / first explicit save)."""
        return self._home

    @property
    def dim(self) -> int | None:
        return self._dim

    @property
    def next_id(self) -> int:
        return self._next_id

    def __len__(self) -> int:
        with self._lock.read():
            return len(self._vectors)

    # --- internal helpers (caller holds a lock) ---

    def _get_fields(self, doc_id: int) -> FieldMap:
        if self._cached:
            return self._fields[doc_id]
        return self._lazy.get(doc_id)

    def _put_fields(self, doc_id: int, fields: FieldMap) -> None:
        if self._cached:
            self._fields[doc_id] = fields
        else:
            self._lazy.overlay[doc_id] = fields

    def _drop_fields(self, doc_id: int) -> None:
        if self._cached:
            self._fields.pop(doc_id, None)
        else:
            self._lazy.overlay.pop(doc_id, None)
            self._lazy.offsets.pop(doc_id, None)

    def _document(self, doc_id: int) -> Document:
        return Document(
            id=doc_id, vector=self._vectors[doc_id], fields=dict(self._get_fields(doc_id))
        )

    def _commit(self, cmd: str, param: dict[str, Any]) -> None:
        self._dirty = True
        self._version += 1
        self._commit_seq += 1
        if self._on_commit is not None:
            self._on_commit(OpRecord(seq=self._commit_seq, cmd=cmd, param=param))

    def _register_index(self, field: str) -> None:
        if field in self._inverted:
            return
        entries: dict[str, int] = {}
        for doc_id in self._vectors:
            if field in self._get_fields(doc_id):
                entries[self._keys[doc_id]] = doc_id
        self._inverted[field] = entries

    def _remove_id(self, doc_id: int) -> None:
        key = self._keys.pop(doc_id)
        del self._vectors[doc_id]
        del self._vector_index[key]
        self._drop_fields(doc_id)
        for entries in self._inverted.values():
            entries.pop(key, None)
        self._stats_cache = None

    def _filter_ids(self, expr: dsl.QueryExpr) -> set[int]:
        """Exact candidate set: { id : evaluate(expr, doc) }.

        Comparison leaves on indexed fields scan only index entries (documents
        missing the field can never satisfy a comparison); everything else
        falls back to a full scan. Never a semantics change.
        """
        if isinstance(expr, dsl.Cmp):
            entries = self._inverted.get(expr.field)
            pool: Iterator[int] = iter(entries.values()) if entries is not None else iter(self._vectors)
            return {i for i in pool if dsl.evaluate(expr, self._get_fields(i))}
        if isinstance(expr, dsl.Not):
            return set(self._vectors) - self._filter_ids(expr.child)
        if isinstance(expr, dsl.And):
            result: set[int] | None = None
            for child in expr.children:
                ids = self._filter_ids(child)
                result = ids if result is None else result & ids
                if not result:
                    return set()
            return result if result is not None else set(self._vectors)
        if isinstance(expr, dsl.Or):
            result = set()
            for child in expr.children:
                result |= self._filter_ids(child)
            return result
        raise TypeError(f"not a query expression: {expr!r}")

    def _stats(self) -> DatasetStats:
        # benign race: concurrent readers may compute identical stats twice
        if self._stats_cache is None:
            self._stats_cache = compute_stats(self._vectors.values())
        return self._stats_cache

    # --- operations ---

    def create(
        self,
        vector: Sequence[float] | Vector,
        fields: Mapping[str, Any] | None = None,
        indices: Sequence[str] = (),
    ) -> Document:
        """Store a new document under a unique vector.

        Any field names in ``indices`` are registered as inverted indices
        (backfilled over existing documents) before the insert.
        """
        vec = as_vector(vector)
        clean = _validate_fields(fields or {})
        with self._lock.write():
            if self._dim is None:
                self._dim = int(vec.shape[0])
            elif vec.shape[0] != self._dim:
                raise DimensionMismatch(
                    f"engine holds {self._dim}-dim vectors, got {vec.shape[0]}"
                )
            key = encode_key(vec)
            if key in self._vector_index:
                raise VectorExists(f"a document with vector {key} already exists")
            for name in indices:
                if not isinstance(name, str) or not name:
                    raise InvalidFieldValue("index names must be non-empty strings")
                self._register_index(name)
            doc_id = self._next_id
            self._next_id += 1
            self._vectors[doc_id] = vec
            self._keys[doc_id] = key
            self._vector_index[key] = doc_id
            self._put_fields(doc_id, dict(clean))
            for name, entries in self._inverted.items():
                if name in clean:
                    entries[key] = doc_id
            self._stats_cache = None
            self._commit(
                "create",
                {"vector": [float(x) for x in vec], "fields": dict(clean), "indices": list(indices)},
            )
            return Document(id=doc_id, vector=vec, fields=dict(clean))

    def create_index(self, field: str) -> bool:
        """Register an inverted index on ``field``; idempotent."""
        if not isinstance(field, str) or not field:
            raise InvalidFieldValue("index names must be non-empty strings")
        with self._lock.write():
            self._register_index(field)
            self._commit("create_index", {"index": field})
            return True

    def list_indices(self) -> list[str]:
        with self._lock.read():
            return sorted(self._inverted)

    def index_contents(self, field: str) -> dict[str, int]:
        """Copy of one inverted index ({vector key -> id}); {} if unregistered."""
        with self._lock.read():
            return dict(self._inverted.get(field, {}))

    def find_doc_by_vector(self, vector: Sequence[float] | Vector) -> Document | None:
        vec = as_vector(vector)
        with self._lock.read():
            doc_id = self._vector_index.get(encode_key(vec))
            return None if doc_id is None else self._document(doc_id)

    def mod_doc_by_vector(
        self, vector: Sequence[float] | Vector, field: str, value: Any
    ) -> Document:
        """Upsert one field of the document stored under ``vector``."""
        vec = as_vector(vector)
        if not isinstance(field, str) or not field:
            raise InvalidFieldValue("field names must be non-empty strings")
        clean = _validate_scalar(value)
        with self._lock.write():
            key = encode_key(vec)
            doc_id = self._vector_index.get(key)
            if doc_id is None:
                raise VectorNotFound(f"no document stored under vector {key}")
            # replace rather than mutate: snapshot swaps rely on dict identity
            fields = dict(self._get_fields(doc_id))
            fields[field] = clean
            self._put_fields(doc_id, fields)
            if field in self._inverted:
                self._inverted[field][key] = doc_id
            self._commit(
                "mod_doc_by_vector",
                {"vector": [float(x) for x in vec], "field": field, "value": clean},
            )
            return Document(id=doc_id, vector=self._vectors[doc_id], fields=dict(fields))

    def remove_by_vector(self, vector: Sequence[float] | Vector) -> bool:
        vec = as_vector(vector)
        with self._lock.write():
            doc_id = self._vector_index.get(encode_key(vec))
            if doc_id is None:
                return False
            self._remove_id(doc_id)
            self._commit("remove_by_vector", {"vector": [float(x) for x in vec]})
            return True

    def remove_by_query(self, filter: dsl.QueryExpr) -> int:
        """Remove every document matching ``filter``; returns the count."""
        with self._lock.write():
            doomed = self._filter_ids(filter)
            for doc_id in doomed:
                self._remove_id(doc_id)
            if doomed:
                self._commit("remove_by_query", {"query": dsl.print_expr(filter)})
            return len(doomed)

    def candidates(self, filter: dsl.QueryExpr) -> set[int]:
        """Document ids for which ``filter`` evaluates true (exact set)."""
        with self._lock.read():
            return self._filter_ids(filter)

    def knn_search(
        self,
        query: Sequence[float] | Vector,
        metric: str,
        k: int,
        filter: dsl.QueryExpr | None = None,
    ) -> list[tuple[Document, float]]:
        """Exact k nearest documents, ascending distance, ties by ascending id.

        Standardized euclidean statistics are computed over all live vectors
        (not just filter candidates) and cached until a vector mutation.
        """
        vec = as_vector(query)
        if metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {metric!r}")
        if k < 1:
            raise ValueError("k must be at least 1")
        if metric in ("cosine", "euclidean_l2") and float(np.linalg.norm(vec)) == 0.0:
            raise ZeroVector(f"{metric} distance is undefined for a zero query")
        with self._lock.read():
            if not self._vectors:
                return []
            if self._dim is not None and vec.shape[0] != self._dim:
                raise DimensionMismatch(
                    f"engine holds {self._dim}-dim vectors, got {vec.shape[0]}"
                )
            ids = self._filter_ids(filter) if filter is not None else self._vectors.keys()
            stats = self._stats() if metric == "euclidean_z_score" else None
            scored = sorted(
                (distance(metric, vec, self._vectors[i], stats), i) for i in ids
            )
            return [(self._document(i), d) for d, i in scored[:k]]

    def documents(self) -> list[Document]:
        """Copies of all live documents (test and tooling helper)."""
        with self._lock.read():
            return [self._document(i) for i in sorted(self._vectors)]

    # --- persistence ---

    def save(self, directory: str | Path | None = None) -> None:
        """Atomically snapshot the engine state into ``directory``.

        Defaults to the engine's home directory. Files are written to
        ``<name>.tmp`` and renamed; a failed write leaves both the
        directory's previous snapshot and the in-memory state unharmed.
        """
        if directory is None:
            if self._home is None:
                raise SnapshotIOError("no snapshot directory configured")
            directory = self._home
        directory = Path(directory)
        if self._home is None:
            self._home = directory
        with self._save_lock:
            with self._lock.read():
                version = self._version
                doc_rows = [
                    (i, self._keys[i], dict(self._get_fields(i)))
                    for i in sorted(self._vectors)
                ]
                index_fields = sorted(self._inverted)
                meta = {"next_id": self._next_id, "dim": self._dim, "format_version": FORMAT_VERSION}
                overlay_snapshot = None if self._cached else dict(self._lazy.overlay)
                self._dirty = False
            try:
                renames, offsets = self._stage_snapshot(directory, doc_rows, index_fields, meta)
                if self._cached:
                    _commit_renames(renames)
                else:
                    # uncached readers stream from documents.jsonl, so the
                    # rename and the offset swap happen together under the
                    # write lock (held only for the rename instant)
                    with self._lock.write():
                        _commit_renames(renames)
                        self._swap_lazy_backing(directory, version, offsets, overlay_snapshot or {})
            except OSError as exc:
                with self._lock.write():
                    self._dirty = True
                raise SnapshotIOError(str(exc)) from exc

    def _stage_snapshot(
        self,
        directory: Path,
        doc_rows: list[tuple[int, str, FieldMap]],
        index_fields: list[str],
        meta: dict[str, Any],
    ) -> tuple[list[tuple[Path, Path]], dict[int, int]]:
        """Write the snapshot into .tmp files, returning rename pairs and the
        byte offset of every document line in the final file."""
        directory.mkdir(parents=True, exist_ok=True)
        offsets: dict[int, int] = {}
        lines = []
        for doc_id, key, fields in doc_rows:
            lines.append(
                json.dumps(
                    {"id": doc_id, "vector": key, "fields": fields},
                    ensure_ascii=False,
                    separators=(",", ":"),
                ).encode("utf-8")
                + b"\n"
            )
        payload = b"".join(lines)
        header = b"#sha256:" + hashlib.sha256(payload).hexdigest().encode() + b"\n"
        pos = len(header)
        for (doc_id, _, _), line in zip(doc_rows, lines):
            offsets[doc_id] = pos
            pos += len(line)

        idx_payload = json.dumps({"fields": index_fields}, ensure_ascii=False).encode() + b"\n"
        idx_header = b"#sha256:" + hashlib.sha256(idx_payload).hexdigest().encode() + b"\n"
        meta_payload = json.dumps(meta).encode() + b"\n"
        meta_header = b"#sha256:" + hashlib.sha256(meta_payload).hexdigest().encode() + b"\n"

        renames = []
        try:
            for name, data in (
                ("documents.jsonl", header + payload),
                ("indices.json", idx_header + idx_payload),
                ("meta.json", meta_header + meta_payload),
            ):
                final = directory / name
                tmp = final.with_suffix(final.suffix + ".tmp")
                with open(tmp, "wb") as fh:
                    fh.write(data)
                renames.append((tmp, final))
        except OSError:
            for tmp, _ in renames:
                tmp.unlink(missing_ok=True)
            raise
        return renames, offsets

    def _swap_lazy_backing(
        self,
        directory: Path,
        version: int,
        offsets: dict[int, int],
        overlay_snapshot: dict[int, FieldMap],
    ) -> None:
        """Point the lazy store at the fresh snapshot (write lock held)."""
        backing = directory / "documents.jsonl"
        if self._lazy.backing is None:
            self._lazy.backing = backing
        elif self._lazy.backing != backing:
            return  # saved elsewhere; keep streaming from the old backing
        if self._version == version:
            self._lazy.offsets = offsets
            self._lazy.overlay.clear()
            return
        # mutations raced the write: keep only overlay entries that were
        # replaced since the copy (mutations build fresh dicts, so object
        # identity tells the two apart)
        self._lazy.offsets = {i: o for i, o in offsets.items() if i in self._vectors}
        for doc_id, fields in overlay_snapshot.items():
            if self._lazy.overlay.get(doc_id) is fields:
                del self._lazy.overlay[doc_id]

    @classmethod
    def load(
        cls,
        directory: str | Path,
        cached: bool = True,
        on_commit: Callable[[OpRecord], None] | None = None,
    ) -> "Engine":
        """Restore an engine from a snapshot directory.

        Inverted indices are rebuilt from documents.jsonl; every file's
        checksum header is verified first.
        """
        directory = Path(directory)
        missing = [n for n in SNAPSHOT_FILES if not (directory / n).is_file()]
        if missing:
            raise MissingFiles(f"snapshot files missing from {directory}: {', '.join(missing)}")

        docs_payload, docs_offset = _read_checked(directory / "documents.jsonl")
        idx_payload, _ = _read_checked(directory / "indices.json")
        meta_payload, _ = _read_checked(directory / "meta.json")

        try:
            meta = json.loads(meta_payload)
            next_id = int(meta["next_id"])
            dim = meta["dim"]
            version = int(meta["format_version"])
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptSnapshot("meta.json", 0, f"bad metadata: {exc}") from exc
        if version != FORMAT_VERSION:
            raise CorruptSnapshot("meta.json", 0, f"unsupported format_version {version}")

        try:
            index_fields = json.loads(idx_payload)["fields"]
            if not isinstance(index_fields, list):
                raise TypeError("fields must be a list")
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptSnapshot("indices.json", 0, f"bad index list: {exc}") from exc

        engine = cls(cached=cached, home=directory, on_commit=on_commit)
        engine._dim = None if dim is None else int(dim)
        offset = docs_offset
        for line in docs_payload.split(b"\n"):
            if not line:
                offset += 1
                continue
            try:
                row = json.loads(line)
                doc_id = int(row["id"])
                key = str(row["vector"])
                vec = decode_key(key)
                fields = _validate_fields(row["fields"])
            except Exception as exc:
                raise CorruptSnapshot("documents.jsonl", offset, f"bad document row: {exc}") from exc
            if doc_id in engine._vectors:
                raise CorruptSnapshot("documents.jsonl", offset, f"duplicate id {doc_id}")
            if key in engine._vector_index:
                raise CorruptSnapshot("documents.jsonl", offset, f"duplicate vector {key}")
            if engine._dim is None:
                engine._dim = int(vec.shape[0])
            elif vec.shape[0] != engine._dim:
                raise CorruptSnapshot(
                    "documents.jsonl", offset, f"dim {vec.shape[0]} != engine dim {engine._dim}"
                )
            engine._vectors[doc_id] = vec
            engine._keys[doc_id] = key
            engine._vector_index[key] = doc_id
            if cached:
                engine._fields[doc_id] = fields
            else:
                engine._lazy.offsets[doc_id] = offset
            offset += len(line) + 1
        if engine._vectors and next_id <= max(engine._vectors):
            raise CorruptSnapshot("meta.json", 0, "next_id not above live ids")
        engine._next_id = next_id
        if not cached:
            engine._lazy.backing = directory / "documents.jsonl"
        for field in index_fields:
            if not isinstance(field, str) or not field:
                raise CorruptSnapshot("indices.json", 0, f"bad index name {field!r}")
            engine._register_index(field)
        return engine

    # --- background flusher ---

    def start_flusher(
        self, directory: str | Path | None = None, interval: float = DEFAULT_FLUSH_INTERVAL
    ) -> None:
        """Snapshot into ``directory`` whenever dirty, every ``interval`` seconds."""
        if self._flusher is not None:
            raise RuntimeError("flusher already running")
        if directory is None:
            if self._home is None:
                raise SnapshotIOError("no snapshot directory configured")
            directory = self._home
        directory = Path(directory)
        self._flusher_stop.clear()

        def run() -> None:
            while not self._flusher_stop.wait(interval):
                if self._dirty:
                    try:
                        self.save(directory)
                    except SnapshotIOError:
                        pass  # stays dirty; retried next tick

        self._flusher = threading.Thread(target=run, name="bhakti-flusher", daemon=True)
        self._flusher.start()

    def stop_flusher(self) -> None:
        if self._flusher is None:
            return
        self._flusher_stop.set()
        self._flusher.join()
        self._flusher = None


def _commit_renames(renames: list[tuple[Path, Path]]) -> None:
    for tmp, final in renames:
        os.replace(tmp, final)


def _read_checked(path: Path) -> tuple[bytes, int]:
    """Verify a ``#sha256:`` checksum header; return (payload, payload offset)."""
    data = path.read_bytes()
    newline = data.find(b"\n")
    if newline < 0 or not data.startswith(b"#sha256:"):
        raise CorruptSnapshot(path.name, 0, "missing checksum header")
    stated = data[len(b"#sha256:"):newline].decode("ascii", "replace")
    payload = data[newline + 1:]
    actual = hashlib.sha256(payload).hexdigest()
    if stated != actual:
        raise CorruptSnapshot(path.name, newline + 1, "checksum mismatch")
    return payload, newline + 1


def replay_ops(records: Sequence[OpRecord], cached: bool = True) -> Engine:
    """Rebuild an engine by applying committed mutations in sequence order."""
    engine = Engine(cached=cached)
    for rec in sorted(records, key=lambda r: r.seq):
        p = rec.param
        if rec.cmd == "create":
            engine.create(p["vector"], p["fields"], p.get("indices", ()))
        elif rec.cmd == "create_index":
            engine.create_index(p["index"])
        elif rec.cmd == "mod_doc_by_vector":
            engine.mod_doc_by_vector(p["vector"], p["field"], p["value"])
        elif rec.cmd == "remove_by_vector":
            engine.remove_by_vector(p["vector"])
        elif rec.cmd == "remove_by_query":
            engine.remove_by_query(dsl.parse(p["query"]))
        else:
            raise ValueError(f"unknown op record cmd {rec.cmd!r}")
    return engine
