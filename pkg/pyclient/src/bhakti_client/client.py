"""Socket-only client for the Bhakti wire protocol.

Protocol v1 is newline-delimited JSON over a persistent TCP connection:

    request:  {"db_engine": "dipamkara", "opt": ..., "cmd": ..., "param": {...}}
    response: {"state": "OK"|"Exception", "message": ..., "data": <str|null>}

``data`` is a JSON payload serialized as a string. Requests are encoded
canonically (fixed envelope key order, param keys sorted), which keeps the
frames byte-identical to the reference client. One request is in flight
per connection; give each thread its own client.

There are no third-party dependencies: this module doubles as a reference
for the wire format.
"""

from __future__ import annotations

import json
import math
import re
import socket
import threading
import time
from datetime import datetime, timezone
from typing import Any, Callable, Sequence

DEFAULT_PORT = 8567

METRICS = ("cosine", "euclidean", "euclidean_l2", "euclidean_z_score", "chebyshev")

_CMD_OPT = {
    "create": "create",
    "create_index": "create",
    "find_doc_by_vector": "read",
    "knn_search": "read",
    "mod_doc_by_vector": "update",
    "remove_by_vector": "delete",
    "remove_by_query": "delete",
    "save": "admin",
    "indices_list": "read",
    "ping": "admin",
}

_MEMORY_FIELDS = ("query", "answer", "user_id", "bot_id", "timestamp")
_MULTI_NEWLINE = re.compile(r"\n{2,}")


class BhaktiClientError(Exception):
    """Base class for every error this SDK raises."""


class ConnectionLost(BhaktiClientError):
    pass


class Timeout(BhaktiClientError):
    pass


class ProtocolError(BhaktiClientError):
    pass


class ValidationError(BhaktiClientError):
    pass


class ServerException(BhaktiClientError):
    """An Exception-state response; ``message`` is the server's message."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def encode_request(cmd: str, param: dict[str, Any]) -> bytes:
    """Canonical frame bytes for one command (exposed for golden testing)."""
    if cmd not in _CMD_OPT:
        raise ValidationError(f"unknown command {cmd!r}")
    body = '{"db_engine": "dipamkara", "opt": %s, "cmd": %s, "param": %s}' % (
        json.dumps(_CMD_OPT[cmd], ensure_ascii=False),
        json.dumps(cmd, ensure_ascii=False),
        json.dumps(param, ensure_ascii=False, sort_keys=True, separators=(", ", ": ")),
    )
    return body.encode("utf-8") + b"\n"


def _clean_vector(vector: Sequence[float]) -> list[float]:
    if not isinstance(vector, (list, tuple)) or len(vector) == 0:
        raise ValidationError("vector must be a non-empty sequence of numbers")
    out = []
    for x in vector:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ValidationError("vector components must be numbers")
        value = float(x)
        if not math.isfinite(value):
            raise ValidationError("vector components must be finite")
        out.append(value)
    return out


class BhaktiClient:
    """``BhaktiClient("host:port")`` — typed wrappers over every command."""

    def __init__(self, address: str = f"127.0.0.1:{DEFAULT_PORT}", timeout: float = 30.0):
        self.address = address
        self.timeout = timeout
        host, _, port = address.rpartition(":") if ":" in address else (address, "", str(DEFAULT_PORT))
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot connect to {address}: {exc}") from exc
        self._buf = bytearray()
        self._closed = False
        self._in_flight = threading.Lock()  # one request per connection at a time

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._sock.close()
            except OSError:
                pass

    def __enter__(self) -> "BhaktiClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # --- transport ---

    def _read_line(self) -> bytes | None:
        while True:
            pos = self._buf.find(b"\n")
            if pos >= 0:
                line = bytes(self._buf[:pos])
                del self._buf[: pos + 1]
                return line
            chunk = self._sock.recv(65536)
            if not chunk:
                return None
            self._buf += chunk

    def call(self, cmd: str, param: dict[str, Any]) -> Any:
        """One round-trip; returns the decoded data payload of an OK response."""
        if self._closed:
            raise ConnectionLost("connection is closed")
        try:
            with self._in_flight:
                self._sock.sendall(encode_request(cmd, param))
                line = self._read_line()
        except socket.timeout as exc:
            raise Timeout(f"no response within {self.timeout}s") from exc
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        if line is None:
            raise ConnectionLost("server closed the connection")
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"unparseable response frame: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != {"state", "message", "data"}:
            raise ProtocolError(f"bad response envelope: {obj!r}")
        if obj["state"] == "Exception":
            raise ServerException(str(obj["message"]))
        if obj["state"] != "OK":
            raise ProtocolError(f"bad state {obj['state']!r}")
        if not isinstance(obj["data"], str):
            raise ProtocolError("OK response carried no data string")
        try:
            return json.loads(obj["data"])
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"undecodable data payload: {exc}") from exc

    # --- wrappers ---

    def ping(self) -> bool:
        return bool(self.call("ping", {}))

    def create_doc(
        self,
        vector: Sequence[float],
        fields: dict[str, Any] | None = None,
        indices: Sequence[str] = (),
    ) -> dict[str, Any]:
        return self.call(
            "create",
            {
                "vector": _clean_vector(vector),
                "fields": dict(fields or {}),
                "indices": list(indices),
            },
        )

    def create_index(self, name: str, detailed: bool = False) -> Any:
        if not name:
            raise ValidationError("index name must be non-empty")
        data = self.call("create_index", {"index": name, "detailed": detailed})
        return data if detailed else bool(data)

    def knn(
        self,
        vector: Sequence[float],
        metric: str,
        k: int,
        query: str | None = None,
    ) -> list[tuple[dict[str, Any], float]]:
        if metric not in METRICS:
            raise ValidationError(f"unknown metric {metric!r}")
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ValidationError("k must be an integer >= 1")
        param: dict[str, Any] = {"vector": _clean_vector(vector), "metric": metric, "k": k}
        if query is not None:
            param["query"] = query
        hits = self.call("knn_search", param)
        return [(h["document"], float(h["distance"])) for h in hits]

    def get_by_vector(self, vector: Sequence[float]) -> dict[str, Any] | None:
        return self.call("find_doc_by_vector", {"vector": _clean_vector(vector)})

    def mod_field(self, vector: Sequence[float], field: str, value: Any) -> dict[str, Any]:
        if not field:
            raise ValidationError("field name must be non-empty")
        return self.call(
            "mod_doc_by_vector",
            {"vector": _clean_vector(vector), "field": field, "value": value},
        )

    def remove_by_vector(self, vector: Sequence[float]) -> bool:
        return bool(self.call("remove_by_vector", {"vector": _clean_vector(vector)}))

    def remove_by_query(self, query: str) -> int:
        if not query or not query.strip():
            raise ValidationError("query must be a non-empty DSL string")
        return int(self.call("remove_by_query", {"query": query}))

    def save(self) -> bool:
        return bool(self.call("save", {}))

    def indices_list(self) -> list[str]:
        return list(self.call("indices_list", {}))

    # --- dialogue memory over the wire ---
    # The embedding model stays client-side: pass an ``embed(text) -> [float]``
    # callable (any model, any dimension; it just has to be deterministic).

    def mem_add(
        self,
        query: str,
        answer: str,
        user_id: str,
        bot_id: str,
        embed: Callable[[str], Sequence[float]],
        w_q: float = 0.5,
        w_a: float = 0.5,
        timestamp: float | None = None,
    ) -> dict[str, Any]:
        """Store one conversation turn under the weighted embedding
        ``w_q * embed(query) + w_a * embed(answer)``."""
        if not query:
            raise ValidationError("query must be non-empty")
        if w_q < 0 or w_a < 0 or w_q + w_a <= 0:
            raise ValidationError("weights must be non-negative with a positive sum")
        answer = _MULTI_NEWLINE.sub("\n", answer)
        v_q = _clean_vector(list(embed(query)))
        v_a = _clean_vector(list(embed(answer)))
        if len(v_q) != len(v_a):
            raise ValidationError("embedder returned inconsistent dimensions")
        vector = [w_q * a + w_a * b for a, b in zip(v_q, v_a)]
        fields = {
            "query": query,
            "answer": answer,
            "user_id": user_id,
            "bot_id": bot_id,
            "timestamp": float(timestamp if timestamp is not None else time.time()),
        }
        return self.create_doc(vector, fields, indices=_MEMORY_FIELDS)

    def mem_recall(
        self,
        query: str,
        k: int,
        metric: str,
        user_id: str,
        bot_id: str,
        embed: Callable[[str], Sequence[float]],
    ) -> list[str]:
        """Top-k memories of one (user, bot) pair as template strings
        (``[iso-timestamp] Q: ... | A: ...``), ascending distance."""
        filter_text = (
            f"user_id == {_quote(user_id)} && bot_id == {_quote(bot_id)}"
        )
        hits = self.knn(list(embed(query)), metric, k, query=filter_text)
        out = []
        for doc, _ in hits:
            fields = doc["fields"]
            stamp = datetime.fromtimestamp(float(fields["timestamp"]), tz=timezone.utc).isoformat()
            out.append(f"[{stamp}] Q: {fields['query']} | A: {fields['answer']}")
        return out


_QUOTE_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def _quote(value: str) -> str:
    return '"' + "".join(_QUOTE_ESCAPES.get(c, c) for c in value) + '"'
