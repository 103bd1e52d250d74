"""Native client: typed wrappers over every wire command.

One request in flight per connection (the protocol is synchronous); hand
each thread its own BhaktiClient. Exception responses surface as
:class:`~bhakti.errors.ServerError` carrying the server's message.
"""

from __future__ import annotations

import json
import socket
import threading
from typing import Any, Sequence

from .engine import Document
from .errors import (
    BhaktiError,
    ConnectionLost,
    ProtocolError,
    ServerError,
    Timeout,
    ValidationError,
)
from .metrics import METRIC_NAMES, as_vector
from .server import DEFAULT_PORT
from .wire import (
    COMMANDS,
    ENGINE_NAME,
    WireRequest,
    WireResponse,
    decode_response,
    encode_request,
)


def parse_address(address: str) -> tuple[str, int]:
    if ":" in address:
        host, _, port = address.rpartition(":")
        return host, int(port)
    return address, DEFAULT_PORT


def build_request(cmd: str, param: dict[str, Any]) -> WireRequest:
    return WireRequest(db_engine=ENGINE_NAME, opt=COMMANDS[cmd], cmd=cmd, param=param)


def _clean_vector(vector: Sequence[float]) -> list[float]:
    try:
        return list(as_vector(vector))
    except (BhaktiError, ValueError, TypeError) as exc:
        raise ValidationError(f"bad vector: {exc}") from exc


class BhaktiClient:
    """Synchronous connection to a server, e.g. ``BhaktiClient("host:8567")``."""

    def __init__(self, address: str = f"127.0.0.1:{DEFAULT_PORT}", read_timeout: float = 30.0):
        self.address = address
        self.read_timeout = read_timeout
        host, port = parse_address(address)
        try:
            self._sock = socket.create_connection((host, port), timeout=read_timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot connect to {address}: {exc}") from exc
        self._buf = bytearray()
        self._closed = False
        self._in_flight = threading.Lock()  # one request per connection at a time

    # --- transport ---

    def call(self, req: WireRequest) -> WireResponse:
        """Send one request, await one response frame.

        Raises ServerError for Exception-state responses, ConnectionLost /
        Timeout / ProtocolError for transport failures.
        """
        if self._closed:
            raise ConnectionLost("connection is closed")
        try:
            with self._in_flight:
                self._sock.sendall(encode_request(req))
                line = self._read_line()
        except TimeoutError as exc:
            raise Timeout(f"no response within {self.read_timeout}s") from exc
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        if line is None:
            raise ConnectionLost("server closed the connection")
        resp = decode_response(line)
        if resp.state == "Exception":
            raise ServerError(resp.message)
        return resp

    def _read_line(self) -> bytes | None:
        while True:
            newline = self._buf.find(b"\n")
            if newline >= 0:
                line = bytes(self._buf[:newline])
                del self._buf[: newline + 1]
                return line
            chunk = self._sock.recv(65536)
            if not chunk:
                return None
            self._buf += chunk

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

    # --- typed wrappers ---

    def _data(self, cmd: str, param: dict[str, Any]) -> Any:
        resp = self.call(build_request(cmd, param))
        if resp.data is None:
            raise ProtocolError(f"{cmd}: OK response carried no data")
        try:
            return json.loads(resp.data)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{cmd}: undecodable data payload: {exc}") from exc

    def ping(self) -> bool:
        return bool(self._data("ping", {}))

    def create_doc(
        self,
        vector: Sequence[float],
        fields: dict[str, Any] | None = None,
        indices: Sequence[str] = (),
    ) -> Document:
        param = {
            "vector": _clean_vector(vector),
            "fields": dict(fields or {}),
            "indices": list(indices),
        }
        return Document.from_json_dict(self._data("create", param))

    def create_index(self, name: str, detailed: bool = False) -> bool | dict[str, Any]:
        if not name:
            raise ValidationError("index name must be non-empty")
        data = self._data("create_index", {"index": name, "detailed": detailed})
        return data if detailed else bool(data)

    def knn(
        self,
        vector: Sequence[float],
        metric: str,
        k: int,
        query: str | None = None,
    ) -> list[tuple[Document, float]]:
        if metric not in METRIC_NAMES:
            raise ValidationError(f"unknown metric {metric!r}")
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            raise ValidationError("k must be an integer >= 1")
        param: dict[str, Any] = {"vector": _clean_vector(vector), "metric": metric, "k": k}
        if query is not None:
            param["query"] = query
        hits = self._data("knn_search", param)
        return [
            (Document.from_json_dict(h["document"]), float(h["distance"])) for h in hits
        ]

    def get_by_vector(self, vector: Sequence[float]) -> Document | None:
        data = self._data("find_doc_by_vector", {"vector": _clean_vector(vector)})
        return None if data is None else Document.from_json_dict(data)

    def mod_field(self, vector: Sequence[float], field: str, value: Any) -> Document:
        if not field:
            raise ValidationError("field name must be non-empty")
        param = {"vector": _clean_vector(vector), "field": field, "value": value}
        return Document.from_json_dict(self._data("mod_doc_by_vector", param))

    def remove_by_vector(self, vector: Sequence[float]) -> bool:
        return bool(self._data("remove_by_vector", {"vector": _clean_vector(vector)}))

    def remove_by_query(self, query: str) -> int:
        if not isinstance(query, str) or not query.strip():
            raise ValidationError("query must be a non-empty DSL string")
        return int(self._data("remove_by_query", {"query": query}))

    def save(self) -> bool:
        return bool(self._data("save", {}))

    def indices_list(self) -> list[str]:
        return list(self._data("indices_list", {}))
