"""Wire protocol v1: newline-delimited JSON over a persistent TCP connection.

Request envelope (one line):
    {"db_engine": "dipamkara", "opt": <class>, "cmd": <command>, "param": {...}}

Response envelope (one line, keys in this order):
    {"state": "OK" | "Exception", "message": <str>, "data": <str or null>}

``data`` is always a JSON payload serialized *as a string* (or null on
Exception); e.g. a successful create_index carries ``"data": "true"``.
See protocol.md for the command table and per-command param schemas.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import dsl
from .engine import Engine
from .errors import (
    BhaktiError,
    InvalidParam,
    MalformedJson,
    MissingField,
    ProtocolError,
    RequestTooLarge,
    UnknownCommand,
    UnknownEngine,
    UnknownField,
    UnknownMetric,
    UnknownOpt,
)
from .metrics import METRIC_NAMES

ENGINE_NAME = "dipamkara"
OPT_VALUES = ("create", "read", "update", "delete", "admin")
MAX_FRAME_BYTES = 16 * 1024 * 1024

#: command -> declared operation class (opt is validated, never routed on)
COMMANDS: dict[str, str] = {
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


@dataclass(frozen=True)
class WireRequest:
    db_engine: str
    opt: str
    cmd: str
    param: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class WireResponse:
    state: str  # "OK" | "Exception"
    message: str
    data: str | None

    @classmethod
    def ok(cls, payload: Any, message: str = "") -> "WireResponse":
        return cls("OK", message, json.dumps(payload, ensure_ascii=False))

    @classmethod
    def exception(cls, message: str) -> "WireResponse":
        return cls("Exception", message, None)


# --- codec ---

def decode_request(line: bytes | str) -> WireRequest:
    """Parse and validate one request frame."""
    if isinstance(line, str):
        line = line.encode("utf-8")
    if len(line) > MAX_FRAME_BYTES:
        raise RequestTooLarge(f"request frame exceeds {MAX_FRAME_BYTES} bytes")
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedJson("request must be a JSON object")
    for key in ("db_engine", "opt", "cmd", "param"):
        if key not in obj:
            raise MissingField(key)
    unknown = set(obj) - {"db_engine", "opt", "cmd", "param"}
    if unknown:
        raise UnknownField(", ".join(sorted(unknown)))
    for key in ("db_engine", "opt", "cmd"):
        if not isinstance(obj[key], str):
            raise MalformedJson(f"{key} must be a string")
    if obj["db_engine"] != ENGINE_NAME:
        raise UnknownEngine(obj["db_engine"])
    if obj["opt"] not in OPT_VALUES:
        raise UnknownOpt(obj["opt"])
    if obj["cmd"] not in COMMANDS:
        raise UnknownCommand(obj["cmd"])
    if not isinstance(obj["param"], dict):
        raise InvalidParam("param must be a JSON object")
    return WireRequest(obj["db_engine"], obj["opt"], obj["cmd"], obj["param"])


def encode_request(req: WireRequest) -> bytes:
    """Canonical single-line frame: fixed envelope key order, param keys sorted."""
    param = json.dumps(req.param, ensure_ascii=False, sort_keys=True, separators=(", ", ": "))
    body = (
        '{"db_engine": %s, "opt": %s, "cmd": %s, "param": %s}'
        % (
            json.dumps(req.db_engine, ensure_ascii=False),
            json.dumps(req.opt, ensure_ascii=False),
            json.dumps(req.cmd, ensure_ascii=False),
            param,
        )
    )
    return body.encode("utf-8") + b"\n"


def encode_response(resp: WireResponse) -> bytes:
    """Single-line frame, keys in order state, message, data."""
    body = json.dumps(
        {"state": resp.state, "message": resp.message, "data": resp.data},
        ensure_ascii=False,
        separators=(", ", ": "),
    )
    return body.encode("utf-8") + b"\n"


def decode_response(line: bytes | str) -> WireResponse:
    """Parse and validate one response frame (client side)."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"response is not UTF-8: {exc}") from exc
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != {"state", "message", "data"}:
        raise ProtocolError("response must have exactly state, message, data")
    state, message, data = obj["state"], obj["message"], obj["data"]
    if state not in ("OK", "Exception"):
        raise ProtocolError(f"bad state {state!r}")
    if not isinstance(message, str):
        raise ProtocolError("message must be a string")
    if data is not None and not isinstance(data, str):
        raise ProtocolError("data must be a string or null")
    if state == "Exception" and data is not None:
        raise ProtocolError("Exception responses must carry null data")
    return WireResponse(state, message, data)


# --- param extraction ---

def _require(param: Mapping[str, Any], name: str) -> Any:
    if name not in param:
        raise InvalidParam(f"missing param {name!r}")
    return param[name]


def _check_keys(param: Mapping[str, Any], allowed: set[str]) -> None:
    extra = set(param) - allowed
    if extra:
        raise InvalidParam(f"unexpected param(s): {', '.join(sorted(extra))}")


def _vector_param(param: Mapping[str, Any], name: str = "vector") -> list[float]:
    value = _require(param, name)
    if not isinstance(value, list) or not value:
        raise InvalidParam(f"{name} must be a non-empty JSON array of numbers")
    out = []
    for x in value:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise InvalidParam(f"{name} must contain numbers only")
        out.append(float(x))
    return out


def _str_param(param: Mapping[str, Any], name: str) -> str:
    value = _require(param, name)
    if not isinstance(value, str):
        raise InvalidParam(f"{name} must be a string")
    return value


def _metric_param(param: Mapping[str, Any]) -> str:
    value = _str_param(param, "metric")
    if value not in METRIC_NAMES:
        raise UnknownMetric(f"unknown metric {value!r}")
    return value


def _int_param(param: Mapping[str, Any], name: str) -> int:
    value = _require(param, name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidParam(f"{name} must be an integer")
    return value


def _parse_filter(param: Mapping[str, Any]) -> tuple[dsl.QueryExpr | None, str]:
    """Optional 'query' param -> (filter AST, unindexed-field warning or '')."""
    if "query" not in param or param["query"] is None:
        return None, ""
    return dsl.parse(_str_param(param, "query")), ""


# --- dispatch ---

def dispatch(req: WireRequest, engine: Engine) -> WireResponse:
    """Route a validated request to the engine; no exception escapes."""
    try:
        handler = _HANDLERS[req.cmd]
    except KeyError:
        return WireResponse.exception(UnknownCommand(req.cmd).wire_message())
    try:
        payload, message = handler(req.param, engine)
        return WireResponse.ok(payload, message)
    except BhaktiError as exc:
        return WireResponse.exception(exc.wire_message())
    except Exception as exc:  # engine bugs still yield a response frame
        return WireResponse.exception(f"InternalError: {exc}")


def _handle_create(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"vector", "fields", "indices"})
    vector = _vector_param(param)
    fields = param.get("fields", {})
    if not isinstance(fields, dict):
        raise InvalidParam("fields must be a JSON object")
    indices = param.get("indices", [])
    if not isinstance(indices, list) or any(not isinstance(i, str) for i in indices):
        raise InvalidParam("indices must be an array of field names")
    doc = engine.create(vector, fields, indices)
    return doc.to_json_dict(), ""


def _handle_create_index(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"index", "detailed"})
    name = _str_param(param, "index")
    detailed = param.get("detailed", False)
    if not isinstance(detailed, bool):
        raise InvalidParam("detailed must be a boolean")
    created = engine.create_index(name)
    if detailed:
        return {"created": created, "index": name, "entries": engine.index_contents(name)}, ""
    return created, ""


def _handle_find(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"vector"})
    doc = engine.find_doc_by_vector(_vector_param(param))
    return (None if doc is None else doc.to_json_dict()), ""


def _unindexed_warning(expr: dsl.QueryExpr | None, engine: Engine) -> str:
    if expr is None:
        return ""
    unindexed = sorted(dsl.fields_referenced(expr) - set(engine.list_indices()))
    if not unindexed:
        return ""
    return f"warning: full scan on unindexed field(s): {', '.join(unindexed)}"


def _handle_knn(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"vector", "metric", "k", "query"})
    vector = _vector_param(param)
    metric = _metric_param(param)
    k = _int_param(param, "k")
    if k < 1:
        raise InvalidParam("k must be at least 1")
    expr, _ = _parse_filter(param)
    hits = engine.knn_search(vector, metric, k, expr)
    payload = [{"document": doc.to_json_dict(), "distance": dist} for doc, dist in hits]
    return payload, _unindexed_warning(expr, engine)


def _handle_mod(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"vector", "field", "value"})
    doc = engine.mod_doc_by_vector(
        _vector_param(param), _str_param(param, "field"), _require(param, "value")
    )
    return doc.to_json_dict(), ""


def _handle_remove_by_vector(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"vector"})
    return engine.remove_by_vector(_vector_param(param)), ""


def _handle_remove_by_query(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, {"query"})
    expr = dsl.parse(_str_param(param, "query"))
    return engine.remove_by_query(expr), _unindexed_warning(expr, engine)


def _handle_save(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, set())
    engine.save()
    return True, ""


def _handle_indices_list(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, set())
    return engine.list_indices(), ""


def _handle_ping(param: Mapping[str, Any], engine: Engine):
    _check_keys(param, set())
    return True, ""


_HANDLERS: dict[str, Callable[[Mapping[str, Any], Engine], tuple[Any, str]]] = {
    "create": _handle_create,
    "create_index": _handle_create_index,
    "find_doc_by_vector": _handle_find,
    "knn_search": _handle_knn,
    "mod_doc_by_vector": _handle_mod,
    "remove_by_vector": _handle_remove_by_vector,
    "remove_by_query": _handle_remove_by_query,
    "save": _handle_save,
    "indices_list": _handle_indices_list,
    "ping": _handle_ping,
}
