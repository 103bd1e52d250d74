"""Exception hierarchy shared across the package.

Every error carries a stable ``code`` that the wire layer puts in front of
the Exception-response message (``"<code>: <detail>"``), so remote clients
can match on it without parsing free text.
"""

from __future__ import annotations


class BhaktiError(Exception):
    """Base class for all errors raised by this package."""

    code = "Error"

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    def wire_message(self) -> str:
        return f"{self.code}: {self.detail}" if self.detail else self.code


# --- vector math ---

class DimensionMismatch(BhaktiError):
    code = "DimensionMismatch"


class ZeroVector(BhaktiError):
    """Cosine / L2-normalized distance is undefined for a zero vector."""

    code = "ZeroVector"


class EmptyDataset(BhaktiError):
    code = "EmptyDataset"


# --- query language ---

class QuerySyntaxError(BhaktiError):
    """Invalid filter expression; ``offset`` is a byte offset into the input."""

    code = "QuerySyntaxError"

    def __init__(self, detail: str, offset: int):
        super().__init__(f"{detail} (at byte {offset})")
        self.offset = offset


# --- storage engine ---

class VectorExists(BhaktiError):
    code = "VectorExists"


class VectorNotFound(BhaktiError):
    code = "VectorNotFound"


class InvalidFieldValue(BhaktiError):
    code = "InvalidFieldValue"


class CorruptSnapshot(BhaktiError):
    """Snapshot file failed validation; carries the file name and byte offset."""

    code = "CorruptSnapshot"

    def __init__(self, file: str, offset: int, detail: str):
        super().__init__(f"{file}@{offset}: {detail}")
        self.file = file
        self.offset = offset


class MissingFiles(BhaktiError):
    code = "MissingFiles"


class SnapshotIOError(BhaktiError):
    """Snapshot write failed; in-memory engine state is unharmed."""

    code = "IoError"


# --- wire protocol ---

class WireError(BhaktiError):
    code = "WireError"


class MalformedJson(WireError):
    code = "MalformedJson"


class MissingField(WireError):
    code = "MissingField"

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name


class UnknownField(WireError):
    code = "UnknownField"


class UnknownEngine(WireError):
    code = "UnknownEngine"


class UnknownOpt(WireError):
    code = "UnknownOpt"


class UnknownCommand(WireError):
    code = "UnknownCommand"


class RequestTooLarge(WireError):
    code = "RequestTooLarge"


class InvalidParam(WireError):
    code = "InvalidParam"


class UnknownMetric(WireError):
    code = "UnknownMetric"


# --- pipeline ---

class DuplicateStageName(BhaktiError):
    code = "DuplicateStageName"


class StageError(BhaktiError):
    """Wraps an exception raised inside a pipeline stage."""

    code = "StageError"

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause


# --- server / client ---

class BindError(BhaktiError):
    code = "BindError"


class ReadTimeout(BhaktiError):
    """A socket read exceeded the configured timeout."""

    code = "ReadTimeout"


class ConnectionLost(BhaktiError):
    code = "ConnectionLost"


class Timeout(BhaktiError):
    code = "Timeout"


class ProtocolError(BhaktiError):
    code = "ProtocolError"


class ValidationError(BhaktiError):
    code = "ValidationError"


class ServerError(BhaktiError):
    """An Exception-state response surfaced on the client side."""

    code = "ServerError"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# --- memory layer ---

class DuplicateMemory(BhaktiError):
    code = "DuplicateMemory"


class StoreUnavailable(BhaktiError):
    code = "StoreUnavailable"


# --- bench ---

class TargetUnavailable(BhaktiError):
    code = "TargetUnavailable"


class ConfigInvalid(BhaktiError):
    code = "ConfigInvalid"
