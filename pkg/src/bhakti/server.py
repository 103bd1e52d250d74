"""TCP server binding the pipeline, wire codec and engine together.

One engine instance per server, one thread per connection, synchronous
request/response per connection. Each request runs through the pipeline
read_frame -> parse_request -> dispatch_engine -> render_response ->
write_frame; stage failures become Exception responses. A read timeout
produces the verbatim ``Read timeout`` exception response and closes the
connection.
"""

from __future__ import annotations

import json
import logging
import signal
import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .engine import DEFAULT_FLUSH_INTERVAL, Engine, OpRecord, SNAPSHOT_FILES
from .errors import (
    BhaktiError,
    BindError,
    ConnectionLost,
    ReadTimeout,
    RequestTooLarge,
)
from .pipeline import Context, Pipeline, Stage
from .wire import MAX_FRAME_BYTES, WireResponse, decode_request, dispatch, encode_response

logger = logging.getLogger("bhakti.server")

DEFAULT_PORT = 8567


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    data_dir: str | Path = "bhakti-data"
    cached: bool = True
    flush_interval: float = DEFAULT_FLUSH_INTERVAL
    max_connections: int = 1024
    read_timeout: float = 30.0
    op_log: str | Path | None = None  # commit-ordered mutation log (JSONL)

    def __post_init__(self):
        if not (1 <= self.port <= 65535 or self.port == 0):  # 0 = ephemeral
            raise ValueError(f"port out of range: {self.port}")
        if self.max_connections < 1:
            raise ValueError("max_connections must be positive")


class _LineReader:
    """Newline-framed reads with a frame size cap."""

    def __init__(self, sock: socket.socket, limit: int = MAX_FRAME_BYTES):
        self._sock = sock
        self._buf = bytearray()
        self._limit = limit

    def read_line(self) -> bytes | None:
        """One frame without its newline; None on clean EOF."""
        while True:
            newline = self._buf.find(b"\n")
            if newline >= 0:
                line = bytes(self._buf[:newline])
                del self._buf[: newline + 1]
                if len(line) > self._limit:
                    raise RequestTooLarge(f"request frame exceeds {self._limit} bytes")
                return line
            if len(self._buf) > self._limit:
                raise RequestTooLarge(f"request frame exceeds {self._limit} bytes")
            chunk = self._sock.recv(65536)
            if not chunk:
                return None  # peer closed; a partial line is discarded
            self._buf += chunk


def _request_pipeline(engine: Engine, reader: _LineReader, sock: socket.socket) -> Pipeline:
    def read_frame(ctx: Context) -> Context:
        try:
            line = reader.read_line()
        except TimeoutError as exc:  # socket.timeout
            raise ReadTimeout("Read timeout") from exc
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        if line is None:
            ctx.eof = True
            return ctx
        ctx.input = line
        return ctx

    def parse_request(ctx: Context) -> Context:
        ctx.extras["request"] = decode_request(ctx.input)
        return ctx

    def dispatch_engine(ctx: Context) -> Context:
        started = time.perf_counter()
        ctx.extras["response"] = dispatch(ctx.extras["request"], engine)
        ctx.extras["duration_us"] = (time.perf_counter() - started) * 1e6
        return ctx

    def render_response(ctx: Context) -> Context:
        ctx.output = encode_response(ctx.extras["response"])
        return ctx

    def write_frame(ctx: Context) -> Context:
        try:
            sock.sendall(ctx.output)
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        return ctx

    return Pipeline(
        (
            Stage("read_frame", read_frame, performs_io=True),
            Stage("parse_request", parse_request),
            Stage("dispatch_engine", dispatch_engine),
            Stage("render_response", render_response),
            Stage("write_frame", write_frame, performs_io=True),
        )
    )


def error_response(exc: BaseException) -> WireResponse:
    """Render a stage failure; Read timeout keeps its verbatim message."""
    if isinstance(exc, ReadTimeout):
        return WireResponse.exception("Read timeout")
    if isinstance(exc, BhaktiError):
        return WireResponse.exception(exc.wire_message())
    return WireResponse.exception(f"InternalError: {exc}")


class BhaktiServer:
    """Lifecycle owner: listener, connection threads, flusher, final save."""

    def __init__(self, config: ServerConfig, engine: Engine | None = None):
        self.config = config
        self._op_log_file = None
        if engine is None:
            engine = self._open_engine()
        self.engine = engine
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._shutdown = threading.Event()
        self._conn_lock = threading.Lock()
        self._conns: dict[int, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._slots = threading.BoundedSemaphore(config.max_connections)

    def _open_engine(self) -> Engine:
        data_dir = Path(self.config.data_dir)
        on_commit = None
        if self.config.op_log is not None:
            self._op_log_file = open(self.config.op_log, "a", encoding="utf-8")

            def on_commit(rec: OpRecord) -> None:  # runs under the engine write lock
                fh = self._op_log_file
                if fh is not None and not fh.closed:
                    fh.write(rec.to_json() + "\n")
                    fh.flush()

        if all((data_dir / name).is_file() for name in SNAPSHOT_FILES):
            return Engine.load(data_dir, cached=self.config.cached, on_commit=on_commit)
        return Engine(cached=self.config.cached, home=data_dir, on_commit=on_commit)

    @property
    def address(self) -> tuple[str, int]:
        assert self._listener is not None, "server not started"
        return self._listener.getsockname()[:2]

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            listener.bind((self.config.host, self.config.port))
        except OSError as exc:
            listener.close()
            raise BindError(f"cannot bind {self.config.host}:{self.config.port}: {exc}") from exc
        listener.listen(128)
        listener.settimeout(0.2)
        self._listener = listener
        self.engine.start_flusher(Path(self.config.data_dir), self.config.flush_interval)
        self._accept_thread = threading.Thread(target=self._accept_loop, name="bhakti-accept", daemon=True)
        self._accept_thread.start()
        logger.info("listening on %s:%d", *self.address)

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._shutdown.is_set():
            try:
                conn, peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            if not self._slots.acquire(blocking=False):
                conn.close()  # at max_connections
                continue
            self._threads = [t for t in self._threads if t.is_alive()]
            conn.settimeout(self.config.read_timeout)
            with self._conn_lock:
                self._conns[conn.fileno()] = conn
            thread = threading.Thread(
                target=self._serve_connection, args=(conn, peer), daemon=True
            )
            self._threads.append(thread)
            thread.start()

    def _serve_connection(self, conn: socket.socket, peer) -> None:
        key = conn.fileno()
        reader = _LineReader(conn)
        pipeline = _request_pipeline(self.engine, reader, conn)
        try:
            while not self._shutdown.is_set():
                ctx = pipeline.launch(Context())
                if ctx.eof:
                    break
                if ctx.error is not None:
                    cause = ctx.error.cause
                    if isinstance(cause, ConnectionLost):
                        break
                    resp = error_response(cause)
                    try:
                        conn.sendall(encode_response(resp))
                    except OSError:
                        break
                    logger.info("cmd=%s dur_us=0 state=Exception", ctx.error.stage)
                    if isinstance(cause, (ReadTimeout, RequestTooLarge)):
                        break  # framing is unrecoverable / peer is stalled
                    continue
                req = ctx.extras["request"]
                resp = ctx.extras["response"]
                stage_us = " ".join(
                    f"{name}_us={us:.0f}" for name, us in ctx.extras.get("stage_us", {}).items()
                )
                logger.info(
                    "cmd=%s dur_us=%.0f state=%s %s",
                    req.cmd,
                    ctx.extras.get("duration_us", 0.0),
                    resp.state,
                    stage_us,
                )
        finally:
            with self._conn_lock:
                self._conns.pop(key, None)
            try:
                conn.close()
            except OSError:
                pass
            self._slots.release()

    def stop(self, drain_timeout: float = 2.0) -> None:
        """Stop accepting, drain in-flight requests, force a final save."""
        self._shutdown.set()
        if self._listener is not None:
            self._listener.close()
        if self._accept_thread is not None:
            self._accept_thread.join()
        deadline = time.monotonic() + drain_timeout
        for thread in self._threads:
            thread.join(timeout=max(0.0, deadline - time.monotonic()))
        with self._conn_lock:  # idle connections: shut them down hard
            leftover = list(self._conns.values())
        for conn in leftover:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        for thread in self._threads:
            thread.join(timeout=1.0)
        self.engine.stop_flusher()
        self.engine.save(Path(self.config.data_dir))
        if self._op_log_file is not None:
            self._op_log_file.close()
            self._op_log_file = None

    def __enter__(self) -> "BhaktiServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def serve(config: ServerConfig) -> int:
    """Run until SIGINT/SIGTERM; returns the process exit code."""
    try:
        server = BhaktiServer(config)
    except BhaktiError as exc:
        logger.error("engine load failed: %s", exc.wire_message())
        return 1
    stop_event = threading.Event()

    def handle_signal(signum, frame):
        stop_event.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)
    try:
        server.start()
    except BindError as exc:
        logger.error("%s", exc.wire_message())
        return 1
    host, port = server.address
    print(json.dumps({"listening": f"{host}:{port}"}), flush=True)
    stop_event.wait()
    server.stop()
    return 0
