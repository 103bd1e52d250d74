"""Command-line interface: server lifecycle, client commands, memory ops
and the scaling benchmark.

Vectors are accepted as JSON arrays (``'[1, 0.5]'``) or ``@file``
references holding the same. Client commands print a human-readable
rendering by default; ``--json`` prints the raw data payload instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import bench as bench_mod
from . import memory
from .client import BhaktiClient
from .engine import Document
from .errors import BhaktiError
from .metrics import METRIC_NAMES
from .server import DEFAULT_PORT, ServerConfig, serve


def _default_addr() -> str:
    host = os.environ.get("BHAKTI_HOST", "127.0.0.1")
    port = os.environ.get("BHAKTI_PORT", str(DEFAULT_PORT))
    return f"{host}:{port}"


def _parse_vector(text: str) -> list[float]:
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    value = json.loads(text)
    if not isinstance(value, list):
        raise ValueError("vector must be a JSON array")
    return value


def _parse_value(text: str) -> Any:
    """JSON if it parses, bare string otherwise ('3' is a number, '\"3\"' a string)."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _print_doc(doc: Document | None, as_json: bool) -> None:
    if doc is None:
        print("null" if as_json else "(not found)")
        return
    if as_json:
        print(json.dumps(doc.to_json_dict(), ensure_ascii=False))
        return
    print(f"id={doc.id}")
    print(f"vector={[float(x) for x in doc.vector]}")
    for name in sorted(doc.fields):
        print(f"  {name} = {doc.fields[name]!r}")


def _print_hits(hits: list[tuple[Document, float]], as_json: bool) -> None:
    if as_json:
        payload = [{"document": d.to_json_dict(), "distance": dist} for d, dist in hits]
        print(json.dumps(payload, ensure_ascii=False))
        return
    if not hits:
        print("(no results)")
        return
    print(f"{'rank':>4}  {'id':>6}  {'distance':>14}  fields")
    for rank, (doc, dist) in enumerate(hits, 1):
        summary = ", ".join(f"{k}={doc.fields[k]!r}" for k in sorted(doc.fields))
        print(f"{rank:>4}  {doc.id:>6}  {dist:>14.8f}  {summary}")


def _embedder(args) -> memory.Embedder:
    url = os.environ.get("BHAKTI_EMBED_URL")
    if url:
        return memory.HttpEmbedder(url)
    return memory.toy_embedder(args.dim)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhakti", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the server until SIGINT/SIGTERM")
    p.add_argument("--host", default=os.environ.get("BHAKTI_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("BHAKTI_PORT", DEFAULT_PORT)))
    p.add_argument("--data-dir", default=os.environ.get("BHAKTI_DATA_DIR", "bhakti-data"))
    p.add_argument("--no-cache", action="store_true", help="stream documents from disk")
    p.add_argument("--flush-interval", type=float, default=1.0)
    p.add_argument("--read-timeout", type=float, default=30.0)
    p.add_argument("--max-connections", type=int, default=1024)
    p.add_argument("--op-log", default=None, help="append committed mutations to this JSONL file")

    def client_parser(name: str, help_text: str):
        cp = sub.add_parser(name, help=help_text)
        cp.add_argument("--addr", default=_default_addr())
        cp.add_argument("--json", action="store_true", help="raw JSON output")
        return cp

    client_parser("ping", "server liveness check")

    p = client_parser("create", "store a document under a vector")
    p.add_argument("--vector", required=True)
    p.add_argument("--fields", default="{}", help="JSON object of field values")
    p.add_argument("--index", action="append", default=[], help="register an index (repeatable)")

    p = client_parser("index", "create an inverted index")
    p.add_argument("name")
    p.add_argument("--detailed", action="store_true")

    p = client_parser("knn", "k nearest documents to a query vector")
    p.add_argument("--vector", required=True)
    p.add_argument("--metric", default="cosine", choices=METRIC_NAMES)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--query", default=None, help="DSL pre-filter")

    p = client_parser("get", "exact lookup by vector")
    p.add_argument("--vector", required=True)

    p = client_parser("mod", "upsert one field of a document")
    p.add_argument("--vector", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--value", required=True)

    p = client_parser("rm", "remove the document stored under a vector")
    p.add_argument("--vector", required=True)

    p = client_parser("rmq", "remove every document matching a DSL filter")
    p.add_argument("--query", required=True)

    client_parser("save", "force a snapshot on the server")
    client_parser("indices", "list registered inverted indices")

    mem = sub.add_parser("mem", help="dialogue memory").add_subparsers(dest="mem_command", required=True)
    p = mem.add_parser("add", help="memorize a conversation turn")
    p.add_argument("query")
    p.add_argument("answer")
    p.add_argument("--addr", default=_default_addr())
    p.add_argument("--uid", required=True)
    p.add_argument("--bid", required=True)
    p.add_argument("--wq", type=float, default=0.5)
    p.add_argument("--wa", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=64, help="toy embedder dim (no BHAKTI_EMBED_URL)")

    p = mem.add_parser("recall", help="recall templated memories")
    p.add_argument("query")
    p.add_argument("--addr", default=_default_addr())
    p.add_argument("--uid", required=True)
    p.add_argument("--bid", required=True)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--metric", default="cosine", choices=METRIC_NAMES)
    p.add_argument("--dim", type=int, default=64)

    p = sub.add_parser("bench", help="latency scaling benchmark")
    p.add_argument("--sizes", default=None, help="comma-separated dataset sizes")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("-k", "--k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--selectivity", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metric", default="cosine", choices=METRIC_NAMES)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--dat", default=None, help="gnuplot .dat path (default: <out>.dat)")
    p.add_argument("--addr", default=None, help="benchmark a remote server instead")
    p.add_argument("--scan-filter", action="store_true", help="filter via full scan (no index)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except BhaktiError as exc:
        print(f"error: {exc.wire_message()}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _run(args) -> int:
    if args.command == "serve":
        config = ServerConfig(
            host=args.host,
            port=args.port,
            data_dir=args.data_dir,
            cached=not args.no_cache,
            flush_interval=args.flush_interval,
            read_timeout=args.read_timeout,
            max_connections=args.max_connections,
            op_log=args.op_log,
        )
        return serve(config)

    if args.command == "bench":
        sizes = (
            tuple(int(s) for s in args.sizes.split(","))
            if args.sizes
            else bench_mod.DEFAULT_SIZES
        )
        config = bench_mod.BenchConfig(
            sizes=sizes,
            dim=args.dim,
            k=args.k,
            repeats=args.repeats,
            selectivity=args.selectivity,
            seed=args.seed,
            metric=args.metric,
            scan_filter=args.scan_filter,
        )
        dat = args.dat if args.dat is not None else str(Path(args.out).with_suffix(".dat"))
        rows = bench_mod.run_bench(
            config,
            target=args.addr,
            out_csv=args.out,
            out_dat=dat,
            progress=lambda msg: print(msg, file=sys.stderr),
        )
        print(bench_mod.CSV_HEADER)
        for row in rows:
            print(row.csv())
        print(f"wrote {args.out}", file=sys.stderr)
        return 0

    if args.command == "mem":
        with BhaktiClient(args.addr) as client:
            embedder = _embedder(args)
            if args.mem_command == "add":
                record, vector = memory.memorize_conversation(
                    args.query,
                    args.answer,
                    args.uid,
                    args.bid,
                    embedder,
                    client,
                    weights=memory.Weights(args.wq, args.wa),
                )
                print(f"stored memory at {memory.format_template(record)!r}")
                return 0
            templates = memory.recall_memories_templated(
                args.query, args.k, args.metric, args.uid, args.bid, embedder, client
            )
            for line in templates:
                print(line)
            if not templates:
                print("(no memories)", file=sys.stderr)
            return 0

    with BhaktiClient(args.addr) as client:
        if args.command == "ping":
            print("pong" if client.ping() else "no pong")
        elif args.command == "create":
            doc = client.create_doc(
                _parse_vector(args.vector), json.loads(args.fields), args.index
            )
            _print_doc(doc, args.json)
        elif args.command == "index":
            result = client.create_index(args.name, detailed=args.detailed)
            print(json.dumps(result) if args.json or args.detailed else "created")
        elif args.command == "knn":
            hits = client.knn(_parse_vector(args.vector), args.metric, args.k, args.query)
            _print_hits(hits, args.json)
        elif args.command == "get":
            _print_doc(client.get_by_vector(_parse_vector(args.vector)), args.json)
        elif args.command == "mod":
            doc = client.mod_field(
                _parse_vector(args.vector), args.field, _parse_value(args.value)
            )
            _print_doc(doc, args.json)
        elif args.command == "rm":
            print("removed" if client.remove_by_vector(_parse_vector(args.vector)) else "absent")
        elif args.command == "rmq":
            print(f"removed {client.remove_by_query(args.query)} document(s)")
        elif args.command == "save":
            client.save()
            print("saved")
        elif args.command == "indices":
            names = client.indices_list()
            print(json.dumps(names) if args.json else "\n".join(names) or "(none)")
        else:
            raise ValueError(f"unhandled command {args.command!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
