"""Query-latency scaling benchmark: k-NN time vs dataset size, with and
without inverted-index pre-filtering, emitting CSV and a gnuplot .dat file.

Absolute milliseconds are hardware-bound; consumers should compare curve
shapes and orderings (filtered <= unfiltered, growth with size), not
values. A deterministic seed fixes the dataset, so result sets are
reproducible even though latencies are not.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import dsl
from .client import BhaktiClient
from .engine import Engine
from .errors import BhaktiError, ConfigInvalid, TargetUnavailable
from .metrics import METRIC_NAMES, Vector, as_vector, distance

DEFAULT_SIZES = (1,) + tuple(range(250, 5001, 250))

CSV_HEADER = "size,mode,mean_ms,p50_ms,p95_ms"


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple[int, ...] = DEFAULT_SIZES
    dim: int = 128
    k: int = 10
    repeats: int = 30
    selectivity: float = 0.1
    seed: int = 0
    metric: str = "cosine"
    scan_filter: bool = False  # filter on an unindexed twin field instead
    warmup: int = 5

    def __post_init__(self):
        if not self.sizes or list(self.sizes) != sorted(set(self.sizes)):
            raise ConfigInvalid("sizes must be non-empty, ascending and unique")
        if any(s < 1 for s in self.sizes):
            raise ConfigInvalid("sizes must be positive")
        if not 0 < self.selectivity <= 1:
            raise ConfigInvalid("selectivity must be in (0, 1]")
        if self.repeats < 1:
            raise ConfigInvalid("repeats must be >= 1")
        if self.dim < 1 or self.k < 1:
            raise ConfigInvalid("dim and k must be >= 1")
        if self.metric not in METRIC_NAMES:
            raise ConfigInvalid(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class BenchRow:
    size: int
    mode: str  # "filtered" | "unfiltered"
    mean_ms: float
    p50_ms: float
    p95_ms: float

    def csv(self) -> str:
        return f"{self.size},{self.mode},{self.mean_ms:.6f},{self.p50_ms:.6f},{self.p95_ms:.6f}"


@dataclass
class _Dataset:
    vectors: list[Vector]
    fields: list[dict[str, object]]
    queries: dict[int, list[Vector]] = field(default_factory=dict)


def _is_hot(i: int, selectivity: float) -> bool:
    # exact prefix selectivity: every prefix of size n holds floor(n*s) hot docs
    return int((i + 1) * selectivity) > int(i * selectivity)


def _generate(config: BenchConfig) -> _Dataset:
    rng = np.random.default_rng(config.seed)
    total = max(config.sizes)
    vectors = []
    fields = []
    for i in range(total):
        raw = rng.standard_normal(config.dim)
        vectors.append(as_vector(raw / np.linalg.norm(raw)))
        grp = "hot" if _is_hot(i, config.selectivity) else "cold"
        fields.append({"grp": grp, "grp_scan": grp, "tag": f"d{i}"})
    qrng = np.random.default_rng(config.seed + 1)
    queries = {}
    for size in config.sizes:
        qs = []
        for _ in range(config.repeats + config.warmup):
            raw = qrng.standard_normal(config.dim)
            qs.append(as_vector(raw / np.linalg.norm(raw)))
        queries[size] = qs
    return _Dataset(vectors, fields, queries)


def _percentile(sorted_ms: list[float], fraction: float) -> float:
    rank = max(1, int(np.ceil(fraction * len(sorted_ms))))
    return sorted_ms[rank - 1]


def _oracle_topk(
    data: _Dataset, size: int, query: Vector, metric: str, k: int, hot_only: bool
) -> list[int]:
    """Independent full scan + sort over the generated dataset."""
    scored = []
    for i in range(size):
        if hot_only and data.fields[i]["grp"] != "hot":
            continue
        scored.append((distance(metric, query, data.vectors[i]), i))
    scored.sort()
    return [i for _, i in scored[:k]]


def run_bench(
    config: BenchConfig,
    target: str | None = None,
    out_csv: str | Path | None = None,
    out_dat: str | Path | None = None,
    verify_fraction: float = 0.01,
    progress: Callable[[str], None] | None = None,
) -> list[BenchRow]:
    """Measure each (size, mode) cell; returns rows sorted by (size, mode).

    ``target=None`` benchmarks an in-process engine; an address string
    benchmarks a live server (which must start empty). A deterministic 1%
    sample of measured queries is re-verified against a full-scan oracle.
    """
    data = _generate(config)
    filter_field = "grp_scan" if config.scan_filter else "grp"
    filter_text = f'{filter_field} == "hot"'

    client: BhaktiClient | None = None
    engine: Engine | None = None
    if target is None:
        engine = Engine()
        engine.create_index("grp")
        filter_expr = dsl.parse(filter_text)

        def insert(i: int) -> None:
            engine.create(data.vectors[i], data.fields[i])

        def knn(query: Vector, filtered: bool) -> list[int]:
            hits = engine.knn_search(query, config.metric, config.k, filter_expr if filtered else None)
            return [doc.id for doc, _ in hits]

    else:
        try:
            client = BhaktiClient(target)
            client.create_index("grp")
        except BhaktiError as exc:
            raise TargetUnavailable(f"cannot reach {target}: {exc}") from exc

        def insert(i: int) -> None:
            client.create_doc(data.vectors[i], data.fields[i])

        def knn(query: Vector, filtered: bool) -> list[int]:
            hits = client.knn(query, config.metric, config.k, query=filter_text if filtered else None)
            return [doc.id for doc, _ in hits]

    rows: list[BenchRow] = []
    verify_every = max(1, int(round(1 / verify_fraction))) if verify_fraction > 0 else 0
    try:
        inserted = 0
        for size in config.sizes:
            for i in range(inserted, size):
                insert(i)
            inserted = size
            queries = data.queries[size]
            for mode in ("filtered", "unfiltered"):
                filtered = mode == "filtered"
                for q in queries[: config.warmup]:
                    knn(q, filtered)
                samples_ms = []
                for qi, q in enumerate(queries[config.warmup:]):
                    started = time.perf_counter()
                    got = knn(q, filtered)
                    samples_ms.append((time.perf_counter() - started) * 1e3)
                    if verify_every and qi % verify_every == 0:
                        want = _oracle_topk(data, size, q, config.metric, config.k, filtered)
                        if got != want:
                            raise AssertionError(
                                f"result mismatch at size={size} mode={mode}: {got} != {want}"
                            )
                ordered = sorted(samples_ms)
                rows.append(
                    BenchRow(
                        size=size,
                        mode=mode,
                        mean_ms=statistics.fmean(samples_ms),
                        p50_ms=statistics.median(samples_ms),
                        p95_ms=_percentile(ordered, 0.95),
                    )
                )
            if progress is not None:
                progress(f"size {size} done")
    finally:
        if client is not None:
            client.close()

    rows.sort(key=lambda r: (r.size, r.mode))
    if out_csv is not None:
        write_csv(rows, config, out_csv)
    if out_dat is not None:
        write_dat(rows, out_dat)
    return rows


def write_csv(rows: list[BenchRow], config: BenchConfig, path: str | Path) -> None:
    lines = [
        f"# dim={config.dim} k={config.k} repeats={config.repeats}"
        f" selectivity={config.selectivity} metric={config.metric}"
        f" seed={config.seed} scan_filter={config.scan_filter}",
        CSV_HEADER,
    ]
    lines += [row.csv() for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_dat(rows: list[BenchRow], path: str | Path) -> None:
    """Wide gnuplot format: size, unfiltered mean, filtered mean."""
    by_size: dict[int, dict[str, float]] = {}
    for row in rows:
        by_size.setdefault(row.size, {})[row.mode] = row.mean_ms
    lines = ["# size unfiltered_mean_ms filtered_mean_ms"]
    for size in sorted(by_size):
        cell = by_size[size]
        lines.append(f"{size} {cell.get('unfiltered', 0.0):.6f} {cell.get('filtered', 0.0):.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
