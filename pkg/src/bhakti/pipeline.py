"""Staged request processing: ordered stages transform a per-request Context.

A Pipeline is immutable once built and shareable across threads; each
Context is owned by exactly one in-flight launch. Stages run strictly in
declaration order; a failing stage short-circuits the remaining stages and
records the failure on the Context (the caller renders it into an error
response, so one bad request never kills the connection). A stage setting
``eof`` ends the launch gracefully with no response.

The runtime may interleave any number of in-flight launches (the server
runs one per connection thread); stages that block on sockets or disk
declare ``performs_io`` so runtimes can schedule around them. Each launch
handles one request; the server loops launches for a connection's stream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import DuplicateStageName, StageError


@dataclass
class Context:
    """Per-request state handed from stage to stage."""

    input: bytes = b""
    output: bytes = b""
    eof: bool = False
    extras: dict[str, Any] = field(default_factory=dict)
    error: StageError | None = None


@dataclass(frozen=True)
class Stage:
    """One named processing step; reads and writes only its Context."""

    name: str
    transform: Callable[[Context], Context]
    performs_io: bool = False


@dataclass(frozen=True)
class Pipeline:
    stages: tuple[Stage, ...] = ()

    def __post_init__(self):
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise DuplicateStageName(", ".join(sorted(set(n for n in names if names.count(n) > 1))))

    def launch(self, ctx: Context) -> Context:
        """Run every stage in order; failures short-circuit into ctx.error.

        Per-stage wall times land in ``ctx.extras["stage_us"]`` for the
        caller's metrics line.
        """
        if not self.stages:
            raise ValueError("pipeline has no stages")
        timings: dict[str, float] = {}
        for stage in self.stages:
            if ctx.eof:
                break
            started = time.perf_counter()
            try:
                ctx = stage.transform(ctx)  # a stage may hand back a new Context
            except Exception as exc:
                ctx.error = StageError(stage.name, exc)
                break
            finally:
                timings[stage.name] = (time.perf_counter() - started) * 1e6
        ctx.extras["stage_us"] = timings
        return ctx


def append_stage(pipeline: Pipeline, stage: Stage) -> Pipeline:
    """New pipeline with ``stage`` at the end; the original is untouched."""
    if any(s.name == stage.name for s in pipeline.stages):
        raise DuplicateStageName(stage.name)
    return Pipeline(pipeline.stages + (stage,))


def launch(pipeline: Pipeline, ctx: Context) -> Context:
    return pipeline.launch(ctx)
