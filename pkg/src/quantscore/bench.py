"""Latency harness: untimed warm-up, then individually clocked passes, median aggregate."""

from __future__ import annotations

import datetime as _dt
import os
import platform
import socket
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DomainError, ProtocolError


@dataclass(frozen=True)
class TimingProtocol:
    warmup_iters: int = 100
    timed_iters: int = 1000
    batch_size: int = 64
    aggregator: str = "median"

    def __post_init__(self):
        if self.warmup_iters < 0 or self.timed_iters <= 0 or self.batch_size <= 0:
            raise DomainError("timing protocol needs warmup >= 0 and positive timed iterations and batch size")
        if self.aggregator != "median":
            raise DomainError("the aggregator is fixed to the median")


@dataclass(frozen=True)
class LatencySample:
    durations_ms: tuple
    median_ms: float
    p10_ms: float
    p90_ms: float
    environment: dict
    warnings: tuple = field(default_factory=tuple)

    def to_json(self, include_durations: bool = False) -> dict:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        if include_durations:
            d["durations_ms"] = list(self.durations_ms)
        else:
            del d["durations_ms"]
            d["timed_iters"] = len(self.durations_ms)
            d["min_ms"] = min(self.durations_ms)
            d["max_ms"] = max(self.durations_ms)
        return d


def environment() -> dict:
    clock = time.get_clock_info("perf_counter")
    return {
        "host": socket.gethostname(),
        "cpu_count": os.cpu_count(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "clock": clock.implementation,
        "clock_resolution_s": clock.resolution,
        "monotonic": clock.monotonic,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def measure_latency(model, protocol: TimingProtocol, batch: np.ndarray, *, parallel: bool = False, clock=time.perf_counter_ns) -> LatencySample:
    """Median per-pass latency of ``model.forward(batch)`` in milliseconds.

    Passes run with BLAS pinned to one thread. ``clock`` must return
    monotonic nanoseconds; it is injectable for tests.
    """
    if parallel:
        raise ProtocolError("latency is measured single-threaded; parallel evaluation was requested")
    if batch.shape[0] != protocol.batch_size:
        raise ProtocolError(f"batch has {batch.shape[0]} samples, protocol expects {protocol.batch_size}")
    durations = np.empty(protocol.timed_iters, dtype=np.float64)
    with threadpool_limits(limits=1):
        for _ in range(protocol.warmup_iters):
            model.forward(batch)
        for k in range(protocol.timed_iters):
            start = clock()
            model.forward(batch)
            durations[k] = (clock() - start) / 1e6
    if (durations <= 0).any():
        raise ProtocolError("a timed pass took zero time; the clock is too coarse for this model")
    median = float(np.median(durations))
    env = environment()
    warnings = []
    resolution_ms = env["clock_resolution_s"] * 1e3
    if resolution_ms > 0.01 * median:
        warnings.append(f"timer resolution {resolution_ms:.3g} ms exceeds 1% of the median {median:.3g} ms")
    return LatencySample(
        tuple(float(d) for d in durations),
        median,
        float(np.percentile(durations, 10)),
        float(np.percentile(durations, 90)),
        env,
        tuple(warnings),
    )
