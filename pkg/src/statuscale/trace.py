"""Workload traces: CSV ingestion, synthetic generation and sliding windows."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import BurstOutOfRange, EmptyTrace, InsufficientData, SchemaMismatch

DEFAULT_INTERVAL = 20.0

# cluster-trace-v2018 machine_usage.csv column order
ALIBABA_MACHINE_USAGE_COLUMNS = (
    "machine_id",
    "time_stamp",
    "cpu_util_percent",
    "mem_util_percent",
    "mem_gps",
    "mkpi",
    "net_in",
    "net_out",
    "disk_io_percent",
)


@dataclass(frozen=True)
class TracePoint:
    timestamp: float
    load: float
    cpu_demand: float | None = None

    def __post_init__(self):
        if not (self.timestamp >= 0 and math.isfinite(self.timestamp)):
            raise ValueError(f"timestamp must be finite and non-negative, got {self.timestamp}")
        if not (self.load >= 0 and math.isfinite(self.load)):
            raise ValueError(f"load must be finite and non-negative, got {self.load}")
        if self.cpu_demand is not None and not 0.0 <= self.cpu_demand <= 1.0:
            raise ValueError(f"cpu_demand must lie in [0, 1], got {self.cpu_demand}")


@dataclass(frozen=True)
class WorkloadTrace:
    points: tuple[TracePoint, ...]
    sample_interval: float = DEFAULT_INTERVAL
    source_tag: str = ""
    dropped_count: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        ts = [p.timestamp for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.points)

    @property
    def loads(self) -> np.ndarray:
        return np.array([p.load for p in self.points], dtype=float)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self.points], dtype=float)

    @classmethod
    def from_loads(cls, loads: Iterable[float], interval: float = DEFAULT_INTERVAL,
                   source_tag: str = "array") -> "WorkloadTrace":
        pts = tuple(TracePoint(i * interval, float(v)) for i, v in enumerate(loads))
        return cls(pts, interval, source_tag)


@dataclass(frozen=True)
class SlidingWindow:
    values: tuple[float, ...]

    @property
    def length(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class TraceSchema:
    """Column mapping for CSV ingestion.

    ``cpu_usage`` values are divided by ``cpu_scale`` to obtain a fraction
    (the Alibaba extract reports percentages). When no load column is mapped,
    the load signal is ``cpu_usage * load_per_cpu``.
    """

    timestamp: str = "timestamp"
    load: str | None = None
    cpu_usage: str | None = None
    cpu_scale: float = 100.0
    load_per_cpu: float = 1.0

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "TraceSchema":
        unknown = set(mapping) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaMismatch(f"unknown schema keys: {sorted(unknown)}")
        return cls(**mapping)


ALIBABA_SCHEMA = TraceSchema(timestamp="time_stamp", cpu_usage="cpu_util_percent")
EMIT_SCHEMA = TraceSchema(timestamp="timestamp", load="load", cpu_usage="cpu_demand", cpu_scale=1.0)


def _infer_interval(timestamps: Sequence[float]) -> float:
    if len(timestamps) < 2:
        return DEFAULT_INTERVAL
    return float(np.median(np.diff(timestamps)))


def parse_trace(raw_text: str, schema: TraceSchema | Mapping[str, object] | None = None,
                source_tag: str = "csv") -> WorkloadTrace:
    """Parse CSV text into a trace sorted by timestamp.

    Rows with an unparseable or out-of-range numeric field are dropped and
    counted in ``dropped_count``; on duplicate timestamps the last row wins.
    """
    default = schema is None
    if default:
        # the cpu_demand column is optional in files this package writes
        schema = EMIT_SCHEMA
    elif not isinstance(schema, TraceSchema):
        schema = TraceSchema.from_mapping(schema)
    if schema.load is None and schema.cpu_usage is None:
        raise SchemaMismatch("schema must map at least one of load / cpu_usage")

    reader = csv.reader(io.StringIO(raw_text))
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise EmptyTrace("trace file is empty")
    header = [h.strip() for h in header]
    if default and schema.cpu_usage not in header:
        schema = TraceSchema(schema.timestamp, schema.load, None)
    wanted = [c for c in (schema.timestamp, schema.load, schema.cpu_usage) if c is not None]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaMismatch(f"columns not found in header: {missing}")
    idx = {c: header.index(c) for c in wanted}

    rows: dict[float, TracePoint] = {}
    dropped = 0
    seen_rows = 0
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        seen_rows += 1
        try:
            ts = float(row[idx[schema.timestamp]])
            cpu = None
            cell = row[idx[schema.cpu_usage]].strip() if schema.cpu_usage is not None else ""
            # an empty cpu cell is only missing data when load comes from its own column
            if cell or (schema.cpu_usage is not None and schema.load is None):
                cpu = float(cell) / schema.cpu_scale
            if schema.load is not None:
                load = float(row[idx[schema.load]])
            else:
                load = float(row[idx[schema.cpu_usage]]) * schema.load_per_cpu
            point = TracePoint(ts, load, cpu)
        except (ValueError, IndexError):
            dropped += 1
            continue
        rows[ts] = point  # last row wins
    if seen_rows == 0:
        raise EmptyTrace("trace has a header but no data rows")
    if not rows:
        raise EmptyTrace(f"all {dropped} rows were unparseable")

    points = tuple(rows[t] for t in sorted(rows))
    ts = [p.timestamp for p in points]
    return WorkloadTrace(points, _infer_interval(ts), source_tag, dropped_count=dropped)


def emit_trace(trace: WorkloadTrace) -> str:
    """Serialize a trace to CSV readable by ``parse_trace`` with the default schema."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp", "load", "cpu_demand"])
    for p in trace.points:
        writer.writerow([repr(p.timestamp), repr(p.load), "" if p.cpu_demand is None else repr(p.cpu_demand)])
    return buf.getvalue()


def load_trace(path, schema=None, source_tag=None) -> WorkloadTrace:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_trace(text, schema, source_tag or str(path))


def synthesize_trace(
    base_profile: str = "constant",
    burst_spec: Sequence[Sequence[float]] = (),
    noise_std: float = 0.0,
    seed: int = 0,
    length: int = 360,
    interval: float = DEFAULT_INTERVAL,
    level: float = 100.0,
    swing: float = 0.0,
    period: float | None = None,
) -> WorkloadTrace:
    """Generate a reproducible synthetic workload.

    ``constant`` holds ``level``; ``sine`` oscillates by ``swing`` around it
    with the given ``period`` (defaults to the trace span); ``ramp`` rises
    linearly from ``level`` to ``level + swing``. Each burst
    ``(start, duration, amplitude)`` adds ``amplitude`` on ``[start, start + duration)``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if not interval > 0:
        raise ValueError("interval must be positive")
    span = length * interval
    t = np.arange(length, dtype=float) * interval
    if base_profile == "constant":
        base = np.full(length, float(level))
    elif base_profile == "sine":
        per = span if period is None else float(period)
        base = level + swing * np.sin(2.0 * np.pi * t / per)
    elif base_profile == "ramp":
        frac = t / max(span - interval, interval)
        base = level + swing * frac
    else:
        raise ValueError(f"unknown base profile {base_profile!r}")

    loads = base.copy()
    for burst in burst_spec:
        start, duration, amplitude = (float(x) for x in burst)
        if amplitude < 0:
            raise ValueError("burst amplitude must be non-negative")
        if start < 0 or duration <= 0 or start + duration > span:
            raise BurstOutOfRange(f"burst ({start}, {duration}) outside trace span [0, {span})")
        loads[(t >= start) & (t < start + duration)] += amplitude

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, length) * noise_std
    loads = np.maximum(loads + noise, 0.0)
    tag = f"synthetic:{base_profile}:seed={seed}"
    return WorkloadTrace(tuple(TracePoint(float(ts), float(v)) for ts, v in zip(t, loads)), float(interval), tag)


# Three bursts over a 3-hour, 20-second-sampled constant base.
STANDARD_BURSTS = ((2400.0, 600.0, 300.0), (5400.0, 900.0, 200.0), (8400.0, 600.0, 350.0))


def standard_burst_trace(seed: int = 42, noise_std: float = 5.0, length: int = 540,
                         interval: float = DEFAULT_INTERVAL) -> WorkloadTrace:
    return synthesize_trace("constant", STANDARD_BURSTS, noise_std, seed, length, interval, level=100.0)


def windows(trace: WorkloadTrace | Sequence[float], length: int) -> list[tuple[SlidingWindow, float]]:
    """All ``(window, next_value)`` pairs, oldest first."""
    loads = trace.loads if isinstance(trace, WorkloadTrace) else np.asarray(trace, dtype=float)
    X, y = window_matrix(loads, length)
    return [(SlidingWindow(tuple(float(v) for v in row)), float(nxt)) for row, nxt in zip(X, y)]


def window_matrix(loads: Sequence[float], length: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked windows as an ``(n - length, length)`` feature matrix plus targets."""
    if length < 1:
        raise ValueError("window length must be >= 1")
    loads = np.asarray(loads, dtype=float)
    n = loads.shape[0]
    if n <= length:
        raise InsufficientData(f"need more than {length} points, got {n}")
    X = np.lib.stride_tricks.sliding_window_view(loads, length)[: n - length]
    return np.array(X), loads[length:].copy()
