"""JSON run configuration.

A config is one JSON object. Every key is optional except ``seed`` when the
trace is synthesized; unknown keys anywhere are rejected with the line they
appear on.

    {
      "trace": {"source": "standard_burst"},
      "controller": "statuscale",
      "controllers": ["statuscale", "pid_only"],
      "seed": 42,
      "detector": {"lam": 30},
      "vertical": {"max_quota": 2.0},
      "horizontal": {"max_replicas": 10},
      "profile": {"curve": [[0, 0], [100, 0.8]]},
      "calibration": {"lambda_grid": [10, 30, 50]}
    }
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .exceptions import ConfigError, SchemaMismatch
from .horizontal import HorizontalConfig
from .predictor import PredictorParams
from .profile import ServiceProfile
from .simulator import CONTROLLERS, DetectorConfig, SimulationConfig, VerticalConfig
from .trace import TraceSchema, WorkloadTrace, load_trace, standard_burst_trace, synthesize_trace

TRACE_SOURCES = ("standard_burst", "synthetic", "file")
SYNTHETIC_SOURCES = ("standard_burst", "synthetic")


@dataclass(frozen=True)
class TraceSpec:
    source: str = "standard_burst"
    path: str | None = None
    schema: dict | None = None
    base_profile: str = "constant"
    bursts: tuple = ()
    noise_std: float | None = None
    length: int | None = None
    interval: float = 20.0
    level: float = 100.0
    swing: float = 0.0
    period: float | None = None

    def build(self, seed: int | None, base_dir: Path | None = None) -> WorkloadTrace:
        if self.source == "file":
            path = Path(self.path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            schema = TraceSchema.from_mapping(self.schema) if self.schema else None
            return load_trace(path, schema)
        if self.source == "standard_burst":
            kw = {"interval": self.interval}
            if self.noise_std is not None:
                kw["noise_std"] = self.noise_std
            if self.length is not None:
                kw["length"] = self.length
            return standard_burst_trace(seed, **kw)
        return synthesize_trace(self.base_profile, self.bursts,
                                0.0 if self.noise_std is None else self.noise_std, seed,
                                360 if self.length is None else self.length, self.interval,
                                self.level, self.swing, self.period)


@dataclass(frozen=True)
class SimulationFlags:
    vertical_first: bool = True
    scale_down_guard: bool = True
    provisioning_delay: int = 1
    refit_on_stable: bool = True


@dataclass(frozen=True)
class CalibrationSpec:
    lambda_grid: tuple = tuple(range(5, 60, 5))
    tolerance: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    trace: TraceSpec = field(default_factory=TraceSpec)
    controller: str = "statuscale"
    controllers: tuple = ("statuscale", "predictor_only", "pid_only", "threshold_only")
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    slos: tuple = (200.0, 250.0)
    seed: int | None = None
    omega: float = 1.0
    output_dir: str = "out"
    repeats: int = 1
    equalize_budget: bool = True
    budget_tolerance: float = 0.01
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    base_dir: Path | None = None

    @property
    def synthetic(self) -> bool:
        return self.trace.source in SYNTHETIC_SOURCES

    def build_trace(self, seed: int | None = None) -> WorkloadTrace:
        return self.trace.build(self.seed if seed is None else seed, self.base_dir)


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    def __init__(self, text: str):
        self.text = text

    def fail(self, msg: str, key: str | None = None):
        raise ConfigError(msg, _line_of(self.text, key) if key else None)

    def block(self, obj: Any, cls, where: str, convert=None) -> dict:
        if not isinstance(obj, dict):
            self.fail(f"{where} must be an object", where)
        names = {f.name for f in dataclasses.fields(cls)}
        for key in obj:
            if key not in names:
                self.fail(f"unknown key {key!r} in {where}", key)
        out = dict(obj)
        for key, fn in (convert or {}).items():
            if key in out and out[key] is not None:
                out[key] = fn(out[key])
        return out

    def make(self, cls, kwargs: dict, where: str):
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            self.fail(f"invalid {where}: {exc}", where)


def _tuple_of_tuples(v):
    return tuple(tuple(float(x) for x in row) for row in v)


def parse_config(text: str, base_dir: Path | None = None, seed: int | None = None,
                 omega: float | None = None) -> RunConfig:
    """Parse and validate a JSON config; ``seed``/``omega`` override the file."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", 1)
    r = _Reader(text)
    top = {f.name for f in dataclasses.fields(RunConfig)} - {"simulation", "base_dir"}
    top |= {"detector", "predictor", "vertical", "horizontal", "profile", "simulation"}
    for key in raw:
        if key not in top:
            r.fail(f"unknown key {key!r}", key)

    tr = r.block(raw.get("trace", {}), TraceSpec, "trace", {"bursts": _tuple_of_tuples})
    trace = r.make(TraceSpec, tr, "trace")
    if trace.source not in TRACE_SOURCES:
        r.fail(f"trace source must be one of {TRACE_SOURCES}, got {trace.source!r}", "source")
    if trace.source == "file" and not trace.path:
        r.fail("file traces need a path", "trace")
    if trace.schema is not None:
        try:
            TraceSchema.from_mapping(trace.schema)
        except (SchemaMismatch, TypeError) as exc:
            r.fail(str(exc), "schema")

    blocks = {
        "detector": DetectorConfig, "predictor": PredictorParams, "vertical": VerticalConfig,
        "horizontal": HorizontalConfig,
    }
    parts = {name: r.make(cls, r.block(raw.get(name, {}), cls, name), name) for name, cls in blocks.items()}
    parts["profile"] = r.make(ServiceProfile, r.block(raw.get("profile", {}), ServiceProfile, "profile",
                                                      {"curve": _tuple_of_tuples}), "profile")
    flags = r.make(SimulationFlags, r.block(raw.get("simulation", {}), SimulationFlags, "simulation"),
                   "simulation")
    try:
        sim = SimulationConfig(**parts, **dataclasses.asdict(flags))
    except ValueError as exc:
        r.fail(str(exc), "vertical")

    cal = r.make(CalibrationSpec, r.block(raw.get("calibration", {}), CalibrationSpec, "calibration",
                                          {"lambda_grid": lambda v: tuple(float(x) for x in v)}), "calibration")

    kw = {k: raw[k] for k in ("controller", "seed", "omega", "output_dir", "repeats", "equalize_budget",
                              "budget_tolerance") if k in raw}
    if "controllers" in raw:
        kw["controllers"] = tuple(raw["controllers"])
    if "slos" in raw:
        kw["slos"] = tuple(float(x) for x in raw["slos"])
    if seed is not None:
        kw["seed"] = seed
    if omega is not None:
        kw["omega"] = omega
    cfg = RunConfig(trace=trace, simulation=sim, calibration=cal, base_dir=base_dir, **kw)

    for name in (cfg.controller, *cfg.controllers):
        if name not in CONTROLLERS:
            r.fail(f"unknown controller {name!r}; expected one of {CONTROLLERS}",
                   "controllers" if name != cfg.controller else "controller")
    if cfg.seed is not None and (isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int)):
        r.fail("seed must be an integer", "seed")
    if cfg.synthetic and cfg.seed is None:
        r.fail("seed is required for synthetic traces", "trace")
    if not isinstance(cfg.repeats, int) or cfg.repeats < 1:
        r.fail("repeats must be a positive integer", "repeats")
    if not cfg.slos or any(s <= 0 for s in cfg.slos):
        r.fail("slos must be a non-empty list of positive values", "slos")
    if not 0 < cfg.budget_tolerance < 1:
        r.fail("budget_tolerance must lie in (0, 1)", "budget_tolerance")
    return cfg


def load_config(path, seed: int | None = None, omega: float | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, seed, omega)
