"""Discrete-time simulation of one microservice under elastic scaling.

Timeline of interval ``i``:

1. replica changes decided two intervals earlier come online;
2. the offered load meets the current allocation, giving utilization and
   response time, and the row is recorded;
3. the controller observes the interval and sets the quota for ``i + 1``
   (vertical changes are instant) or orders a replica change that serves
   from ``i + 2`` (one interval of provisioning delay).

Controller variants:

``statuscale``        horizontal scoring first; otherwise threshold rule while
                      history is short, forecast-sized quota when the load is
                      Stable, adaptive PID when it is Unstable
``predictor_only``    as statuscale but the load is always treated as Stable
``pid_only``          as statuscale but the load is always treated as Unstable
``threshold_only``    as statuscale but the vertical branch is always the threshold rule
``vertical_only``     statuscale's vertical branch, replica count fixed
``horizontal_only``   replica scaling only, every replica at the maximum quota
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import metrics
from .detector import Status, StatusDetector
from .exceptions import BudgetEqualizationFailed, MeasurementInvalid, ProfileSaturated
from .horizontal import (
    Action,
    ClusterState,
    CooldownClock,
    HorizontalConfig,
    ScoreWindow,
    apply_action,
    decide,
    replica_delta,
    score,
)
from .predictor import PredictorParams, forecast_track
from .profile import ServiceProfile, response_time, utilization_from_load
from .trace import WorkloadTrace
from .vertical import GAIN_MAX, APidController, BpNetwork, quota_from_prediction, required_quota, threshold_scale

CONTROLLERS = ("statuscale", "predictor_only", "pid_only", "threshold_only", "horizontal_only", "vertical_only")

COLD = "ColdStart"


@dataclass(frozen=True)
class DetectorConfig:
    segment_size: int = 5
    lam: float = 30.0
    # loads are divided by this before line fitting; see StatusDetector
    load_scale: float = 20.0


@dataclass(frozen=True)
class VerticalConfig:
    target_utilization: float = 0.8
    min_quota: float = 0.1
    max_quota: float = 2.0
    initial_quota: float = 1.0
    band: float = 0.05
    step_fraction: float = 0.1
    step_floor: float = 0.1
    kp_max: float = GAIN_MAX[0]
    ki_max: float = GAIN_MAX[1]
    kd_max: float = GAIN_MAX[2]
    integral_limit: float = 5.0
    tuner_learning_rate: float = 0.05
    tuner_init_scale: float = 0.5

    def __post_init__(self):
        if not 0 < self.target_utilization < 1:
            raise ValueError("target_utilization must lie in (0, 1)")
        if not 0 < self.min_quota <= self.max_quota:
            raise ValueError("need 0 < min_quota <= max_quota")
        if self.band < 0 or self.step_fraction <= 0 or self.step_floor <= 0:
            raise ValueError("band must be >= 0 and steps positive")

    @property
    def bounds(self) -> tuple[float, float]:
        return self.min_quota, self.max_quota


@dataclass(frozen=True)
class SimulationConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    predictor: PredictorParams = field(default_factory=PredictorParams)
    vertical: VerticalConfig = field(default_factory=VerticalConfig)
    horizontal: HorizontalConfig = field(default_factory=HorizontalConfig)
    profile: ServiceProfile = field(default_factory=ServiceProfile)
    # check whether the vertical headroom covers the load before scaling out
    vertical_first: bool = True
    # only scale in when the remaining replicas can carry the load at target
    scale_down_guard: bool = True
    # intervals between a replica decision and the replicas serving load
    provisioning_delay: int = 1
    # refit the predictor whenever the detector returns to Stable
    refit_on_stable: bool = True

    def __post_init__(self):
        if self.provisioning_delay < 0:
            raise ValueError("provisioning_delay must be >= 0")
        if self.horizontal.target_utilization != self.vertical.target_utilization:
            raise ValueError("horizontal and vertical target utilization must agree")

    def with_min_quota(self, floor: float) -> "SimulationConfig":
        return replace(self, vertical=replace(self.vertical, min_quota=floor))


RECORD_COLUMNS = ("time", "load", "demand", "supply", "utilization", "replicas", "quota",
                  "response_time", "status", "action")


@dataclass
class RunRecord:
    controller: str
    interval: float
    time: list = field(default_factory=list)
    load: list = field(default_factory=list)
    demand: list = field(default_factory=list)
    supply: list = field(default_factory=list)
    utilization: list = field(default_factory=list)
    replicas: list = field(default_factory=list)
    quota: list = field(default_factory=list)
    response_time: list = field(default_factory=list)
    status: list = field(default_factory=list)
    action: list = field(default_factory=list)
    action_log: list = field(default_factory=list)

    def __len__(self):
        return len(self.time)

    def append(self, **row):
        for k in RECORD_COLUMNS:
            getattr(self, k).append(row[k])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for i in range(len(self)):
            w.writerow([repr(float(self.time[i])), repr(float(self.load[i])), repr(float(self.demand[i])),
                        repr(float(self.supply[i])), repr(float(self.utilization[i])), int(self.replicas[i]),
                        repr(float(self.quota[i])), repr(float(self.response_time[i])), self.status[i],
                        self.action[i]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, controller: str = "", interval: float | None = None) -> "RunRecord":
        rows = list(csv.DictReader(io.StringIO(text)))
        times = [float(r["time"]) for r in rows]
        if interval is None:
            interval = times[1] - times[0] if len(times) > 1 else 20.0
        rec = cls(controller, interval)
        for r in rows:
            rec.append(time=float(r["time"]), load=float(r["load"]), demand=float(r["demand"]),
                       supply=float(r["supply"]), utilization=float(r["utilization"]),
                       replicas=int(r["replicas"]), quota=float(r["quota"]),
                       response_time=float(r["response_time"]), status=r["status"], action=r["action"])
        return rec


class _Vertical:
    """Vertical-branch state for one run."""

    def __init__(self, cfg: SimulationConfig, seed: int):
        v = cfg.vertical
        self.cfg = cfg
        tuner = BpNetwork.initialize(seed, v.tuner_learning_rate, v.tuner_init_scale,
                                     (v.kp_max, v.ki_max, v.kd_max))
        self.pid = APidController(v.target_utilization, v.bounds, tuner=tuner, integral_limit=v.integral_limit)
        self.pid_engaged = False

    def threshold(self, quota, u):
        v = self.cfg.vertical
        step = max(v.step_fraction * quota, v.step_floor)
        self.pid_engaged = False
        return threshold_scale(quota, u, v.target_utilization, step, v.band, v.bounds)

    def predicted(self, forecast, replicas):
        v = self.cfg.vertical
        self.pid_engaged = False
        return quota_from_prediction(forecast, self.cfg.profile, v.target_utilization, replicas, v.bounds)

    def regulated(self, quota, u, floor=None):
        if not self.pid_engaged:
            # bumpless engage: no derivative kick from a stale error
            self.pid.reset()
            self.pid.prev_error = u - self.cfg.vertical.target_utilization
            self.pid_engaged = True
        try:
            return self.pid.regulate(quota, u, 1.0, floor)
        except MeasurementInvalid:
            return quota


def run_experiment(trace: WorkloadTrace, controller: str = "statuscale",
                   config: SimulationConfig | None = None, seed: int = 0,
                   forecasts: np.ndarray | None = None,
                   debug: Callable[[dict], None] | None = None) -> RunRecord:
    """Simulate ``controller`` over ``trace`` and return the per-interval record."""
    if controller not in CONTROLLERS:
        raise ValueError(f"unknown controller {controller!r}; expected one of {CONTROLLERS}")
    cfg = config or SimulationConfig()
    if len(trace) == 0:
        raise ValueError("trace is empty")
    v, h, profile = cfg.vertical, cfg.horizontal, cfg.profile
    dt = trace.sample_interval
    loads = trace.loads
    times = trace.timestamps
    n_pts = loads.shape[0]
    target = v.target_utilization
    per_core_at_target = profile.qps_per_core_at(target)

    use_horizontal = controller != "vertical_only"
    use_vertical = controller != "horizontal_only"
    vertical_first = cfg.vertical_first and controller != "horizontal_only"
    needs_forecast = controller in ("statuscale", "predictor_only", "vertical_only")
    needs_detector = controller in ("statuscale", "vertical_only")
    if needs_forecast and forecasts is None:
        forecasts = status_forecasts(trace, cfg) if needs_detector else forecast_track(loads, cfg.predictor)

    detector = StatusDetector(cfg.detector.segment_size, cfg.detector.lam, cfg.detector.load_scale).reset()
    vert = _Vertical(cfg, seed)
    window = ScoreWindow(h.window_length)
    quota = v.max_quota if controller == "horizontal_only" else min(max(v.initial_quota, v.min_quota), v.max_quota)
    cluster = ClusterState(replicas=h.min_replicas, per_replica_quota=quota, clock=CooldownClock(h.cooloff))
    serving = h.min_replicas
    pending: list[tuple[int, int]] = []
    rec = RunRecord(controller, dt)

    for i in range(n_pts):
        t, load = float(times[i]), float(loads[i])
        still = []
        for due, count in pending:
            if due <= i:
                serving = count
            else:
                still.append((due, count))
        pending = still

        u = utilization_from_load(profile, load / serving, quota)
        rt = response_time(u, profile)
        status = detector.observe(t, load) if needs_detector else None

        action = Action.HOLD
        next_quota = quota
        t_next = t + dt
        if use_horizontal:
            s_t = score(u, h)
            s_total = window.push(s_t)
            action = decide(window, s_t, h, cluster.clock, t)
            if action is Action.SCALE_UP and vertical_first:
                try:
                    fits = required_quota(load, profile, target, cluster.replicas) <= v.max_quota
                except ProfileSaturated:
                    fits = False
                if fits:
                    action = Action.HOLD
            elif action is Action.SCALE_DOWN and cfg.scale_down_guard:
                after = max(cluster.replicas - replica_delta(cluster.replicas, h.delta), h.min_replicas)
                try:
                    fits = required_quota(load, profile, target, after) <= v.max_quota
                except ProfileSaturated:
                    fits = False
                if not fits:
                    action = Action.HOLD
            if action is not Action.HOLD:
                before = cluster.replicas
                cluster = apply_action(replace(cluster, per_replica_quota=quota), action, h, t, v.bounds, dt,
                                       s_t, s_total)
                if cluster.replicas != before:
                    due = i + 1 + cfg.provisioning_delay
                    pending.append((due, cluster.replicas))
                    # quota decay counts from when the new replica set serves
                    cluster = replace(cluster, schedule=replace(cluster.schedule, start_time=t + (due - i) * dt))
                else:
                    action = Action.HOLD

        label = ""
        floor = cluster.quota_at(t_next, v.bounds) if cluster.schedule_active(t_next) else None
        if action is Action.HOLD and use_vertical:
            forecast = forecasts[i] if needs_forecast else math.nan
            if controller == "threshold_only":
                next_quota, label = vert.threshold(quota, u), COLD
            elif controller == "pid_only":
                next_quota, label = vert.regulated(quota, u, floor), str(Status.UNSTABLE)
            elif controller == "predictor_only":
                if math.isnan(forecast):
                    next_quota, label = vert.threshold(quota, u), COLD
                else:
                    next_quota, label = vert.predicted(forecast, serving), str(Status.STABLE)
            else:
                if status is None or math.isnan(forecast):
                    next_quota, label = vert.threshold(quota, u), COLD
                elif status is Status.STABLE:
                    next_quota, label = vert.predicted(forecast, serving), str(Status.STABLE)
                else:
                    next_quota, label = vert.regulated(quota, u, floor), str(Status.UNSTABLE)
            if floor is not None:
                next_quota = max(next_quota, floor)
        elif action is not Action.HOLD and use_vertical:
            next_quota = cluster.quota_at(t_next, v.bounds)

        rec.append(time=t, load=load, demand=load / per_core_at_target, supply=serving * quota,
                   utilization=u, replicas=serving, quota=quota, response_time=rt, status=label,
                   action=action.value)
        if debug is not None:
            debug(_debug_row(t, vert, label))
        quota = next_quota

    rec.action_log = list(cluster.pending_actions)
    return rec


def stable_onsets(trace: WorkloadTrace, config: SimulationConfig) -> list[int]:
    """Indices where the detector reports Stable right after Unstable."""
    d = config.detector
    det = StatusDetector(d.segment_size, d.lam, d.load_scale).reset()
    out, prev = [], None
    for i, (t, x) in enumerate(zip(trace.timestamps, trace.loads)):
        s = det.observe(float(t), float(x))
        if s is Status.STABLE and prev is Status.UNSTABLE:
            out.append(i)
        prev = s
    return out


def status_forecasts(trace: WorkloadTrace, config: SimulationConfig) -> np.ndarray:
    """Forecast track for the status-aware controllers."""
    extra = stable_onsets(trace, config) if config.refit_on_stable else ()
    return forecast_track(trace.loads, config.predictor, extra)


def _debug_row(t, vert: _Vertical, label: str) -> dict:
    pid = vert.pid
    return {
        "time": t,
        "status": label,
        "gains": {"kp": pid.gains.kp, "ki": pid.gains.ki, "kd": pid.gains.kd},
        "integral": pid.integral,
        "prev_error": pid.prev_error,
        "input_weights": pid.tuner.input_weights.tolist() if pid.tuner is not None else None,
        "hidden_weights": pid.tuner.hidden_weights.tolist() if pid.tuner is not None else None,
    }


def budget_of(record: RunRecord) -> float:
    """Core-seconds supplied over the run."""
    return float(sum(r * q for r, q in zip(record.replicas, record.quota)) * record.interval)


def total_resources(config: SimulationConfig) -> float:
    return config.horizontal.max_replicas * config.vertical.max_quota


def evaluate(record: RunRecord, config: SimulationConfig | None = None, slos=(200.0, 250.0),
             omega: float = 1.0) -> dict:
    """Evaluation report for one run (JSON-ready)."""
    cfg = config or SimulationConfig()
    rt = record.column("response_time")
    load = record.column("load")
    demand = record.column("demand")
    supply = record.column("supply")
    weights = load * record.interval
    R = total_resources(cfg)
    cf = metrics.correlation_factor(demand, supply)
    report = {
        "avg_rt": metrics.weighted_mean(rt, weights),
        "p99_rt": metrics.weighted_percentile(rt, weights, 99.0),
        "max_rt": float(rt.max()),
    }
    for slo in slos:
        key = f"slo_violation_{int(slo) if float(slo).is_integer() else slo}"
        report[key] = metrics.slo_violation_rate(rt, load, slo, record.interval)
    report.update({
        "a_U": metrics.under_provisioning_accuracy(demand, supply, record.interval, R),
        "a_O": metrics.over_provisioning_accuracy(demand, supply, record.interval, R),
        "correlation_factor": metrics.PERFECT if metrics.is_perfect(cf, max(demand.size, supply.size)) else cf,
        "objective": objective_of(record, omega),
        "budget": budget_of(record),
        "mean_utilization": float(record.column("utilization").mean()),
        "mean_replicas": float(record.column("replicas").mean()),
    })
    return report


def objective_of(record: RunRecord, omega: float = 1.0) -> float:
    """Objective on run averages for the single simulated microservice."""
    replicas = record.column("replicas")
    quota = record.column("quota")
    pods = float(replicas.mean())
    # one pod-quota entry per pod-interval, averaged
    mean_quota = float((replicas * quota).sum() / replicas.sum())
    mean_rt = float(record.column("response_time").mean())
    return metrics.objective_score([pods], [mean_quota], [mean_rt], omega)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def config_to_dict(config: SimulationConfig) -> dict:
    d = asdict(config)
    d["profile"] = config.profile.to_dict()
    return d


@dataclass
class EqualizedRun:
    controller: str
    floor: float
    record: RunRecord
    budget: float
    iterations: int


def _bisect_floor(trace, controller, cfg, seed, forecasts, start: EqualizedRun, target, band, max_iter):
    """Bisect the floor towards ``target``; returns (best run, smallest overshooting budget or None)."""
    lo, hi = cfg.vertical.min_quota, cfg.vertical.max_quota
    if start.budget > target:
        return start, start.budget
    best, overshoot = start, None
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        rec = run_experiment(trace, controller, cfg.with_min_quota(mid), seed, forecasts)
        b = budget_of(rec)
        if abs(b - target) < abs(best.budget - target):
            best = EqualizedRun(controller, mid, rec, b, it)
        if abs(b - target) <= band * target:
            break
        if b < target:
            lo = mid
        else:
            hi = mid
            overshoot = b if overshoot is None else min(overshoot, b)
    return best, overshoot


def equalize_budgets(trace: WorkloadTrace, controllers, config: SimulationConfig | None = None,
                     seed: int = 0, tolerance: float = 0.01, max_iter: int = 20,
                     max_rounds: int = 5) -> dict[str, EqualizedRun]:
    """Run every controller with its minimum-quota floor raised until budgets agree.

    The largest natural budget is the first target. Each other controller's
    floor is bisected between its configured value and the maximum quota
    until its budget lands within ``tolerance / 2.01`` of the target, so any
    two runs differ by at most ``tolerance``. Budget is not continuous in the
    floor; when a controller jumps over the target, the target moves up to
    the smallest budget seen above it and the round restarts. Raises
    ``BudgetEqualizationFailed`` if no round converges.
    """
    cfg = config or SimulationConfig()
    forecasts = None  # tracks are cached per controller family
    base = {}
    for c in controllers:
        rec = run_experiment(trace, c, cfg, seed, forecasts)
        base[c] = EqualizedRun(c, cfg.vertical.min_quota, rec, budget_of(rec), 0)
    band = tolerance / 2.01
    target = max(r.budget for r in base.values())
    runs = dict(base)
    for _ in range(max_rounds):
        raised = None
        for c in controllers:
            if abs(runs[c].budget - target) <= band * target:
                continue
            best, overshoot = _bisect_floor(trace, c, cfg, seed, forecasts, base[c], target, band, max_iter)
            runs[c] = best
            if abs(best.budget - target) > band * target:
                if overshoot is None:
                    raise BudgetEqualizationFailed(
                        f"{c}: closest budget {best.budget:.1f} (floor {best.floor:.4f}) vs target "
                        f"{target:.1f} after {max_iter} iterations")
                raised = overshoot
                break
        if raised is None:
            return runs
        target = raised
    detail = ", ".join(f"{c}={r.budget:.1f}" for c, r in runs.items())
    raise BudgetEqualizationFailed(f"budgets did not converge after {max_rounds} rounds: {detail}")
