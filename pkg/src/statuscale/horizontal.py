"""Horizontal (replica count) scaling with score windows, cooldown and quota decay."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

log = logging.getLogger(__name__)


class Action(str, enum.Enum):
    HOLD = "Hold"
    SCALE_UP = "ScaleUp"
    SCALE_DOWN = "ScaleDown"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class HorizontalConfig:
    strictness_k: float = 10.0
    target_utilization: float = 0.8
    total_upper: float = 0.5
    single_upper: float = 0.3
    total_lower: float = -0.5
    single_lower: float = -0.3
    window_length: int = 6
    delta: float = 0.10
    cooloff: float = 300.0
    min_replicas: int = 1
    max_replicas: int = 10
    k_decay: float = 1.5
    beta: float = 0.5

    def __post_init__(self):
        if not self.strictness_k > 1:
            raise ValueError("strictness_k must exceed 1")
        if not 0 < self.target_utilization < 1:
            raise ValueError("target_utilization must lie in (0, 1)")
        if not self.total_lower < 0 < self.total_upper:
            raise ValueError("need total_lower < 0 < total_upper")
        if not self.single_lower < 0 < self.single_upper:
            raise ValueError("need single_lower < 0 < single_upper")
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")
        if not 1 <= self.min_replicas <= self.max_replicas:
            raise ValueError("need 1 <= min_replicas <= max_replicas")
        if self.delta <= 0 or self.cooloff < 0:
            raise ValueError("delta must be positive and cooloff non-negative")
        if not self.k_decay > 1 or not 0 < self.beta < 1:
            raise ValueError("need k_decay > 1 and 0 < beta < 1")


def score(c_t: float, config: HorizontalConfig) -> float:
    """Exponential distance of utilization from target, signed like ``c_t - target``."""
    k, tgt = config.strictness_k, config.target_utilization
    if c_t < tgt:
        return 1.0 - k ** (tgt - c_t)
    return k ** (c_t - tgt) - 1.0


class ScoreWindow:
    """Ring of the most recent scores and their sum."""

    def __init__(self, length: int):
        self.scores: deque[float] = deque(maxlen=length)
        self.total = 0.0

    def push(self, s: float) -> float:
        self.scores.append(float(s))
        self.total = math.fsum(self.scores)
        return self.total

    def __len__(self):
        return len(self.scores)


@dataclass
class CooldownClock:
    cooloff: float = 300.0
    last_action_time: float | None = None

    def active(self, now: float) -> bool:
        return self.last_action_time is not None and now - self.last_action_time < self.cooloff

    def arm(self, now: float) -> None:
        self.last_action_time = now


def decide(window: ScoreWindow, latest: float, config: HorizontalConfig, clock: CooldownClock,
           now: float) -> Action:
    """Threshold test on the latest score and the window total.

    ``window`` must already contain ``latest``. The cooldown gate overrides
    either direction.
    """
    total = window.total
    if total > config.total_upper or latest > config.single_upper:
        action = Action.SCALE_UP
    elif total < config.total_lower or latest < config.single_lower:
        action = Action.SCALE_DOWN
    else:
        return Action.HOLD
    if clock.active(now):
        return Action.HOLD
    return action


def replica_delta(current: int, delta_fraction: float) -> int:
    """Replicas to add or remove: ``max(ceil(delta * current), 1)``."""
    if current < 1:
        raise ValueError("current replica count must be >= 1")
    # round first so 0.1 * 30 does not ceil to 4
    return max(math.ceil(round(delta_fraction * current, 9)), 1)


@dataclass(frozen=True)
class DecaySchedule:
    """Per-replica quota trajectory after a horizontal action.

    ``direction=+1`` (after scale-up) decays ``V * k**(beta**t - 1)`` towards
    ``V / k``; ``direction=-1`` (after scale-down) is the mirrored rise
    ``V * k**(1 - beta**t)`` towards ``V * k``.
    """

    initial_quota: float
    k_decay: float = 1.5
    beta: float = 0.5
    direction: int = 1
    start_time: float = 0.0
    period: float = 20.0

    def value(self, t: int) -> float:
        if t < 0:
            raise ValueError("periods must be non-negative")
        expo = self.beta ** t - 1.0
        return self.initial_quota * self.k_decay ** (expo if self.direction > 0 else -expo)

    def periods_at(self, now: float) -> int:
        return max(int(math.floor((now - self.start_time) / self.period + 1e-9)), 0)


def decayed_quota(schedule: DecaySchedule, t: int) -> float:
    return schedule.value(t)


@dataclass(frozen=True)
class ActionLogEntry:
    time: float
    microservice: str
    action: Action
    replicas_before: int
    replicas_after: int
    s_t: float
    s_total: float
    note: str = ""


@dataclass(frozen=True)
class ClusterState:
    replicas: int = 1
    per_replica_quota: float = 1.0
    utilization: float = 0.0
    offered_load: float = 0.0
    response_time: float = 0.0
    clock: CooldownClock = field(default_factory=CooldownClock)
    schedule: DecaySchedule | None = None
    pending_actions: tuple[ActionLogEntry, ...] = ()

    def schedule_active(self, now: float) -> bool:
        return self.schedule is not None and self.clock.active(now)

    def quota_at(self, now: float, bounds: tuple[float, float] | None = None) -> float:
        """Per-replica quota the running schedule prescribes at ``now``."""
        if self.schedule is None:
            return self.per_replica_quota
        q = self.schedule.value(self.schedule.periods_at(now))
        if bounds is not None:
            q = min(max(q, bounds[0]), bounds[1])
        return q


def apply_action(cluster: ClusterState, action: Action, config: HorizontalConfig, now: float,
                 quota_bounds: tuple[float, float] = (0.1, 2.0), period: float = 20.0,
                 s_t: float = 0.0, s_total: float = 0.0, microservice: str = "service") -> ClusterState:
    """Execute a horizontal decision and return the new cluster state.

    Scale-up adds ``replica_delta`` replicas and starts a decaying quota
    schedule; scale-down removes them and starts the mirrored rising one
    (cancelling any schedule in flight). Both arm the cooldown. Actions
    blocked by a replica bound degrade to Hold and are logged.
    """
    if action is Action.HOLD:
        return cluster
    before = cluster.replicas
    step = replica_delta(before, config.delta)
    if action is Action.SCALE_UP:
        after = min(before + step, config.max_replicas)
    else:
        after = max(before - step, config.min_replicas)
    if after == before:
        entry = ActionLogEntry(now, microservice, Action.HOLD, before, before, s_t, s_total,
                               note=f"{action.value} blocked at replica bound")
        log.debug("%s at t=%s blocked at bound %d", action.value, now, before)
        return replace(cluster, pending_actions=cluster.pending_actions + (entry,))
    lo, hi = quota_bounds
    v = min(max(cluster.per_replica_quota, lo), hi)
    schedule = DecaySchedule(v, config.k_decay, config.beta, 1 if action is Action.SCALE_UP else -1,
                             start_time=now, period=period)
    clock = CooldownClock(config.cooloff, now)
    entry = ActionLogEntry(now, microservice, action, before, after, s_t, s_total)
    return replace(cluster, replicas=after, per_replica_quota=v, clock=clock, schedule=schedule,
                   pending_actions=cluster.pending_actions + (entry,))


ACTION_LOG_COLUMNS = ("time", "microservice", "action", "replicas_before", "replicas_after", "S_t", "S_T")


def action_log_csv(entries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ACTION_LOG_COLUMNS)
    for e in entries:
        w.writerow([repr(e.time), e.microservice, e.action.value, e.replicas_before, e.replicas_after,
                    repr(e.s_t), repr(e.s_total)])
    return buf.getvalue()


def read_action_log(text: str) -> list[ActionLogEntry]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(ActionLogEntry(float(row["time"]), row["microservice"], Action(row["action"]),
                                  int(row["replicas_before"]), int(row["replicas_after"]),
                                  float(row["S_t"]), float(row["S_T"])))
    return out
