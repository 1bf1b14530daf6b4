"""Vertical (per-replica CPU quota) controllers.

Three policies share this module:

* ``threshold_scale``: step the quota up or down when utilization leaves a
  band around the target (used while there is too little history);
* ``quota_from_prediction``: size the quota so a forecast load lands on the
  target utilization;
* ``APidController``: PID regulation of utilization whose gains are emitted
  every interval by a small backpropagation network (4 inputs, 5 tanh hidden
  units, 3 sigmoid outputs).

Error convention: ``e = measured - target``, so running hot yields a
positive output and more CPU. The PID output is a relative quota change:
the new quota is ``quota * (1 + output)``.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import MeasurementInvalid, ProfileSaturated, TunerDiverged
from .profile import ServiceProfile

GAIN_MAX = (2.0, 0.5, 0.5)


@dataclass(frozen=True)
class PidGains:
    kp: float = 1.0
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp, self.ki, self.kd])


def _sigmoid(z):
    # split form avoids overflow for large |z|
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class BpNetwork:
    input_weights: np.ndarray
    hidden_weights: np.ndarray
    learning_rate: float = 0.05
    gain_max: tuple[float, float, float] = GAIN_MAX
    diverged: bool = False

    def __post_init__(self):
        self.input_weights = np.asarray(self.input_weights, dtype=float)
        self.hidden_weights = np.asarray(self.hidden_weights, dtype=float)
        if self.input_weights.shape != (4, 5) or self.hidden_weights.shape != (5, 3):
            raise ValueError("expected 4x5 input weights and 5x3 hidden weights")

    @classmethod
    def initialize(cls, seed: int = 0, learning_rate: float = 0.05, scale: float = 0.5,
                   gain_max=GAIN_MAX) -> "BpNetwork":
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-scale, scale, (4, 5)), rng.uniform(-scale, scale, (5, 3)),
                   learning_rate, tuple(gain_max))

    def forward(self, inputs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(gains, hidden, output)`` for inputs ``(target, actual, error, bias)``."""
        x = np.asarray(inputs, dtype=float)
        hidden = np.tanh(x @ self.input_weights)
        out = _sigmoid(hidden @ self.hidden_weights)
        return out * np.asarray(self.gain_max), hidden, out

    def output_gradient(self, inputs, terms) -> tuple[np.ndarray, np.ndarray]:
        """d(controller output)/d(weights), where output = gains . terms."""
        x = np.asarray(inputs, dtype=float)
        terms = np.asarray(terms, dtype=float)
        _, hidden, out = self.forward(x)
        delta_out = terms * np.asarray(self.gain_max) * out * (1.0 - out)
        d_hidden_w = np.outer(hidden, delta_out)
        delta_hidden = (self.hidden_weights @ delta_out) * (1.0 - hidden ** 2)
        d_input_w = np.outer(x, delta_hidden)
        return d_input_w, d_hidden_w

    def loss_gradient(self, inputs, terms, error_next: float, sensitivity: float):
        """Gradient of ``error_next ** 2`` with ``error_next = e - sensitivity * output``."""
        d_in, d_hid = self.output_gradient(inputs, terms)
        coef = -2.0 * error_next * sensitivity
        return coef * d_in, coef * d_hid


def bp_forward(net: BpNetwork, inputs) -> PidGains:
    gains, _, _ = net.forward(inputs)
    return PidGains(*(float(g) for g in gains))


def bp_update(net: BpNetwork, inputs, terms, error_next: float, sensitivity: float) -> BpNetwork:
    """One gradient-descent step on the squared tracking error; returns a new network.

    ``terms`` are the ``(e, integral, derivative)`` values the gains multiplied
    on the forward pass; ``sensitivity`` estimates how strongly a unit of
    controller output lowers the error (``error_next ~ e - sensitivity * output``).
    A non-finite gradient leaves the weights untouched and sets ``diverged``.
    """
    g_in, g_hid = net.loss_gradient(inputs, terms, error_next, sensitivity)
    new = copy.deepcopy(net)
    if not (np.all(np.isfinite(g_in)) and np.all(np.isfinite(g_hid))):
        new.diverged = True
        warnings.warn(TunerDiverged("non-finite tuner gradient; update skipped"))
        return new
    new.input_weights = net.input_weights - net.learning_rate * g_in
    new.hidden_weights = net.hidden_weights - net.learning_rate * g_hid
    return new


@dataclass
class APidController:
    """PID on utilization with optional self-tuned gains.

    With ``tuner=None`` the fixed ``gains`` are used. Otherwise each
    ``regulate`` call first trains the tuner on the error observed since the
    previous call, then takes fresh gains from it.
    """

    target_utilization: float = 0.8
    output_bounds: tuple[float, float] = (0.1, 2.0)
    gains: PidGains = field(default_factory=PidGains)
    tuner: BpNetwork | None = None
    integral: float = 0.0
    prev_error: float = 0.0
    integral_limit: float = 5.0
    _pending: tuple | None = field(default=None, repr=False)

    def pid_step(self, target: float, measured: float, dt: float = 1.0) -> float:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if not (math.isfinite(measured) and math.isfinite(target)):
            raise MeasurementInvalid(f"non-finite measurement {measured!r}")
        e = measured - target
        self.integral = float(np.clip(self.integral + e * dt, -self.integral_limit, self.integral_limit))
        derivative = (e - self.prev_error) / dt
        g = self.gains
        out = g.kp * e + g.ki * self.integral + g.kd * derivative
        self._terms = (e, self.integral, derivative)
        self.prev_error = e
        return out

    def regulate(self, quota: float, measured: float, dt: float = 1.0, floor: float | None = None) -> float:
        """Next quota given the current one and the measured utilization.

        ``floor`` raises the lower output bound for this step (for example a
        quota another policy is holding up); integration stops against it
        like against any other bound.
        """
        if not math.isfinite(measured):
            raise MeasurementInvalid(f"non-finite measurement {measured!r}")
        target = self.target_utilization
        e = measured - target
        if self.tuner is not None:
            if self._pending is not None:
                inputs, terms, sens = self._pending
                self.tuner = bp_update(self.tuner, inputs, terms, e, sens)
            inputs = (target, measured, e, 1.0)
            self.gains = bp_forward(self.tuner, inputs)
        saved_integral = self.integral
        out = self.pid_step(target, measured, dt)
        lo, hi = self.output_bounds
        if floor is not None:
            lo = min(max(lo, floor), hi)
        raw = quota * (1.0 + out)
        new_quota = min(max(raw, lo), hi)
        # conditional integration: do not wind up against a saturated output
        if (raw > hi and e > 0) or (raw < lo and e < 0):
            self.integral = saved_integral
            self._terms = (self._terms[0], self.integral, self._terms[2])
        if self.tuner is not None:
            self._pending = ((target, measured, e, 1.0), self._terms, max(measured, 1e-3))
        return new_quota

    def reset(self):
        self.integral = 0.0
        self.prev_error = 0.0
        self._pending = None


def threshold_scale(current_quota: float, measured_utilization: float, target: float,
                    step: float | None = None, band: float = 0.05,
                    bounds: tuple[float, float] = (0.1, 2.0)) -> float:
    """Step the quota when utilization leaves ``target +/- band``.

    The default step is 10% of the current quota with a 0.1-core floor.
    """
    if step is None:
        step = max(0.1 * current_quota, 0.1)
    if step <= 0:
        raise ValueError("step must be positive")
    quota = current_quota
    if measured_utilization > target + band:
        quota = current_quota + step
    elif measured_utilization < target - band:
        quota = current_quota - step
    lo, hi = bounds
    return min(max(quota, lo), hi)


def required_quota(predicted_load: float, profile: ServiceProfile, target: float, replicas: int) -> float:
    """Unclamped per-replica quota that puts ``predicted_load`` at ``target``."""
    if predicted_load < 0:
        raise ValueError("predicted load must be non-negative")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    return profile.demand_cores(predicted_load / replicas, target)


def quota_from_prediction(predicted_load: float, profile: ServiceProfile, target: float, replicas: int,
                          bounds: tuple[float, float] = (0.1, 2.0)) -> float:
    lo, hi = bounds
    try:
        quota = required_quota(predicted_load, profile, target, replicas)
    except ProfileSaturated:
        return hi
    return min(max(quota, lo), hi)
