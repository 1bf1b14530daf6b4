"""Load-to-CPU profiling curve and the latency model of a single replica."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ProfileSaturated

U_CAP = 0.99


@dataclass(frozen=True)
class ServiceProfile:
    """Piecewise-linear map from per-core QPS to CPU utilization.

    Beyond the last breakpoint the final segment is extended linearly and
    the result clamped at 1, so overload shows up as saturated utilization.
    """

    curve: tuple[tuple[float, float], ...] = ((0.0, 0.0), (100.0, 0.8))
    base_service_time: float = 30.0
    max_response: float = 500.0

    def __post_init__(self):
        curve = tuple((float(q), float(u)) for q, u in self.curve)
        object.__setattr__(self, "curve", curve)
        if len(curve) < 2:
            raise ValueError("profile curve needs at least two breakpoints")
        if curve[0][0] != 0.0:
            raise ValueError("profile curve must start at 0 QPS")
        qs = [q for q, _ in curve]
        us = [u for _, u in curve]
        if any(b <= a for a, b in zip(qs, qs[1:])) or any(b <= a for a, b in zip(us, us[1:])):
            raise ValueError("breakpoints must be strictly increasing in both coordinates")
        if us[-1] > 1.0 or us[0] < 0.0:
            raise ValueError("utilization breakpoints must lie in [0, 1]")
        if self.base_service_time <= 0 or self.max_response < self.base_service_time:
            raise ValueError("need 0 < base_service_time <= max_response")

    @property
    def _q(self):
        return np.array([q for q, _ in self.curve])

    @property
    def _u(self):
        return np.array([u for _, u in self.curve])

    def utilization(self, qps_per_core):
        x = np.asarray(qps_per_core, dtype=float)
        q, u = self._q, self._u
        inside = np.interp(x, q, u)
        slope = (u[-1] - u[-2]) / (q[-1] - q[-2])
        out = np.where(x > q[-1], u[-1] + slope * (x - q[-1]), inside)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def qps_per_core_at(self, utilization: float) -> float:
        """Inverse of ``utilization`` on the (extended) curve."""
        q, u = self._q, self._u
        if not 0.0 < utilization <= 1.0:
            raise ProfileSaturated(f"utilization {utilization} not reachable on the profile")
        if utilization <= u[-1]:
            return float(np.interp(utilization, u, q))
        slope = (u[-1] - u[-2]) / (q[-1] - q[-2])
        return float(q[-1] + (utilization - u[-1]) / slope)

    def demand_cores(self, qps: float, target: float) -> float:
        """Cores needed to serve ``qps`` at ``target`` utilization."""
        return float(qps) / self.qps_per_core_at(target)

    def to_dict(self) -> dict:
        return {"curve": [list(p) for p in self.curve], "base_service_time": self.base_service_time,
                "max_response": self.max_response}


def utilization_from_load(profile: ServiceProfile, per_replica_qps: float, per_replica_quota: float) -> float:
    if per_replica_qps < 0 or per_replica_quota < 0:
        raise ValueError("inputs must be non-negative")
    if per_replica_qps == 0:
        return 0.0
    if per_replica_quota == 0:
        return 1.0
    return profile.utilization(per_replica_qps / per_replica_quota)


def response_time(utilization: float, profile: ServiceProfile) -> float:
    """Single-server queueing blow-up ``base / (1 - u)``, capped at ``max_response``."""
    u = min(max(float(utilization), 0.0), U_CAP)
    return min(profile.base_service_time / (1.0 - u), profile.max_response)
