"""Evaluation metrics for elastic scaling runs.

All functions are pure and operate on plain sequences; ``evaluate`` in
``statuscale.simulator`` assembles them into a report for one run.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import ConstantSeries, ConstraintViolated, SeriesLengthMismatch

CF_EPSILON = 1e-9
PERFECT = "perfect"


def slo_violation_rate(response_times: Sequence[float], loads: Sequence[float], slo: float,
                       dt: float = 1.0) -> float:
    """Request-weighted fraction of intervals whose response time exceeds ``slo``."""
    rt = np.asarray(response_times, dtype=float)
    w = np.asarray(loads, dtype=float) * dt
    if rt.shape != w.shape:
        raise SeriesLengthMismatch("response times and loads differ in length")
    if rt.size == 0:
        raise ValueError("empty record")
    if slo <= 0:
        raise ValueError("slo must be positive")
    total = w.sum()
    if total == 0:
        return 0.0
    return float(w[rt > slo].sum() / total)


def weighted_mean(values, weights) -> float:
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.sum() == 0:
        return float(v.mean())
    return float((v * w).sum() / w.sum())


def weighted_percentile(values, weights, q: float) -> float:
    """Inverted-CDF percentile where each value counts ``weight`` times."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.sum() == 0:
        w = np.ones_like(v)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cdf = np.cumsum(w) / w.sum()
    idx = int(np.searchsorted(cdf, q / 100.0 - 1e-12, side="left"))
    return float(v[min(idx, v.size - 1)])


def _gap_pair(demand, supply):
    d = np.asarray(demand, dtype=float)
    s = np.asarray(supply, dtype=float)
    if d.shape != s.shape:
        raise SeriesLengthMismatch(f"demand has {d.size} samples, supply has {s.size}")
    if d.size == 0:
        raise ValueError("empty series")
    return d, s


def under_provisioning_accuracy(demand, supply, dt: float, total_resources: float) -> float:
    """Unmet demand summed over time, per interval and per unit of total resources."""
    d, s = _gap_pair(demand, supply)
    if total_resources <= 0:
        raise ValueError("total_resources must be positive")
    return float(np.maximum(d - s, 0.0).sum() * dt / (d.size * total_resources))


def over_provisioning_accuracy(demand, supply, dt: float, total_resources: float) -> float:
    """Idle supply summed over time, per interval and per unit of total resources."""
    d, s = _gap_pair(demand, supply)
    if total_resources <= 0:
        raise ValueError("total_resources must be positive")
    return float(np.maximum(s - d, 0.0).sum() * dt / (d.size * total_resources))


def normalize_to(x, reference) -> np.ndarray:
    """Shift and scale ``x`` to the reference's mean and (population) std."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(reference, dtype=float)
    sx = x.std()
    if sx == 0:
        raise ConstantSeries("cannot rescale a constant series")
    return (x - x.mean()) * (y.std() / sx) + y.mean()


def dtw_distance(x, y) -> float:
    """Unconstrained DTW with absolute-difference cost.

    Fills the ``(m+1) x (n+1)`` accumulated-cost table one anti-diagonal at
    a time; every cell on diagonal ``i + j = s`` depends only on diagonals
    ``s - 1`` and ``s - 2``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = x.size, y.size
    if m == 0 or n == 0:
        raise ValueError("sequences must be non-empty")
    D = np.full((m + 1, n + 1), np.inf)
    D[0, 0] = 0.0
    for s in range(2, m + n + 1):
        i = np.arange(max(1, s - n), min(m, s - 1) + 1)
        j = s - i
        cost = np.abs(x[i - 1] - y[j - 1])
        best = np.minimum(np.minimum(D[i - 1, j], D[i, j - 1]), D[i - 1, j - 1])
        D[i, j] = cost + best
    return float(D[m, n])


def correlation_factor(demand, supply, eps: float = CF_EPSILON) -> float:
    """``max(m, n) / DTW(demand, supply normalized onto demand)``.

    A constant supply series is only mean-shifted. The distance is floored
    at ``eps``; ``max(m, n) / eps`` therefore means the curves coincide.
    """
    d = np.asarray(demand, dtype=float)
    s = np.asarray(supply, dtype=float)
    if d.size == 0 or s.size == 0:
        raise ValueError("series must be non-empty")
    try:
        s_norm = normalize_to(s, d)
    except ConstantSeries:
        s_norm = s - s.mean() + d.mean()
    dist = dtw_distance(d, s_norm)
    return max(d.size, s.size) / max(dist, eps)


def is_perfect(cf: float, length: int, eps: float = CF_EPSILON) -> bool:
    return cf >= length / eps * (1 - 1e-12)


def objective_score(pods_per_service: Sequence[float], pod_quotas: Sequence[float],
                    response_times: Sequence[float], omega: float = 1.0) -> float:
    """Resource-times-replicas term plus ``omega``-weighted mean response time.

    ``pods_per_service[m]`` and ``response_times[m]`` are per microservice;
    ``pod_quotas`` holds one quota per pod.
    """
    pods = np.asarray(pods_per_service, dtype=float)
    quotas = np.asarray(pod_quotas, dtype=float)
    rt = np.asarray(response_times, dtype=float)
    n_services, n_pods = pods.size, quotas.size
    if n_services < 1 or rt.size != n_services:
        raise ConstraintViolated("need one pod count and one response time per microservice")
    if np.any(pods < 1) or np.any(quotas < 0) or np.any(rt < 0):
        raise ConstraintViolated("pod counts must be >= 1, quotas and response times >= 0")
    if n_pods < n_services:
        raise ConstraintViolated("need at least one pod quota per microservice")
    return float(pods.mean() * quotas.mean() + omega * rt.mean())


def mean_ci(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float, float]:
    """Sample mean with a two-sided Student-t interval."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if v.size < 2:
        return mean, mean, mean
    sem = float(v.std(ddof=1)) / math.sqrt(v.size)
    half = float(stats.t.ppf(0.5 + confidence / 2.0, v.size - 1)) * sem
    return mean, mean - half, mean + half
