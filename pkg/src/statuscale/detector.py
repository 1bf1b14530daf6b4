"""Load-status detection with piecewise-linear resistance and support lines.

A window of recent samples is fitted with a least-squares line. The
resistance line sits ``lam * c_v`` above it and the support line the same
distance below, where ``c_v`` is the window's coefficient of variation. Each
new segment is checked against the lines extended forward in time:

* no point outside the band: the segment is Stable, it is merged into the
  window and both lines are refitted;
* any point strictly above resistance or strictly below support: the segment
  and the one after it are Unstable, and the lines are regenerated from that
  following segment.
"""

from __future__ import annotations

import copy
import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DegenerateAbscissa, DetectorColdStart, ZeroMeanWindow


class Status(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"

    def __str__(self):
        return self.value


RESISTANCE = 1
SUPPORT = -1


def fit_line(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope and intercept of ``load = k * t + b``.

    Solves the two normal equations (zero partial derivatives of the squared
    error with respect to ``b`` and ``k``) in centred form.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise DegenerateAbscissa("need at least two points")
    t, y = pts[:, 0], pts[:, 1]
    t_mean = t.mean()
    dt = t - t_mean
    sxx = float(dt @ dt)
    if sxx == 0.0:
        raise DegenerateAbscissa("all abscissae are equal")
    y_mean = y.mean()
    k = float(dt @ (y - y_mean)) / sxx
    b = float(y_mean - k * t_mean)
    return k, b


def coefficient_of_variation(values: Iterable[float]) -> float:
    """Population standard deviation over mean."""
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size == 0:
        raise ValueError("empty window")
    mean = float(v.mean())
    if mean == 0.0:
        raise ZeroMeanWindow("window mean is zero")
    return float(v.std()) / mean


@dataclass(frozen=True)
class LineModel:
    k: float
    b: float
    lam: float = 30.0
    c_v: float = 0.0
    sign: int = RESISTANCE

    def value(self, t):
        return self.k * t + self.b + self.sign * self.lam * self.c_v


def line_value(line: LineModel, t):
    return line.value(t)


def build_lines(times: Sequence[float], loads: Sequence[float], lam: float) -> tuple[LineModel, LineModel]:
    """Resistance and support lines for one window.

    Raises ZeroMeanWindow or DegenerateAbscissa when the window cannot
    support a fit; callers treat that as Unstable.
    """
    k, b = fit_line(list(zip(times, loads)))
    cv = coefficient_of_variation(np.asarray(loads, dtype=float))
    return LineModel(k, b, lam, cv, RESISTANCE), LineModel(k, b, lam, cv, SUPPORT)


@dataclass
class DetectorState:
    segment_size: int = 5
    lam: float = 30.0
    window_t: list = field(default_factory=list)
    window_load: list = field(default_factory=list)
    resistance: LineModel | None = None
    support: LineModel | None = None
    status: Status | None = None
    segments_processed: int = 0
    # segments still to be reported Unstable after a breach
    hold: int = 0
    # window could not be fitted (zero mean, single point): next segment is Unstable
    degenerate: bool = False

    @property
    def initialized(self) -> bool:
        return self.resistance is not None or self.degenerate


def _regenerate(state: DetectorState, times, loads) -> None:
    state.window_t = list(times)
    state.window_load = list(loads)
    try:
        state.resistance, state.support = build_lines(state.window_t, state.window_load, state.lam)
        state.degenerate = False
    except (ZeroMeanWindow, DegenerateAbscissa):
        state.resistance = state.support = None
        state.degenerate = True


def prime(state: DetectorState, segment: Sequence[tuple[float, float]]) -> DetectorState:
    """Generate the first pair of lines from an initial segment."""
    state = copy.deepcopy(state)
    t, y = zip(*segment)
    _regenerate(state, t, y)
    return state


def breaches(state: DetectorState, segment: Sequence[tuple[float, float]]) -> bool:
    if state.degenerate:
        return True
    if state.resistance is None:
        raise DetectorColdStart("lines not initialised")
    for t, y in segment:
        if y > state.resistance.value(t) or y < state.support.value(t):
            return True
    return False


def classify_segment(state: DetectorState, segment: Sequence[tuple[float, float]]) -> tuple[Status, DetectorState]:
    """Classify one segment and return the updated state (input is not mutated)."""
    if len(segment) != state.segment_size:
        raise ValueError(f"segment must have {state.segment_size} points, got {len(segment)}")
    if not state.initialized:
        raise DetectorColdStart("lines not initialised")
    new = copy.deepcopy(state)
    t, y = zip(*segment)
    if new.hold > 0:
        # the segment following a breach: still Unstable, lines restart from it
        new.hold -= 1
        status = Status.UNSTABLE
        _regenerate(new, t, y)
    elif breaches(new, segment):
        status = Status.UNSTABLE
        new.hold = 1
        _regenerate(new, t, y)
    else:
        status = Status.STABLE
        _regenerate(new, new.window_t + list(t), new.window_load + list(y))
    new.status = status
    new.segments_processed += 1
    return status, new


class StatusDetector(BaseEstimator):
    """Streaming Stable/Unstable classifier over a load series.

    ``load_scale`` divides incoming loads before fitting. The band margin
    ``lam * c_v`` is expressed in those scaled units, so the scale sets how
    wide the band is relative to the noise of the series.

    Use ``observe`` for causal, point-by-point status (what a controller
    sees mid-segment) and ``fit``/``fit_predict`` for per-sample segment
    labels over a whole series.
    """

    def __init__(self, segment_size: int = 5, lam: float = 30.0, load_scale: float = 1.0):
        self.segment_size = segment_size
        self.lam = lam
        self.load_scale = load_scale

    # -- streaming -----------------------------------------------------
    def reset(self):
        if self.segment_size < 1:
            raise ValueError("segment_size must be >= 1")
        if self.load_scale <= 0:
            raise ValueError("load_scale must be positive")
        self.state_ = DetectorState(segment_size=self.segment_size, lam=self.lam)
        self._pending: list[tuple[float, float]] = []
        self._pending_breach = False
        return self

    def observe(self, t: float, load: float) -> Status | None:
        """Feed one sample; returns its causal status, or None before lines exist."""
        if not hasattr(self, "state_"):
            self.reset()
        st = self.state_
        point = (float(t), float(load) / self.load_scale)
        self._pending.append(point)
        if not st.initialized:
            if len(self._pending) == self.segment_size:
                self.state_ = prime(st, self._pending)
                self._pending = []
            return None
        if st.hold > 0:
            current = Status.UNSTABLE
        else:
            if not self._pending_breach and breaches(st, [point]):
                self._pending_breach = True
            current = Status.UNSTABLE if self._pending_breach else Status.STABLE
        if len(self._pending) == self.segment_size:
            _, self.state_ = classify_segment(st, self._pending)
            self._pending = []
            self._pending_breach = False
        return current

    # -- batch ---------------------------------------------------------
    def fit(self, X, y=None):
        """Classify a whole series segment by segment.

        ``X`` is a 1-D load array (unit time steps) or an ``(n, 2)`` array of
        ``(t, load)``. Sets ``statuses_``: one entry per sample, None for the
        priming segment and for a trailing incomplete segment.
        """
        pts = _as_points(X)
        self.reset()
        n = len(pts)
        seg = self.segment_size
        statuses: list[Status | None] = [None] * n
        if n >= seg:
            self.state_ = prime(self.state_, [(t, v / self.load_scale) for t, v in pts[:seg]])
        start = seg
        while start + seg <= n:
            segment = [(t, v / self.load_scale) for t, v in pts[start:start + seg]]
            status, self.state_ = classify_segment(self.state_, segment)
            statuses[start:start + seg] = [status] * seg
            start += seg
        self.statuses_ = statuses
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).statuses_


def _as_points(X) -> list[tuple[float, float]]:
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        return [(float(i), float(v)) for i, v in enumerate(arr)]
    if arr.ndim == 2 and arr.shape[1] == 2:
        return [(float(t), float(v)) for t, v in arr]
    raise ValueError("expected a 1-D load series or an (n, 2) array of (t, load)")


# -- lambda calibration ------------------------------------------------

@dataclass(frozen=True)
class CalibrationLabel:
    time_index: int
    underestimated: bool


def precision_recall_f(a: int, b: int, c: int) -> tuple[float, float, float]:
    """P = A/(A+B), R = A/(A+C), F = harmonic mean; undefined ratios are 0."""
    p = a / (a + b) if a + b else 0.0
    r = a / (a + c) if a + c else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def tally(statuses: Sequence[Status | None], labels: Iterable[CalibrationLabel]) -> tuple[int, int, int, int]:
    """Confusion counts ``(A, B, C, D)`` over samples that carry both a status and a label.

    A: underestimated & Unstable, B: normal & Unstable,
    C: underestimated & Stable,   D: normal & Stable.
    """
    a = b = c = d = 0
    for lab in labels:
        if not 0 <= lab.time_index < len(statuses):
            continue
        st = statuses[lab.time_index]
        if st is None:
            continue
        unstable = st is Status.UNSTABLE
        if lab.underestimated:
            if unstable:
                a += 1
            else:
                c += 1
        elif unstable:
            b += 1
        else:
            d += 1
    return a, b, c, d


def calibrate_lambda(trace, labels: Sequence[CalibrationLabel], lambda_grid: Sequence[float],
                     segment_size: int = 5, load_scale: float = 1.0):
    """Sweep ``lam`` and pick the F-maximizing value (ties go to the smaller one).

    Returns ``(best_lambda, {lam: (precision, recall, f_measure)})``.
    """
    grid = sorted(float(v) for v in lambda_grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(not 0 < v <= 60 for v in grid):
        raise ValueError("lambda values must lie in (0, 60]")
    pts = np.column_stack([trace.timestamps, trace.loads])
    labels = list(labels)
    results: dict[float, tuple[float, float, float]] = {}
    for lam in grid:
        statuses = StatusDetector(segment_size, lam, load_scale).fit_predict(pts)
        a, b, c, _ = tally(statuses, labels)
        results[lam] = precision_recall_f(a, b, c)
    best = grid[0]
    for lam in grid:
        if results[lam][2] > results[best][2]:
            best = lam
    return best, results


def calibration_csv(results: dict, best: float | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["lambda", "precision", "recall", "f_measure"]
    if best is not None:
        header.append("best")
    w.writerow(header)
    for lam in sorted(results):
        p, r, f = results[lam]
        row = [repr(lam), repr(p), repr(r), repr(f)]
        if best is not None:
            row.append(int(lam == best))
        w.writerow(row)
    return buf.getvalue()


def read_calibration_csv(text: str) -> tuple[dict, float | None]:
    rows = list(csv.DictReader(io.StringIO(text)))
    results, best = {}, None
    for row in rows:
        lam = float(row["lambda"])
        results[lam] = (float(row["precision"]), float(row["recall"]), float(row["f_measure"]))
        if row.get("best") == "1":
            best = lam
    return results, best
