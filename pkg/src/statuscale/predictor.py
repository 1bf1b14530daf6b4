"""Next-interval load forecasting.

The default regressor is a gradient-boosted ensemble of shallow regression
trees with exact (sorted, histogram-free) split search, fitted on squared
error. Every regressor here follows the scikit-learn estimator protocol, so
any other sklearn-compatible booster can be dropped in instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .detector import CalibrationLabel
from .exceptions import FeatureShapeMismatch, InsufficientData
from .trace import SlidingWindow, WorkloadTrace, window_matrix

MIN_TRAINING_PAIRS = 10


@dataclass(frozen=True)
class PredictorParams:
    window_length: int = 8
    num_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_per_leaf: int = 2
    seed: int = 0
    retrain_every: int = 50


class RegressionTree:
    """Axis-aligned least-squares regression tree stored as flat node arrays."""

    def __init__(self, max_depth: int = 3, min_samples_leaf: int = 2):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.value) - 1

    def _best_split(self, X: np.ndarray, y: np.ndarray):
        n = y.shape[0]
        leaf = self.min_samples_leaf
        if n < 2 * leaf:
            return None
        total = y.sum()
        base = total * total / n
        best_gain, best = 1e-12 * max(1.0, float(y @ y)), None
        for f in range(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs, ys = X[order, f], y[order]
            csum = np.cumsum(ys)[:-1]
            nl = np.arange(1, n, dtype=float)
            gain = csum * csum / nl + (total - csum) ** 2 / (n - nl) - base
            valid = xs[1:] > xs[:-1]
            valid[: leaf - 1] = False
            if leaf > 1:
                valid[n - leaf:] = False
            if not valid.any():
                continue
            gain = np.where(valid, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                lo, hi = xs[i], xs[i + 1]
                thr = lo + (hi - lo) / 2.0
                if not thr < hi:
                    thr = lo
                best_gain, best = gain[i], (f, float(thr))
        return best

    def _grow(self, X, y, depth) -> int:
        node = self._new_node(y.mean())
        if depth >= self.max_depth:
            return node
        split = self._best_split(X, y)
        if split is None:
            return node
        f, thr = split
        mask = X[:, f] <= thr
        self.feature[node] = f
        self.threshold[node] = thr
        left = self._grow(X[mask], y[mask], depth + 1)
        right = self._grow(X[~mask], y[~mask], depth + 1)
        self.left[node], self.right[node] = left, right
        return node

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RegressionTree":
        self.__init__(self.max_depth, self.min_samples_leaf)
        self._grow(np.asarray(X, dtype=float), np.asarray(y, dtype=float), 0)
        self._freeze()
        return self

    def _freeze(self):
        self._f = np.asarray(self.feature, dtype=int)
        self._t = np.asarray(self.threshold, dtype=float)
        self._l = np.asarray(self.left, dtype=int)
        self._r = np.asarray(self.right, dtype=int)
        self._v = np.asarray(self.value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth + 1):
            f = self._f[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= self._t[node]
            node = np.where(internal, np.where(go_left, self._l[node], self._r[node]), node)
        return self._v[node]

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": self.value[node]}
        return {
            "feature": self.feature[node],
            "threshold": self.threshold[node],
            "left": self.to_dict(self.left[node]),
            "right": self.to_dict(self.right[node]),
        }

    @classmethod
    def from_dict(cls, record: dict, max_depth: int, min_samples_leaf: int = 1) -> "RegressionTree":
        tree = cls(max_depth, min_samples_leaf)

        def build(rec):
            if "value" in rec:
                return tree._new_node(rec["value"])
            node = tree._new_node(0.0)
            tree.feature[node] = int(rec["feature"])
            tree.threshold[node] = float(rec["threshold"])
            tree.left[node] = build(rec["left"])
            tree.right[node] = build(rec["right"])
            return node

        build(record)
        tree._freeze()
        return tree

    def split_features(self) -> list[int]:
        return [f for f in self.feature if f >= 0]


class GradientBoostedTrees(RegressorMixin, BaseEstimator):
    """Gradient boosting on squared error with exact-split regression trees.

    prediction = base_prediction + learning_rate * sum(tree outputs), with
    ``base_prediction`` the training-target mean. ``random_state`` is kept
    for interface parity; exact split search involves no randomness.
    """

    def __init__(self, n_estimators: int = 50, max_depth: int = 3, learning_rate: float = 0.1,
                 min_samples_leaf: int = 2, random_state: int = 0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        self.n_features_in_ = X.shape[1]
        self.base_prediction_ = float(y.mean())
        current = np.full(y.shape[0], self.base_prediction_)
        self.trees_: list[RegressionTree] = []
        self.train_mse_ = [float(np.mean((y - current) ** 2))]
        for _ in range(self.n_estimators):
            tree = RegressionTree(self.max_depth, self.min_samples_leaf).fit(X, y - current)
            current = current + self.learning_rate * tree.predict(X)
            self.trees_.append(tree)
            self.train_mse_.append(float(np.mean((y - current) ** 2)))
        return self

    def raw_predict(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise FeatureShapeMismatch(f"model expects {self.n_features_in_} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base_prediction_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        return np.maximum(self.raw_predict(X), 0.0)


class LastValueRegressor(RegressorMixin, BaseEstimator):
    """Naive baseline: the next value equals the newest value in the window."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        _check_width(self, X)
        return np.maximum(X[:, -1], 0.0)


class MeanRegressor(RegressorMixin, BaseEstimator):
    """Naive baseline: the next value equals the window mean."""

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        _check_width(self, X)
        return np.maximum(X.mean(axis=1), 0.0)


def _check_width(model, X):
    if X.shape[1] != model.n_features_in_:
        raise FeatureShapeMismatch(f"model expects {model.n_features_in_} features, got {X.shape[1]}")


def make_regressor(params: PredictorParams) -> GradientBoostedTrees:
    return GradientBoostedTrees(params.num_trees, params.max_depth, params.learning_rate,
                                params.min_samples_per_leaf, params.seed)


def train(history: WorkloadTrace | Sequence[float], window_length: int = 8,
          params: PredictorParams | None = None, regressor=None):
    """Fit a regressor on every ``(window, next)`` pair of ``history``."""
    params = params or PredictorParams(window_length=window_length)
    loads = history.loads if isinstance(history, WorkloadTrace) else np.asarray(history, dtype=float)
    if loads.shape[0] - window_length < MIN_TRAINING_PAIRS:
        raise InsufficientData(f"need at least {MIN_TRAINING_PAIRS} training pairs")
    X, y = window_matrix(loads, window_length)
    model = regressor if regressor is not None else make_regressor(params)
    return model.fit(X, y)


def predict_next(model, window: SlidingWindow | Sequence[float]) -> float:
    values = window.as_array() if isinstance(window, SlidingWindow) else np.asarray(window, dtype=float)
    expected = getattr(model, "n_features_in_", values.shape[0])
    if values.shape[0] != expected:
        raise FeatureShapeMismatch(f"window has {values.shape[0]} values, model expects {expected}")
    value = float(model.predict(values.reshape(1, -1))[0])
    if not math.isfinite(value):
        return 0.0
    return max(value, 0.0)


def underestimation_events(model, trace: WorkloadTrace | Sequence[float], window_length: int,
                           tolerance: float = 0.05) -> list[CalibrationLabel]:
    """One label per forecastable index: underestimated iff forecast < actual * (1 - tolerance)."""
    loads = trace.loads if isinstance(trace, WorkloadTrace) else np.asarray(trace, dtype=float)
    X, y = window_matrix(loads, window_length)
    pred = np.asarray(model.predict(X), dtype=float)
    return labels_from_forecasts(pred, y, tolerance, offset=window_length)


def labels_from_forecasts(forecasts, actuals, tolerance: float = 0.05, offset: int = 0) -> list[CalibrationLabel]:
    forecasts = np.asarray(forecasts, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    out = []
    for i, (f, a) in enumerate(zip(forecasts, actuals)):
        if math.isnan(f):
            continue
        out.append(CalibrationLabel(i + offset, bool(f < a * (1.0 - tolerance))))
    return out


# -- rolling forecasts ------------------------------------------------

_TRACK_CACHE: dict = {}


def forecast_track(loads: Sequence[float], params: PredictorParams | None = None,
                   refit_at: Sequence[int] = ()) -> np.ndarray:
    """Causal one-step forecasts as a controller would see them.

    ``out[i]`` predicts ``loads[i + 1]`` from the window ending at ``i``,
    using a model refitted every ``retrain_every`` intervals on all history
    up to and including ``i``, and additionally at every index in
    ``refit_at``. Entries are NaN until enough pairs exist. Loads are
    exogenous to the controllers, so tracks are cached.
    """
    params = params or PredictorParams()
    loads = np.ascontiguousarray(loads, dtype=float)
    extra = frozenset(int(i) for i in refit_at)
    key = (loads.tobytes(), params, extra)
    hit = _TRACK_CACHE.get(key)
    if hit is not None:
        return hit.copy()
    n, w = loads.shape[0], params.window_length
    out = np.full(n, np.nan)
    model = None
    last_fit = None
    for i in range(n):
        pairs = i + 1 - w
        due = last_fit is None or i - last_fit >= params.retrain_every or i in extra
        if pairs >= MIN_TRAINING_PAIRS and due:
            model = train(loads[: i + 1], w, params)
            last_fit = i
        if model is not None:
            out[i] = predict_next(model, loads[i - w + 1: i + 1])
    if len(_TRACK_CACHE) > 64:
        _TRACK_CACHE.clear()
    _TRACK_CACHE[key] = out
    return out.copy()


# -- persistence -------------------------------------------------------

def model_to_dict(model: GradientBoostedTrees) -> dict:
    check_is_fitted(model, "trees_")
    return {
        "kind": "gradient_boosted_trees",
        "params": model.get_params(),
        "num_features": model.n_features_in_,
        "base_prediction": model.base_prediction_,
        "trees": [t.to_dict() for t in model.trees_],
    }


def model_from_dict(record: dict) -> GradientBoostedTrees:
    if record.get("kind") != "gradient_boosted_trees":
        raise ValueError(f"unsupported model kind {record.get('kind')!r}")
    model = GradientBoostedTrees(**record["params"])
    model.n_features_in_ = int(record["num_features"])
    model.base_prediction_ = float(record["base_prediction"])
    model.trees_ = [RegressionTree.from_dict(t, model.max_depth, model.min_samples_leaf) for t in record["trees"]]
    return model


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads_model(text: str) -> GradientBoostedTrees:
    return model_from_dict(json.loads(text))
