import numpy as np
import pytest

from statuscale.detector import (
    CalibrationLabel,
    DetectorState,
    LineModel,
    Status,
    StatusDetector,
    build_lines,
    calibrate_lambda,
    calibration_csv,
    classify_segment,
    coefficient_of_variation,
    fit_line,
    line_value,
    precision_recall_f,
    prime,
    read_calibration_csv,
    tally,
)
from statuscale.exceptions import DegenerateAbscissa, DetectorColdStart, ZeroMeanWindow
from statuscale.trace import WorkloadTrace, standard_burst_trace


def seg(t0, values):
    return [(float(t0 + i), float(v)) for i, v in enumerate(values)]


@pytest.mark.parametrize("pts,k,b", [
    ([(0, 1), (1, 3), (2, 5)], 2.0, 1.0),
    ([(0, 4), (1, 4), (2, 4)], 0.0, 4.0),
    ([(0, 0), (1, 1), (2, 0)], 0.0, 1.0 / 3.0),
])
def test_fit_line_examples(pts, k, b):
    got = fit_line(pts)
    A = np.array([[1.0, t] for t, _ in pts])
    oracle = np.linalg.solve(A.T @ A, A.T @ np.array([y for _, y in pts], dtype=float))
    assert got == pytest.approx((k, b), abs=1e-12)
    assert got == pytest.approx((oracle[1], oracle[0]), abs=1e-12)


def test_fit_line_degenerate():
    with pytest.raises(DegenerateAbscissa):
        fit_line([(1, 2), (1, 5)])
    with pytest.raises(DegenerateAbscissa):
        fit_line([(1, 2)])


def test_coefficient_of_variation():
    assert coefficient_of_variation([5, 5, 5]) == 0.0
    # population std of [1, 3] is 1
    assert coefficient_of_variation([1, 3]) == pytest.approx(0.5)
    with pytest.raises(ZeroMeanWindow):
        coefficient_of_variation([-1, 1])


def test_line_values():
    assert line_value(LineModel(2, 1, 30, 0.0), 3) == 7
    assert LineModel(0, 10, 30, 0.1).value(123.0) == pytest.approx(13)
    assert LineModel(0, 10, 30, 0.1, sign=-1).value(5.0) == pytest.approx(7)


def test_band_width_is_two_lambda_cv():
    rng = np.random.default_rng(0)
    t = np.arange(10.0)
    y = 50 + rng.normal(0, 3, 10)
    res, sup = build_lines(t, y, 17.0)
    for x in (0.0, 4.5, 30.0):
        assert res.value(x) - sup.value(x) == pytest.approx(2 * 17.0 * res.c_v)
    assert res.value(3.0) >= sup.value(3.0)


def test_flat_window_stays_stable():
    state = prime(DetectorState(), seg(0, [100] * 5))
    status, state = classify_segment(state, seg(5, [100] * 5))
    assert status is Status.STABLE
    assert len(state.window_t) == 10


def test_gross_spike_resets_window():
    window = [98, 102, 100, 98, 102]  # c_v = 0.0179
    state = prime(DetectorState(lam=30.0), seg(0, window))
    assert state.resistance.c_v == pytest.approx(0.0179, abs=1e-3)
    status, state = classify_segment(state, seg(5, [100, 100, 100 * 11, 100, 100]))
    assert status is Status.UNSTABLE
    assert len(state.window_t) == 5


def test_scripted_six_segments():
    segments = [[5.0, 5.05, 4.95, 5.0, 5.0], [5.0, 5.0, 5.05, 4.95, 5.0], [5.0, 5.0, 5.0, 5.05, 5.0],
                [5.0, 8.0, 11.0, 13.0, 15.0], [15.0, 15.1, 14.9, 15.0, 15.05], [15.0, 14.95, 15.05, 15.0, 15.0]]
    state = prime(DetectorState(lam=30.0), seg(0, segments[0]))
    statuses = []
    for i, values in enumerate(segments[1:], start=1):
        status, state = classify_segment(state, seg(5 * i, values))
        statuses.append(status)
        if i == 4:
            # lines restart from the segment after the breach
            assert state.window_t == [float(t) for t in range(20, 25)]
    S, U = Status.STABLE, Status.UNSTABLE
    assert statuses == [S, S, U, U, S]


def test_breach_holds_exactly_two_segments():
    rng = np.random.default_rng(4)
    loads = list(100 + rng.normal(0, 1, 40))
    loads[22] = 400
    statuses = StatusDetector(lam=30.0, load_scale=20.0).fit_predict(np.array(loads))
    unstable = [i // 5 for i, s in enumerate(statuses) if s is Status.UNSTABLE]
    assert sorted(set(unstable)) == [4, 5]


def test_cold_start():
    with pytest.raises(DetectorColdStart):
        classify_segment(DetectorState(), seg(0, [1] * 5))
    det = StatusDetector().reset()
    assert [det.observe(i, 100) for i in range(5)] == [None] * 5
    assert det.observe(5, 100) is Status.STABLE


def test_zero_mean_window_is_unstable():
    state = prime(DetectorState(), seg(0, [0] * 5))
    status, _ = classify_segment(state, seg(5, [0] * 5))
    assert status is Status.UNSTABLE


def test_streaming_matches_batch_segment_labels():
    tr = standard_burst_trace(seed=7)
    pts = np.column_stack([tr.timestamps, tr.loads])
    batch = StatusDetector(lam=20.0, load_scale=20.0).fit_predict(pts)
    det = StatusDetector(lam=20.0, load_scale=20.0).reset()
    stream = [det.observe(t, x) for t, x in pts]
    # a segment is Unstable in batch iff some sample of it was flagged while streaming
    for start in range(5, len(pts) - len(pts) % 5, 5):
        flagged = any(s is Status.UNSTABLE for s in stream[start:start + 5])
        assert flagged == (batch[start] is Status.UNSTABLE)


def test_precision_recall_f():
    assert precision_recall_f(0, 0, 0) == (0.0, 0.0, 0.0)
    assert precision_recall_f(1, 1, 1)[2] == pytest.approx(0.5)
    p, r, f = precision_recall_f(9, 6, 1)
    assert (p, r) == pytest.approx((0.6, 0.9))
    assert f == pytest.approx(2 * 0.54 / 1.5)


def test_tally_counts():
    S, U = Status.STABLE, Status.UNSTABLE
    statuses = [None, U, U, S, S]
    labels = [CalibrationLabel(i, u) for i, u in enumerate([True, True, False, True, False])]
    assert tally(statuses, labels) == (1, 1, 1, 1)


def test_calibrate_degenerate_labels():
    tr = WorkloadTrace.from_loads([100.0] * 40)
    labels = [CalibrationLabel(i, False) for i in range(40)]
    best, res = calibrate_lambda(tr, labels, [10, 30, 50])
    assert best == 10
    assert all(v == (0.0, 0.0, 0.0) for v in res.values())


def test_calibrate_singleton_and_csv():
    tr = standard_burst_trace(seed=42)
    rng = np.random.default_rng(1)
    labels = [CalibrationLabel(i, bool(rng.random() < 0.2)) for i in range(len(tr))]
    best, res = calibrate_lambda(tr, labels, [30], load_scale=20.0)
    assert best == 30
    best, res = calibrate_lambda(tr, labels, [10, 30, 50], load_scale=20.0)
    back, flagged = read_calibration_csv(calibration_csv(res, best))
    assert flagged == best and set(back) == {10.0, 30.0, 50.0}
    for p, r, f in back.values():
        assert f == pytest.approx(2 * p * r / (p + r) if p + r else 0.0)
    with pytest.raises(ValueError):
        calibrate_lambda(tr, labels, [])
    with pytest.raises(ValueError):
        calibrate_lambda(tr, labels, [70])
