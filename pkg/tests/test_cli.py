import csv
import io
import json

import pytest

from oracles import t_interval
from statuscale.cli import main
from statuscale.config import parse_config
from statuscale.detector import read_calibration_csv
from statuscale.exceptions import ConfigError
from statuscale.horizontal import read_action_log
from statuscale.simulator import RunRecord


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2) if not isinstance(obj, str) else obj, encoding="utf-8")
    return str(p)


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))))


def test_run_writes_outputs(tmp_path):
    cfg = write(tmp_path, {"seed": 42, "controller": "statuscale"})
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    rec = RunRecord.from_csv((out / "run_statuscale.csv").read_text(encoding="utf-8"))
    assert len(rec) == 540
    report = json.loads((out / "run_statuscale_report.json").read_text(encoding="utf-8"))
    assert report["seed"] == 42 and report["avg_rt"] > 0
    read_action_log((out / "run_statuscale_actions.csv").read_text(encoding="utf-8"))


def test_run_is_byte_identical(tmp_path):
    cfg = write(tmp_path, {"seed": 7, "controller": "pid_only"})
    for d in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("run_pid_only.csv", "run_pid_only_report.json", "run_pid_only_actions.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, '{\n  "seed": 1,\n  "horizontal": {\n    "replcas": 4\n  }\n}\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "replcas" in err and "line 4" in err


def test_missing_seed_for_synthetic_trace(tmp_path, capsys):
    cfg = write(tmp_path, {"controller": "statuscale"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "seed" in capsys.readouterr().err
    assert main(["run", "--config", cfg, "--out", str(tmp_path), "--seed", "3"]) == 0


def test_bad_json_and_missing_file(tmp_path):
    cfg = write(tmp_path, '{\n  "seed": 1,\n}')
    with pytest.raises(ConfigError) as exc:
        parse_config(open(cfg).read())
    assert exc.value.line == 3
    assert main(["run", "--config", cfg]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["bogus"]) == 2


def test_runtime_failure_exit_1(tmp_path):
    trace = tmp_path / "t.csv"
    trace.write_text("timestamp,load\n0,oops\n", encoding="utf-8")
    cfg = write(tmp_path, {"trace": {"source": "file", "path": "t.csv"}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_file_trace_needs_no_seed(tmp_path):
    lines = ["timestamp,load"] + [f"{20 * i},{100 + (i % 7)}" for i in range(60)]
    (tmp_path / "t.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    cfg = write(tmp_path, {"trace": {"source": "file", "path": "t.csv"}, "controller": "threshold_only"})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_config_overrides():
    cfg = parse_config('{"seed": 1, "omega": 2.0}', seed=9, omega=0.5)
    assert (cfg.seed, cfg.omega) == (9, 0.5)
    cfg = parse_config('{"seed": 1, "detector": {"lam": 12}, "horizontal": {"max_replicas": 4}}')
    assert cfg.simulation.detector.lam == 12 and cfg.simulation.horizontal.max_replicas == 4
    with pytest.raises(ConfigError):
        parse_config('{"seed": 1, "controllers": ["statuscale", "magic"]}')
    with pytest.raises(ConfigError):
        parse_config('{"seed": 1, "vertical": {"min_quota": 5}}')


def test_compare(tmp_path):
    cfg = write(tmp_path, {"seed": 42, "controllers": ["statuscale", "threshold_only"], "repeats": 3})
    out = tmp_path / "cmp"
    assert main(["compare", "--config", cfg, "--out", str(out)]) == 0
    table = rows(out / "compare.csv")
    assert len(table) == 6
    for r in range(3):
        mine = [row for row in table if int(row["repeat"]) == r]
        assert [row["controller"] for row in mine] == ["statuscale", "threshold_only"]
        budgets = [float(row["budget"]) for row in mine]
        assert max(budgets) / min(budgets) - 1 <= 0.01
    summary = {(s["controller"], s["metric"]): s for s in rows(out / "compare_summary.csv")}
    for c in ("statuscale", "threshold_only"):
        raw = [float(row["avg_rt"]) for row in table if row["controller"] == c]
        s = summary[(c, "avg_rt")]
        mean, lo, hi = t_interval(raw)
        assert float(s["mean"]) == pytest.approx(mean)
        assert float(s["ci_low"]) == pytest.approx(lo)
        assert float(s["ci_high"]) == pytest.approx(hi)


def test_compare_needs_two_controllers(tmp_path):
    cfg = write(tmp_path, {"seed": 1, "controllers": ["statuscale"]})
    assert main(["compare", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_calibrate(tmp_path, capsys):
    cfg = write(tmp_path, {"seed": 42, "calibration": {"lambda_grid": [10, 30, 50]}})
    out = tmp_path / "cal"
    assert main(["calibrate", "--config", cfg, "--out", str(out)]) == 0
    table = rows(out / "calibration.csv")
    assert len(table) == 3
    assert sum(int(r["best"]) for r in table) == 1
    for r in table:
        p, rc, f = float(r["precision"]), float(r["recall"]), float(r["f_measure"])
        assert f == pytest.approx(2 * p * rc / (p + rc) if p + rc else 0.0)
    assert "best lambda" in capsys.readouterr().out


def test_calibrate_singleton_and_empty(tmp_path):
    cfg = write(tmp_path, {"seed": 42, "calibration": {"lambda_grid": [30]}})
    assert main(["calibrate", "--config", cfg, "--out", str(tmp_path / "one")]) == 0
    _, best = read_calibration_csv((tmp_path / "one" / "calibration.csv").read_text(encoding="utf-8"))
    assert best == 30.0
    cfg = write(tmp_path, {"seed": 42, "calibration": {"lambda_grid": []}}, "empty.json")
    assert main(["calibrate", "--config", cfg, "--out", str(tmp_path / "none")]) == 2


def test_debug_dump(tmp_path):
    cfg = write(tmp_path, {"seed": 42})
    out = tmp_path / "dbg"
    assert main(["run", "--config", cfg, "--out", str(out), "--debug-controllers"]) == 0
    lines = (out / "run_statuscale_debug.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 540
    row = json.loads(lines[-1])
    assert set(row["gains"]) == {"kp", "ki", "kd"}
    assert len(row["input_weights"]) == 4 and len(row["hidden_weights"]) == 5
