"""Command-line entry point: ``statuscale run|compare|calibrate --config PATH``.

Exit codes: 0 success, 1 runtime failure, 2 configuration failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

from . import metrics
from .config import RunConfig, load_config
from .detector import calibrate_lambda, calibration_csv
from .exceptions import ConfigError, StatuScaleError
from .horizontal import action_log_csv
from .predictor import forecast_track, labels_from_forecasts
from .simulator import (
    EqualizedRun,
    budget_of,
    config_to_dict,
    equalize_budgets,
    evaluate,
    report_json,
    run_experiment,
)

log = logging.getLogger("statuscale")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse already exits 2 on usage errors; keep the message on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="statuscale", description="Simulate and compare elastic scaling controllers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("run", "simulate one controller"),
                       ("compare", "budget-matched comparison of several controllers"),
                       ("calibrate", "sweep the detector margin coefficient")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        s.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--omega", type=float, help="response-time weight in the objective")
        s.add_argument("--debug-controllers", action="store_true",
                       help="dump per-interval controller internals as JSON lines")
    return p


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _debug_sink(rows: list):
    def sink(row):
        rows.append(row)
    return sink


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def cmd_run(cfg: RunConfig, out: Path, debug: bool = False) -> int:
    trace = cfg.build_trace()
    seed = cfg.seed if cfg.seed is not None else 0
    rows: list = []
    record = run_experiment(trace, cfg.controller, cfg.simulation, seed,
                            debug=_debug_sink(rows) if debug else None)
    report = evaluate(record, cfg.simulation, cfg.slos, cfg.omega)
    report = {"controller": cfg.controller, "seed": seed, "trace": trace.source_tag, **report}
    stem = f"run_{cfg.controller}"
    _write(out / f"{stem}.csv", record.to_csv())
    _write(out / f"{stem}_report.json", report_json(report))
    _write(out / f"{stem}_actions.csv", action_log_csv(record.action_log))
    _write(out / "config.json", report_json(config_to_dict(cfg.simulation)))
    if debug:
        _write(out / f"{stem}_debug.jsonl", _jsonl(rows))
    print(f"{cfg.controller}: avg_rt={report['avg_rt']:.2f} ms budget={report['budget']:.1f}")
    return EXIT_OK


def _numeric(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def compare_rows(cfg: RunConfig, debug_rows: dict | None = None) -> list[dict]:
    """One row per (repeat, controller); repeat ``r`` uses seed ``seed + r``."""
    if len(cfg.controllers) < 2:
        raise ConfigError("compare needs at least two controllers")
    base_seed = cfg.seed if cfg.seed is not None else 0
    rows = []
    for r in range(cfg.repeats):
        seed = base_seed + r
        trace = cfg.build_trace(seed)
        if cfg.equalize_budget:
            runs = equalize_budgets(trace, cfg.controllers, cfg.simulation, seed, cfg.budget_tolerance)
        else:
            runs = {}
            for c in cfg.controllers:
                rec = run_experiment(trace, c, cfg.simulation, seed)
                runs[c] = EqualizedRun(c, cfg.simulation.vertical.min_quota, rec, budget_of(rec), 0)
        for c in cfg.controllers:
            run = runs[c]
            if debug_rows is not None:
                sink: list = []
                run_experiment(trace, c, cfg.simulation.with_min_quota(run.floor), seed, debug=_debug_sink(sink))
                debug_rows[(r, c)] = sink
            report = evaluate(run.record, cfg.simulation, cfg.slos, cfg.omega)
            rows.append({"repeat": r, "seed": seed, "controller": c, "min_quota_floor": run.floor, **report})
    return rows


def summarize(rows: list[dict], confidence: float = 0.95) -> list[dict]:
    """Mean and t-interval per controller and numeric metric."""
    skip = {"repeat", "seed", "controller"}
    out = []
    controllers = list(dict.fromkeys(r["controller"] for r in rows))
    for c in controllers:
        mine = [r for r in rows if r["controller"] == c]
        for key in mine[0]:
            if key in skip:
                continue
            vals = [r[key] for r in mine]
            if not all(_numeric(v) for v in vals):
                continue
            mean, lo, hi = metrics.mean_ci(vals, confidence)
            out.append({"controller": c, "metric": key, "n": len(vals), "mean": mean,
                        "ci_low": lo, "ci_high": hi})
    return out


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def cmd_compare(cfg: RunConfig, out: Path, debug: bool = False) -> int:
    debug_rows: dict | None = {} if debug else None
    rows = compare_rows(cfg, debug_rows)
    _write(out / "compare.csv", _csv(rows))
    _write(out / "compare_summary.csv", _csv(summarize(rows)))
    if debug_rows:
        for (r, c), dump in debug_rows.items():
            _write(out / f"debug_{c}_r{r}.jsonl", _jsonl(dump))
    for s in summarize(rows):
        if s["metric"] == "avg_rt":
            print(f"{s['controller']}: avg_rt={s['mean']:.2f} ms [{s['ci_low']:.2f}, {s['ci_high']:.2f}]")
    return EXIT_OK


def calibration_results(cfg: RunConfig):
    """``(best_lambda, {lam: (P, R, F)})`` on the configured trace."""
    grid = cfg.calibration.lambda_grid
    if not grid:
        raise ConfigError("calibration lambda_grid is empty")
    if any(not 0 < v <= 60 for v in grid):
        raise ConfigError("calibration lambda values must lie in (0, 60]")
    trace = cfg.build_trace()
    sim = cfg.simulation
    forecasts = forecast_track(trace.loads, sim.predictor)
    # forecasts[i] targets loads[i + 1]
    labels = labels_from_forecasts(forecasts[:-1], trace.loads[1:], cfg.calibration.tolerance, offset=1)
    return calibrate_lambda(trace, labels, grid, sim.detector.segment_size, sim.detector.load_scale)


def cmd_calibrate(cfg: RunConfig, out: Path, debug: bool = False) -> int:
    best, results = calibration_results(cfg)
    _write(out / "calibration.csv", calibration_csv(results, best))
    print(f"best lambda: {best:g} (F={results[best][2]:.4f})")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, omega=args.omega)
        out = Path(args.out) if args.out else Path(cfg.output_dir)
        return COMMANDS[args.command](cfg, out, args.debug_controllers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StatuScaleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is still a runtime failure, not a crash code
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
