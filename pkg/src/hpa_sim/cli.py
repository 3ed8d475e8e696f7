"""Command-line harness: run scenarios, batch experiments, emit reports.

Exit codes: 0 success, 2 configuration error, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EmptyTrace, NoTransitions
from .metrics import detection_lags, fov_retention, impact_severity, rmse, slack_windows
from .scenarios import (
    hover_scenario,
    lift_disturbance_scenario,
    line_impulse_scenario,
    lissajous_scenario,
    load_scenario,
    scenario_to_dict,
)
from .simulator import Scenario, run
from .traceio import write_csv, write_jsonl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIM = 3

# hardware reference values the tracking table is compared against
TRACKING_TABLE_REFERENCE = {
    5.0: {"x": 0.052, "y": 0.021, "z": 0.039, "max_speed": 3.0},
    4.0: {"x": 0.068, "y": 0.032, "z": 0.044, "max_speed": 3.6},
    3.5: {"x": 0.073, "y": 0.027, "z": 0.043, "max_speed": 4.2},
}


def _fail_config(msg: str) -> int:
    print(json.dumps({"error": "config", "message": msg}), file=sys.stderr)
    return EXIT_CONFIG


def _fail_sim(msg: str) -> int:
    print(json.dumps({"error": "simulation", "message": msg}), file=sys.stderr)
    return EXIT_SIM


def _write_outputs(trace, scenario: Scenario, out_dir: Path, fmt: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = scenario.name
    trace_path = out_dir / f"{stem}.{'csv' if fmt == 'csv' else 'jsonl'}"
    if fmt == "csv":
        write_csv(trace, trace_path)
    else:
        write_jsonl(trace, trace_path)
    try:
        report = rmse(trace, settle_time=2.0).as_dict()
    except EmptyTrace:
        report = {"label": scenario.name, "note": "no taut samples"}
    report_path = out_dir / f"{stem}_rmse.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    manifest = {
        "scenario": scenario_to_dict(scenario),
        "seed": scenario.seed,
        "version": __version__,
        "status": trace.status,
        "records": len(trace),
        "trace_file": trace_path.name,
        "report_file": report_path.name,
    }
    manifest_path = out_dir / f"{stem}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return trace_path, report_path, manifest_path


def cmd_run(args) -> int:
    path = Path(args.scenario)
    if not path.exists():
        return _fail_config(f"scenario file not found: {path}")
    try:
        scenario = load_scenario(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail_config(f"cannot parse scenario {path}: {exc}")
    if args.seed is not None:
        scenario.seed = args.seed
    if args.controller is not None:
        scenario.controller = {"hpa": "hpa", "taut": "taut", "geometric": "geometric"}[args.controller]
    try:
        trace = run(scenario)
    except Exception as exc:  # noqa: BLE001
        return _fail_sim(str(exc))
    if trace.status != "ok":
        _write_outputs(trace, scenario, Path(args.out), args.format)
        return _fail_sim(trace.status)
    _write_outputs(trace, scenario, Path(args.out), args.format)
    print(f"wrote {len(trace)} records to {args.out}")
    return EXIT_OK


def _run_one(scenario: Scenario):
    return scenario.name, run(scenario)


def _run_batch(scenarios: list[Scenario]):
    workers = int(os.environ.get("HPA_SIM_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return dict(pool.map(_run_one, scenarios))
    return dict(_run_one(s) for s in scenarios)


def cmd_table1(args) -> int:
    periods = (5.0, 4.0, 3.5)
    scenarios = [lissajous_scenario(p, seed=args.seed or 0,
                                    sensor_noise=not args.noiseless) for p in periods]
    try:
        traces = _run_batch(scenarios)
    except Exception as exc:  # noqa: BLE001
        return _fail_sim(str(exc))
    rows = {}
    for period, sc in zip(periods, scenarios):
        trace = traces[sc.name]
        if trace.status != "ok":
            return _fail_sim(f"{sc.name}: {trace.status}")
        rep = rmse(trace, settle_time=2.0, label=sc.name)
        rows[period] = rep
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = ["Payload tracking RMSE (simulation vs hardware reference)", ""]
    header = f"{'':14s}" + "".join(f"T = {p:g} s".rjust(14) for p in periods)
    lines.append(header)
    for axis in "xyz":
        vals = "".join(f"{rows[p].rmse_xyz['xyz'.index(axis)]:14.3f}" for p in periods)
        refs = "".join(f"{TRACKING_TABLE_REFERENCE[p][axis]:14.3f}" for p in periods)
        lines.append(f"sim {axis} [m]   " + vals)
        lines.append(f"ref {axis} [m]   " + refs)
    lines.append("max |v_L| sim " + "".join(f"{rows[p].max_load_speed:14.2f}" for p in periods))
    lines.append("max |v_L| ref " + "".join(f"{TRACKING_TABLE_REFERENCE[p]['max_speed']:14.2f}" for p in periods))
    table = "\n".join(lines)
    print(table)
    (out_dir / "tracking_table.txt").write_text(table + "\n")
    payload = {
        f"T{p:g}": {**rows[p].as_dict(), "reference": TRACKING_TABLE_REFERENCE[p]}
        for p in periods
    }
    (out_dir / "tracking_table.json").write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    scenarios = [
        lift_disturbance_scenario("hpa", seed=args.seed or 5),
        lift_disturbance_scenario("taut", seed=args.seed or 5),
        line_impulse_scenario("hpa", seed=args.seed or 5),
        line_impulse_scenario("taut", seed=args.seed or 5),
    ]
    try:
        traces = _run_batch(scenarios)
    except Exception as exc:  # noqa: BLE001
        return _fail_sim(str(exc))
    report = {}
    for sc in scenarios:
        trace = traces[sc.name]
        if trace.status != "ok":
            return _fail_sim(f"{sc.name}: {trace.status}")
        entry = {"slack_windows": slack_windows(trace),
                 "detection_lags_ms": [round(1e3 * v, 1) for v in detection_lags(trace)]}
        try:
            vz, rate = impact_severity(trace)
            entry["peak_vz_quad"] = vz
            entry["peak_body_rate"] = rate
        except NoTransitions:
            entry["peak_vz_quad"] = None
        report[sc.name] = entry
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "compare.json").write_text(json.dumps(report, indent=2) + "\n")
    for name, entry in report.items():
        windows = ", ".join(f"{a:.2f}..{b:.2f}" for a, b in entry["slack_windows"]) or "none"
        peak = entry.get("peak_vz_quad")
        peak_s = f"{peak:.3f} m/s" if peak is not None else "n/a"
        print(f"{name:24s} slack: {windows:24s} peak |vz_Q|: {peak_s}")
    hybrid = report.get("hover_lift_hpa", {}).get("peak_vz_quad")
    taut = report.get("hover_lift_taut", {}).get("peak_vz_quad")
    if hybrid and taut:
        print(f"hover lift impact ratio (taut-assuming / hybrid): {taut / hybrid:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hpa-sim",
        description="Quadrotor slung-payload simulation and control harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("--scenario", required=True, help="scenario JSON path")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--controller", choices=["hpa", "taut", "geometric"], default=None)
    p_run.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p_run.set_defaults(func=cmd_run)

    p_t1 = sub.add_parser("table1", help="tracking RMSE table at three periods")
    p_t1.add_argument("--out", default="out")
    p_t1.add_argument("--seed", type=int, default=None)
    p_t1.add_argument("--noiseless", action="store_true", help="disable sensor noise")
    p_t1.set_defaults(func=cmd_table1)

    p_cmp = sub.add_parser("compare", help="hybrid vs taut-assuming controller")
    p_cmp.add_argument("--out", default="out")
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
