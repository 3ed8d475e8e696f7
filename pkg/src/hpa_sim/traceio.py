"""Trace export and import: CSV and JSON-lines, byte-stable for fixed seeds."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .simulator import Trace, TraceRecord

CSV_COLUMNS = (
    ["time", "mode_true", "mode_detected", "hold_active", "impulse_applied"]
    + [f"load_pos_{a}" for a in "xyz"] + [f"load_vel_{a}" for a in "xyz"]
    + [f"quad_pos_{a}" for a in "xyz"] + [f"quad_vel_{a}" for a in "xyz"]
    + [f"att_{a}" for a in "wxyz"] + [f"rate_{a}" for a in "xyz"]
    + [f"est_load_pos_{a}" for a in "xyz"] + [f"est_load_vel_{a}" for a in "xyz"]
    + [f"est_quad_pos_{a}" for a in "xyz"] + [f"est_quad_vel_{a}" for a in "xyz"]
    + [f"motor_{i}" for i in range(1, 5)]
    + ["thrust_cmd"] + [f"rates_cmd_{a}" for a in "xyz"]
    + [f"cam_load_{a}" for a in "xyz"] + ["fov_inside"]
    + [f"ref_load_pos_{a}" for a in "xyz"]
    + ["kkt_residual", "controller_failed"]
)

# solve_time stays on the in-memory records only: wall-clock timing would
# break the byte-identical reproducibility of exported traces


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _record_row(r: TraceRecord) -> list[str]:
    row = [_fmt(r.time), str(r.mode_true), str(r.mode_detected),
           str(int(r.hold_active)), str(int(r.impulse_applied))]
    row += [_fmt(v) for v in r.state]
    row += [_fmt(v) for v in r.estimate[:12]]
    row += [_fmt(v) for v in r.motors]
    row.append(_fmt(r.thrust_cmd))
    row += [_fmt(v) for v in r.rates_cmd]
    row += [_fmt(v) for v in r.cam_load]
    row.append(str(int(r.fov_inside)))
    row += [_fmt(v) for v in r.ref_load_pos]
    row += [_fmt(r.kkt_residual), str(int(r.controller_failed))]
    return row


def write_csv(trace: Trace, path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(_record_row(r)) for r in trace.records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> Trace:
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    if header != CSV_COLUMNS:
        raise ValueError("unexpected trace CSV header")
    trace = Trace()
    for line in text[1:]:
        vals = line.split(",")
        f = [float(v) for v in vals]
        state = np.array(f[5:24])
        estimate = state.copy()
        estimate[:12] = f[24:36]
        trace.records.append(TraceRecord(
            time=f[0], state=state, estimate=estimate,
            mode_true=int(vals[1]), mode_detected=int(vals[2]),
            hold_active=bool(int(vals[3])), impulse_applied=bool(int(vals[4])),
            motors=np.array(f[36:40]), thrust_cmd=f[40],
            rates_cmd=np.array(f[41:44]), cam_load=np.array(f[44:47]),
            fov_inside=bool(int(vals[47])), ref_load_pos=np.array(f[48:51]),
            kkt_residual=f[51], solve_time=float("nan"),
            controller_failed=bool(int(vals[52])),
        ))
    return trace


def _record_dict(r: TraceRecord) -> dict:
    return {
        "time": r.time,
        "mode_true": int(r.mode_true),
        "mode_detected": int(r.mode_detected),
        "hold_active": bool(r.hold_active),
        "impulse_applied": bool(r.impulse_applied),
        "state": [float(v) for v in r.state],
        "estimate": [float(v) for v in r.estimate],
        "motors": [float(v) for v in r.motors],
        "thrust_cmd": float(r.thrust_cmd),
        "rates_cmd": [float(v) for v in r.rates_cmd],
        "cam_load": [float(v) for v in r.cam_load],
        "fov_inside": bool(r.fov_inside),
        "ref_load_pos": [float(v) for v in r.ref_load_pos],
        "kkt_residual": float(r.kkt_residual),
        "controller_failed": bool(r.controller_failed),
    }


def write_jsonl(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        for r in trace.records:
            fh.write(json.dumps(_record_dict(r)) + "\n")


def read_jsonl(path) -> Trace:
    trace = Trace()
    for line in Path(path).read_text().strip().split("\n"):
        if not line:
            continue
        d = json.loads(line)
        trace.records.append(TraceRecord(
            time=d["time"], state=np.array(d["state"]), estimate=np.array(d["estimate"]),
            mode_true=d["mode_true"], mode_detected=d["mode_detected"],
            hold_active=d["hold_active"], impulse_applied=d["impulse_applied"],
            motors=np.array(d["motors"]), thrust_cmd=d["thrust_cmd"],
            rates_cmd=np.array(d["rates_cmd"]), cam_load=np.array(d["cam_load"]),
            fov_inside=d["fov_inside"], ref_load_pos=np.array(d["ref_load_pos"]),
            kkt_residual=d["kkt_residual"], solve_time=float("nan"),
            controller_failed=d["controller_failed"],
        ))
    return trace
