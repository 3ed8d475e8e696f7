"""Post-hoc trace analysis: tracking RMSE, FoV retention, impact severity."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import HybridMode
from .errors import EmptyTrace, NoTransitions
from .simulator import DEFAULT_FOV_HALF_ANGLES, Trace


@dataclass
class RmseReport:
    label: str
    rmse_xyz: np.ndarray  # per-axis payload position RMSE over taut samples, m
    max_load_speed: float
    n_samples: int = 0

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "rmse_x": float(self.rmse_xyz[0]),
            "rmse_y": float(self.rmse_xyz[1]),
            "rmse_z": float(self.rmse_xyz[2]),
            "max_load_speed": float(self.max_load_speed),
            "n_samples": self.n_samples,
        }


def rmse(trace: Trace, reference=None, label: str = "", settle_time: float = 0.0) -> RmseReport:
    """Per-axis payload RMSE over taut samples plus the peak payload speed.

    reference: optional trajectory source sampled at record times; defaults
    to the reference positions stored in the trace.
    """
    if len(trace) == 0:
        raise EmptyTrace("cannot compute RMSE of an empty trace")
    errs = []
    vmax = 0.0
    for r in trace.records:
        vmax = max(vmax, float(np.linalg.norm(r.state[3:6])))
        if r.time < settle_time or r.mode_true != int(HybridMode.TAUT):
            continue
        ref = r.ref_load_pos if reference is None else reference.sample(r.time)[0]
        errs.append(r.state[0:3] - ref)
    if not errs:
        raise EmptyTrace("no taut samples after the settle window")
    e = np.stack(errs)
    return RmseReport(label=label or trace.scenario_name,
                      rmse_xyz=np.sqrt((e**2).mean(axis=0)),
                      max_load_speed=vmax, n_samples=len(errs))


def fov_retention(trace: Trace, half_angles=DEFAULT_FOV_HALF_ANGLES,
                  after: float = 0.0) -> float:
    """Fraction of samples with the payload inside the camera's view cone."""
    if len(trace) == 0:
        raise EmptyTrace("cannot compute retention of an empty trace")
    inside = []
    hx, hy = half_angles
    for r in trace.records:
        if r.time < after:
            continue
        cam = r.cam_load
        if cam[2] >= 0:
            inside.append(False)
            continue
        inside.append(abs(np.arctan2(cam[0], -cam[2])) <= hx
                      and abs(np.arctan2(cam[1], -cam[2])) <= hy)
    if not inside:
        raise EmptyTrace("no samples after the requested time")
    return float(np.mean(inside))


def slack_windows(trace: Trace) -> list[tuple[float, float]]:
    """Closed [start, end] intervals where the true mode is slack."""
    windows = []
    start = None
    for r in trace.records:
        if r.mode_true == int(HybridMode.SLACK) and start is None:
            start = r.time
        elif r.mode_true == int(HybridMode.TAUT) and start is not None:
            windows.append((start, r.time))
            start = None
    if start is not None:
        windows.append((start, trace.records[-1].time))
    return windows


def taut_events(trace: Trace, detected: bool = True) -> list[float]:
    """Times of slack-to-taut transitions (detected mode by default)."""
    attr = "mode_detected" if detected else "mode_true"
    out = []
    prev = None
    for r in trace.records:
        cur = getattr(r, attr)
        if prev == int(HybridMode.SLACK) and cur == int(HybridMode.TAUT):
            out.append(r.time)
        prev = cur
    return out


def impact_severity(trace: Trace, window: float = 0.2, detected: bool = True):
    """Peak |vertical quad velocity| and |body rate| near taut events."""
    if len(trace) == 0:
        raise EmptyTrace("empty trace")
    events = taut_events(trace, detected=detected)
    if not events:
        raise NoTransitions("trace contains no slack-to-taut transition")
    peak_vz = 0.0
    peak_rate = 0.0
    for t_ev in events:
        for r in trace.records:
            if abs(r.time - t_ev) <= window:
                peak_vz = max(peak_vz, abs(float(r.state[11])))
                peak_rate = max(peak_rate, float(np.linalg.norm(r.state[16:19])))
    return peak_vz, peak_rate


def detection_lags(trace: Trace) -> list[float]:
    """Delay between each true mode change and the detector agreeing."""
    lags = []
    pending: tuple[float, int] | None = None
    prev_true = None
    for r in trace.records:
        if prev_true is not None and r.mode_true != prev_true:
            pending = (r.time, r.mode_true)
        if pending is not None and r.mode_detected == pending[1]:
            lags.append(r.time - pending[0])
            pending = None
        prev_true = r.mode_true
    return lags
