"""Scenario (de)serialization and the canned experiment scenarios."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .params import VehicleParams
from .simulator import DisturbanceEvent, Scenario


def scenario_to_dict(sc: Scenario) -> dict:
    out = {
        "name": sc.name,
        "duration": sc.duration,
        "seed": sc.seed,
        "controller": sc.controller,
        "trajectory": sc.trajectory,
        "disturbances": [
            {
                "kind": d.kind,
                "target": d.target,
                "t0": d.t0,
                **({"t1": d.t1} if d.t1 is not None else {}),
                **({"vector": list(map(float, d.vector))} if d.vector is not None else {}),
                **({"waypoints": [[t, list(map(float, p))] for t, p in d.waypoints]}
                   if d.waypoints is not None else {}),
            }
            for d in sc.disturbances
        ],
        "rates": {"plant_hz": sc.plant_hz, "mpc_hz": sc.mpc_hz, "sensor_hz": sc.sensor_hz},
        "noise": {
            "enabled": sc.sensor_noise,
            "quad_pos_std": sc.quad_pos_noise,
            "quad_vel_std": sc.quad_vel_noise,
        },
        "rate_gain": sc.rate_gain,
        "record_every": sc.record_every,
        "yaw": sc.yaw,
        "mpc": {k: (list(map(float, v)) if isinstance(v, (list, tuple, np.ndarray)) else v)
                for k, v in sc.mpc_overrides.items()},
    }
    return out


def scenario_from_dict(data: dict) -> Scenario:
    rates = data.get("rates", {})
    noise = data.get("noise", {})
    mpc = dict(data.get("mpc", {}))
    for key, val in mpc.items():
        if isinstance(val, list):
            mpc[key] = np.asarray(val, dtype=float)
    return Scenario(
        name=data.get("name", "scenario"),
        duration=float(data["duration"]),
        seed=int(data.get("seed", 0)),
        controller=data.get("controller", "hpa"),
        trajectory=data.get("trajectory", {"kind": "hover", "point": [0, 0, 0.7]}),
        disturbances=[
            DisturbanceEvent(
                kind=d["kind"], target=d["target"], t0=float(d["t0"]),
                t1=float(d["t1"]) if "t1" in d else None,
                vector=d.get("vector"), waypoints=d.get("waypoints"),
            )
            for d in data.get("disturbances", [])
        ],
        plant_hz=int(rates.get("plant_hz", 1000)),
        mpc_hz=int(rates.get("mpc_hz", 150)),
        sensor_hz=int(rates.get("sensor_hz", 30)),
        sensor_noise=bool(noise.get("enabled", True)),
        quad_pos_noise=float(noise.get("quad_pos_std", 0.005)),
        quad_vel_noise=float(noise.get("quad_vel_std", 0.02)),
        rate_gain=float(data.get("rate_gain", 25.0)),
        record_every=int(data.get("record_every", 1)),
        yaw=float(data.get("yaw", 0.0)),
        mpc_overrides=mpc,
    )


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------ canned setups


def hover_scenario(duration: float = 8.0, seed: int = 0, controller: str = "hpa",
                   sensor_noise: bool = True) -> Scenario:
    return Scenario(
        name="hover",
        duration=duration,
        seed=seed,
        controller=controller,
        sensor_noise=sensor_noise,
        trajectory={"kind": "hover", "point": [0.0, 0.0, 0.7]},
    )


def lift_disturbance_scenario(controller: str = "hpa", seed: int = 0,
                              duration: float = 7.0) -> Scenario:
    """Gripper lifts the hovering payload up and sideways, holds, releases.

    The brisk 0.12 s lift drives the separation decisively below the detector
    threshold so mode-detection latency stays within two detector periods.
    The taut-assuming baseline sees the projected payload estimate far below
    its reference, descends after it, and takes a harder impact at release.
    """
    grab = [0.0, 0.0, 0.7]
    held = [0.18, 0.0, 1.05]  # 0.23 m from the quad hovering at (0, 0, 1.2)
    t_release = 4.0
    return Scenario(
        name=f"hover_lift_{controller}",
        duration=duration,
        seed=seed,
        controller=controller,
        trajectory={"kind": "hover", "point": [0.0, 0.0, 0.7]},
        disturbances=[
            DisturbanceEvent(kind="hold", target="load", t0=2.0, t1=t_release,
                             waypoints=[[2.0, grab], [2.12, held], [t_release, held]]),
        ],
    )


def line_impulse_scenario(controller: str = "hpa", seed: int = 0) -> Scenario:
    """Straight-line payload trajectory with a vertical impulse kick."""
    return Scenario(
        name=f"line_impulse_{controller}",
        duration=10.0,
        seed=seed,
        controller=controller,
        trajectory={"kind": "line", "start": [0.0, 0.0, 0.7], "end": [1.5, 0.0, 0.7],
                    "t0": 1.0, "duration": 5.0},
        disturbances=[
            DisturbanceEvent(kind="impulse", target="load", t0=3.0,
                             vector=[0.0, 0.0, 0.22]),
        ],
    )


def lissajous_scenario(period: float, seed: int = 0, sensor_noise: bool = True,
                       duration: float | None = None) -> Scenario:
    """Payload tracking figure: a = 2, b = 0.5, n = 2 at the given x period."""
    if duration is None:
        duration = 2.0 + 2.0 * period  # settle, then two full periods
    return Scenario(
        name=f"lissajous_T{period:g}",
        duration=duration,
        seed=seed,
        controller="hpa",
        sensor_noise=sensor_noise,
        trajectory={"kind": "lissajous", "a": 2.0, "b": 0.5, "n": 2.0, "c": 0.0,
                    "psi": 1.0, "period": period},
    )


def manipulation_scenario(q_cam: float, seed: int = 0, duration: float = 22.0) -> Scenario:
    """Human drags the held payload through an x-y random walk under the
    hovering quad; perception weight selects whether the camera follows."""
    rng = np.random.default_rng(seed + 1000)
    t_grab = 1.5
    # a brisk 2.5 m/s lift crosses the detector threshold within one sample
    waypoints = [[t_grab, [0.0, 0.0, 0.7]], [t_grab + 0.1, [0.0, 0.0, 0.95]]]
    t = t_grab + 0.1
    point = np.array([0.0, 0.0, 0.95])
    while t < duration:
        t += 1.6
        target = np.array([
            float(np.clip(point[0] + rng.uniform(-0.35, 0.35), -0.4, 0.4)),
            float(np.clip(point[1] + rng.uniform(-0.35, 0.35), -0.4, 0.4)),
            0.95,
        ])
        waypoints.append([t, list(target)])
        point = target
    return Scenario(
        name=f"manipulation_qcam{q_cam:g}",
        duration=duration,
        seed=seed,
        controller="hpa",
        trajectory={"kind": "hover", "point": [0.0, 0.0, 0.7]},
        disturbances=[
            DisturbanceEvent(kind="hold", target="load", t0=t_grab, t1=duration + 1.0,
                             waypoints=waypoints),
        ],
        mpc_overrides={"q_cam": np.full(2, float(q_cam))},
    )
