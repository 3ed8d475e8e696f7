"""Payload reference trajectories and the flatness map to quadrotor states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import E3
from .errors import DegenerateTension
from .params import VehicleParams


@dataclass
class LissajousParams:
    """x = a sin(w t), y = b sin(n w t + phi), z = c sin(m w t) + psi,
    with w = 2 pi / period_scale so period_scale is the x period in seconds."""

    a: float = 2.0
    b: float = 0.5
    c: float = 0.0
    n: float = 2.0
    m_rel: float = 1.0
    phi: float = 0.0
    psi: float = 0.0
    period_scale: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if self.period_scale <= 0:
            raise ValueError("period_scale must be positive")


@dataclass
class ReferencePoint:
    """Load reference plus the taut-consistent nominal quadrotor state."""

    load_pos: np.ndarray
    load_vel: np.ndarray
    load_acc: np.ndarray
    quad_pos: np.ndarray
    quad_vel: np.ndarray
    cable_dir: np.ndarray
    yaw: float = 0.0


def lissajous(t: float, p: LissajousParams):
    """Position, velocity, acceleration of the Lissajous reference at time t."""
    w = 2.0 * np.pi / p.period_scale
    sx, cx = np.sin(w * t), np.cos(w * t)
    sy, cy = np.sin(p.n * w * t + p.phi), np.cos(p.n * w * t + p.phi)
    sz, cz = np.sin(p.m_rel * w * t), np.cos(p.m_rel * w * t)
    pos = np.array([p.a * sx, p.b * sy, p.c * sz + p.psi])
    vel = np.array([p.a * w * cx, p.b * p.n * w * cy, p.c * p.m_rel * w * cz])
    acc = np.array(
        [-p.a * w**2 * sx, -p.b * (p.n * w) ** 2 * sy, -p.c * (p.m_rel * w) ** 2 * sz]
    )
    return pos, vel, acc


def _lissajous_jerk(t: float, p: LissajousParams) -> np.ndarray:
    w = 2.0 * np.pi / p.period_scale
    return np.array(
        [
            -p.a * w**3 * np.cos(w * t),
            -p.b * (p.n * w) ** 3 * np.cos(p.n * w * t + p.phi),
            -p.c * (p.m_rel * w) ** 3 * np.cos(p.m_rel * w * t),
        ]
    )


class TrajectorySource:
    """Base interface: sample(t) -> (pos, vel, acc) and optional jerk(t)."""

    def sample(self, t: float):
        raise NotImplementedError

    def jerk(self, t: float) -> np.ndarray | None:
        return None


class HoverTrajectory(TrajectorySource):
    def __init__(self, point) -> None:
        self.point = np.asarray(point, dtype=float)

    def sample(self, t: float):
        z = np.zeros(3)
        return self.point.copy(), z, z.copy()

    def jerk(self, t: float) -> np.ndarray:
        return np.zeros(3)


class LineTrajectory(TrajectorySource):
    """Minimum-jerk point-to-point segment, at rest outside [t0, t0+duration]."""

    def __init__(self, start, end, t0: float = 0.0, duration: float = 5.0) -> None:
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        self.t0 = float(t0)
        self.duration = float(duration)
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    def _profile(self, t: float):
        tau = (t - self.t0) / self.duration
        if tau <= 0.0:
            return 0.0, 0.0, 0.0, 0.0
        if tau >= 1.0:
            return 1.0, 0.0, 0.0, 0.0
        s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
        ds = (30 * tau**2 - 60 * tau**3 + 30 * tau**4) / self.duration
        dds = (60 * tau - 180 * tau**2 + 120 * tau**3) / self.duration**2
        ddds = (60 - 360 * tau + 360 * tau**2) / self.duration**3
        return s, ds, dds, ddds

    def sample(self, t: float):
        s, ds, dds, _ = self._profile(t)
        span = self.end - self.start
        return self.start + s * span, ds * span, dds * span

    def jerk(self, t: float) -> np.ndarray:
        _, _, _, ddds = self._profile(t)
        return ddds * (self.end - self.start)


class LissajousTrajectory(TrajectorySource):
    def __init__(self, p: LissajousParams, origin=(0.0, 0.0, 0.0)) -> None:
        self.params = p
        self.origin = np.asarray(origin, dtype=float)

    def sample(self, t: float):
        pos, vel, acc = lissajous(t, self.params)
        return pos + self.origin, vel, acc

    def jerk(self, t: float) -> np.ndarray:
        return _lissajous_jerk(t, self.params)


def flat_map(load_ref, params: VehicleParams, yaw: float = 0.0,
             jerk: np.ndarray | None = None) -> ReferencePoint:
    """Nominal quadrotor state from a load reference via differential flatness.

    The cable carries the whole desired force, so its direction follows from
    the load acceleration. The quad velocity needs the cable-direction rate,
    taken from the analytic jerk when available, else a finite difference of
    the acceleration is required from the caller (see horizon_refs).
    """
    pos, vel, acc = (np.asarray(v, dtype=float) for v in load_ref)
    g = params.gravity
    tension_vec = params.total_mass * (acc + g * E3)
    norm = np.linalg.norm(tension_vec)
    if norm <= 1e-6:
        raise DegenerateTension("reference acceleration cancels gravity")
    cable_dir = -tension_vec / norm
    quad_pos = pos - params.cable_length * cable_dir
    if jerk is None:
        cable_rate = np.zeros(3)
    else:
        n = acc + g * E3
        n_norm = np.linalg.norm(n)
        n_hat = n / n_norm
        # d/dt(-n/|n|) = -(I - n n^T/|n|^2) jerk / |n|
        cable_rate = -(jerk - n_hat * (n_hat @ jerk)) / n_norm
    quad_vel = vel - params.cable_length * cable_rate
    return ReferencePoint(pos, vel, acc, quad_pos, quad_vel, cable_dir, yaw)


_FD_STEP = 1e-4


def reference_at(source: TrajectorySource, t: float, params: VehicleParams,
                 yaw: float = 0.0) -> ReferencePoint:
    """Sample a source and lift it through the flatness map.

    Sources without analytic jerk get a central finite difference of the
    sampled acceleration.
    """
    jerk = source.jerk(t)
    if jerk is None:
        _, _, a_plus = source.sample(t + _FD_STEP)
        _, _, a_minus = source.sample(t - _FD_STEP)
        jerk = (np.asarray(a_plus) - np.asarray(a_minus)) / (2 * _FD_STEP)
    return flat_map(source.sample(t), params, yaw=yaw, jerk=jerk)


def horizon_refs(t0: float, dt: float, n_steps: int, source: TrajectorySource,
                 params: VehicleParams, yaw: float = 0.0) -> list[ReferencePoint]:
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    return [reference_at(source, t0 + k * dt, params, yaw) for k in range(n_steps)]
