"""Baseline geometric payload controller (non-hybrid: always assumes taut).

Cable vectors follow the package-wide robot-to-payload convention; the
desired cable direction is the negated normalized force, i.e. the negative
of the tension direction returned by desired_cable.

The cable-rate error pairs with the rotated direction error q_des x q as its
time derivative. Pairing the rotated direction error with the plain tangent
rate instead leaves the swing undamped in-plane and cross-couples the two
swing planes (the closed loop then diverges for every gain setting tried).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ATT, E3, LOAD_POS, LOAD_VEL, QUAD_POS, QUAD_VEL, RATES, _as_vector
from .errors import DegenerateForce
from .params import VehicleParams
from .quat import quat_to_rot
from .trajectories import TrajectorySource, reference_at


@dataclass
class GeomGains:
    kp: np.ndarray = field(default_factory=lambda: np.full(3, 4.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(3, 4.0))
    ki: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))
    k_cable: np.ndarray = field(default_factory=lambda: np.full(3, 45.0))
    k_cable_rate: np.ndarray = field(default_factory=lambda: np.full(3, 18.0))
    k_rot: np.ndarray = field(default_factory=lambda: np.full(3, 3.5))
    k_omega: np.ndarray = field(default_factory=lambda: np.full(3, 0.22))
    integral_limit: np.ndarray = field(default_factory=lambda: np.full(3, 3.0))

    def __post_init__(self) -> None:
        for name in ("kp", "kd", "ki", "k_cable", "k_cable_rate", "k_rot", "k_omega",
                     "integral_limit"):
            arr = np.asarray(getattr(self, name), dtype=float)
            setattr(self, name, arr)
        if np.any(self.integral_limit <= 0):
            raise ValueError("integral_limit must be positive")


def default_gains(params: VehicleParams, integral_force_limit: float = 2.0) -> GeomGains:
    """Default gains with the integral clamp expressed as a force equivalent."""
    g = GeomGains()
    g.integral_limit = np.full(3, integral_force_limit / (params.total_mass * float(g.ki[0])))
    return g


@dataclass
class GeomRefs:
    """Trajectory references for one control cycle (tension-direction frame)."""

    load_pos: np.ndarray
    load_vel: np.ndarray
    load_acc: np.ndarray
    yaw: float = 0.0
    cable_dir_des_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cable_dir_des_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_des: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_dot_des: np.ndarray = field(default_factory=lambda: np.zeros(3))


def desired_force(x, ref: GeomRefs, gains: GeomGains, params: VehicleParams,
                  integ_state: np.ndarray, dt: float = 0.0):
    """PID payload-tracking force with feedforward and centripetal relief."""
    xv = _as_vector(x)
    e_pos = ref.load_pos - xv[LOAD_POS]
    e_vel = ref.load_vel - xv[LOAD_VEL]
    integ = np.clip(integ_state + e_pos * dt, -gains.integral_limit, gains.integral_limit)
    mt = params.total_mass
    l = params.cable_length
    q = (xv[LOAD_POS] - xv[QUAD_POS]) / l
    q_rate = (xv[LOAD_VEL] - xv[QUAD_VEL]) / l
    f_des = mt * (gains.kp * e_pos + gains.kd * e_vel + gains.ki * integ)
    f_des = f_des + mt * (ref.load_acc + params.gravity * E3)
    f_des = f_des + params.mass * l * (q_rate @ q_rate) * q
    return f_des, integ


def desired_cable(f_des: np.ndarray) -> np.ndarray:
    """Desired tension direction (payload to robot), the normalized force."""
    norm = np.linalg.norm(f_des)
    if norm <= 1e-6:
        raise DegenerateForce("desired force too small to define a direction")
    return f_des / norm


def _vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def _desired_rotation(force: np.ndarray, yaw: float) -> np.ndarray:
    b3 = force / np.linalg.norm(force)
    heading = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    b2 = np.cross(b3, heading)
    n2 = np.linalg.norm(b2)
    if n2 < 1e-9:
        raise DegenerateForce("thrust direction parallel to the reference heading")
    b2 = b2 / n2
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3])


def thrust_and_moment(x, refs: GeomRefs, f_des: np.ndarray, gains: GeomGains,
                      params: VehicleParams):
    """Collective thrust and body moment from the cable/attitude feedback laws."""
    xv = _as_vector(x)
    l = params.cable_length
    m = params.mass
    q = (xv[LOAD_POS] - xv[QUAD_POS]) / l
    q = q / np.linalg.norm(q)
    q_rate = (xv[LOAD_VEL] - xv[QUAD_VEL]) / l
    q_des = -desired_cable(f_des)
    e_q = np.cross(q_des, q)
    # time derivative of e_q: the rotated cable-rate error
    e_q_rate = np.cross(q_des, q_rate) + np.cross(refs.cable_dir_des_rate, q)

    force = np.outer(q, q) @ f_des
    force = force - m * l * np.cross(
        q, gains.k_cable * e_q + gains.k_cable_rate * e_q_rate + (q @ refs.cable_dir_des_rate) * q_rate
    )
    force = force + m * l * np.cross(q, np.cross(q_des, refs.cable_dir_des_acc))

    R = quat_to_rot(xv[ATT])
    thrust = float(force @ R[:, 2])
    R_des = _desired_rotation(force, refs.yaw)

    omega = xv[RATES]
    e_rot = 0.5 * _vee(R.T @ R_des - R_des.T @ R)
    e_omega = R.T @ R_des @ refs.omega_des - omega
    omega_hat = np.array([[0, -omega[2], omega[1]],
                          [omega[2], 0, -omega[0]],
                          [-omega[1], omega[0], 0]])
    moment = gains.k_rot * e_rot + gains.k_omega * e_omega
    moment = moment + np.cross(omega, params.inertia @ omega)
    moment = moment - params.inertia @ (
        omega_hat @ R.T @ R_des @ refs.omega_des - R.T @ R_des @ refs.omega_dot_des
    )
    return thrust, moment


_FF_H = 1e-4


def trajectory_refs(source: TrajectorySource, t: float, params: VehicleParams,
                    yaw: float = 0.0) -> GeomRefs:
    """Nominal feedforward references from the flatness map.

    The desired cable rates and angular-velocity feedforward come from finite
    differences of the nominal (error-free) trajectory.
    """
    def cable_dir(tt: float) -> np.ndarray:
        return reference_at(source, tt, params, yaw).cable_dir

    pos, vel, acc = source.sample(t)
    qd_m, qd_0, qd_p = cable_dir(t - _FF_H), cable_dir(t), cable_dir(t + _FF_H)
    qd_rate = (qd_p - qd_m) / (2 * _FF_H)
    qd_acc = (qd_p - 2 * qd_0 + qd_m) / _FF_H**2

    def r_des(tt: float) -> np.ndarray:
        r = reference_at(source, tt, params, yaw)
        force = params.total_mass * (r.load_acc + params.gravity * E3)
        return _desired_rotation(force, yaw)

    r_m, r_0, r_p = r_des(t - _FF_H), r_des(t), r_des(t + _FF_H)
    r_dot = (r_p - r_m) / (2 * _FF_H)
    r_ddot = (r_p - 2 * r_0 + r_m) / _FF_H**2

    def skew_part(m: np.ndarray) -> np.ndarray:
        return 0.5 * (m - m.T)

    omega_des = _vee(skew_part(r_0.T @ r_dot))
    omega_dot_des = _vee(skew_part(r_dot.T @ r_dot + r_0.T @ r_ddot))
    return GeomRefs(pos, vel, acc, yaw, qd_rate, qd_acc, omega_des, omega_dot_des)


class GeometricController:
    """Stateful wrapper used by the simulator; always applies the taut law."""

    def __init__(self, gains: GeomGains, params: VehicleParams,
                 source: TrajectorySource, yaw: float = 0.0,
                 feedforward: bool = True) -> None:
        self.gains = gains
        self.params = params
        self.source = source
        self.yaw = yaw
        self.feedforward = feedforward
        self.integral = np.zeros(3)
        self._last_t: float | None = None

    def __call__(self, t: float, estimate: np.ndarray):
        dt = 0.0 if self._last_t is None else t - self._last_t
        self._last_t = t
        if self.feedforward:
            refs = trajectory_refs(self.source, t, self.params, self.yaw)
        else:
            pos, vel, acc = self.source.sample(t)
            refs = GeomRefs(pos, vel, acc, self.yaw)
        f_des, self.integral = desired_force(estimate, refs, self.gains, self.params,
                                             self.integral, dt)
        return thrust_and_moment(estimate, refs, f_des, self.gains, self.params)
