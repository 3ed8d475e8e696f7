"""Hybrid slack/taut equations of motion, RK4 stepping, and the impact map.

State vector layout (19 components):
    [0:3]   payload position (world)
    [3:6]   payload velocity
    [6:9]   quadrotor position
    [9:12]  quadrotor velocity
    [12:16] attitude quaternion wxyz (world <- body)
    [16:19] body rates (body frame)

The right-hand-side functions broadcast over leading batch axes, which the
MPC uses for finite-difference sensitivities.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import InconsistentConstraint, NonFinite, NotExtended
from .params import VehicleParams
from .quat import quat_normalize

STATE_DIM = 19
INPUT_DIM = 4

LOAD_POS = slice(0, 3)
LOAD_VEL = slice(3, 6)
QUAD_POS = slice(6, 9)
QUAD_VEL = slice(9, 12)
ATT = slice(12, 16)
RATES = slice(16, 19)

E3 = np.array([0.0, 0.0, 1.0])


class HybridMode(IntEnum):
    SLACK = 0
    TAUT = 1


@dataclass
class SystemState:
    """Full system state; see module docstring for the stacked layout."""

    load_pos: np.ndarray
    load_vel: np.ndarray
    quad_pos: np.ndarray
    quad_vel: np.ndarray
    attitude: np.ndarray
    body_rates: np.ndarray

    def __post_init__(self) -> None:
        for name in ("load_pos", "load_vel", "quad_pos", "quad_vel", "attitude", "body_rates"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if not np.isfinite(self.as_vector()).all():
            raise NonFinite("state contains NaN or Inf")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.load_pos, self.load_vel, self.quad_pos, self.quad_vel, self.attitude, self.body_rates]
        )

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "SystemState":
        x = np.asarray(x, dtype=float)
        return cls(x[LOAD_POS], x[LOAD_VEL], x[QUAD_POS], x[QUAD_VEL], x[ATT], x[RATES])

    def normalized(self) -> "SystemState":
        return SystemState(
            self.load_pos, self.load_vel, self.quad_pos, self.quad_vel,
            quat_normalize(self.attitude), self.body_rates,
        )


@dataclass
class ControlInput:
    """Four motor speeds, each >= 0."""

    motor_speeds: np.ndarray

    def __post_init__(self) -> None:
        self.motor_speeds = np.asarray(self.motor_speeds, dtype=float)
        if self.motor_speeds.shape != (4,):
            raise ValueError("motor_speeds must have shape (4,)")

    def as_vector(self) -> np.ndarray:
        return self.motor_speeds


@dataclass
class CableState:
    """Unit cable direction (robot -> payload) and its tangent rate."""

    direction: np.ndarray
    rate: np.ndarray

    @classmethod
    def from_state(cls, x: np.ndarray, params: VehicleParams) -> "CableState":
        x = _as_vector(x)
        d = (x[LOAD_POS] - x[QUAD_POS]) / params.cable_length
        d = d / np.linalg.norm(d)
        rate = (x[LOAD_VEL] - x[QUAD_VEL]) / params.cable_length
        # remove any radial component so the rate is tangent to the sphere
        rate = rate - d * (d @ rate)
        return cls(d, rate)


def _as_vector(x) -> np.ndarray:
    if isinstance(x, SystemState):
        return x.as_vector()
    return np.asarray(x, dtype=float)


def _as_input(u) -> np.ndarray:
    if isinstance(u, ControlInput):
        return u.motor_speeds
    return np.asarray(u, dtype=float)


def thrust_from_motors(u, params: VehicleParams) -> float:
    """Collective thrust k_f * sum(w_i^2) in newtons."""
    w = _as_input(u)
    return params.motor_constant * float(np.sum(w * w, axis=-1))


def moment_from_motors(u, params: VehicleParams) -> np.ndarray:
    """Body moment from the X-configuration mixer (see params mixer table)."""
    w = _as_input(u)
    return params.mixer[1:, :] @ (w * w)


def motor_speeds_from_wrench(thrust: float, moment: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Invert the mixer; squared speeds are clipped into the motor box."""
    w_sq = params.mixer_inv @ np.concatenate([[thrust], moment])
    w_sq = np.clip(w_sq, params.motor_min**2, params.motor_max**2)
    return np.sqrt(w_sq)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # manual cross product: cheaper than np.cross for small batches
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _body_z(q: np.ndarray) -> np.ndarray:
    """Third column of the rotation matrix of a (nearly unit) quaternion."""
    n = np.sum(q * q, axis=-1)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    col = np.empty(q.shape[:-1] + (3,))
    col[..., 0] = 2.0 * (x * z + w * y)
    col[..., 1] = 2.0 * (y * z - w * x)
    col[..., 2] = w * w - x * x - y * y + z * z
    return col / n[..., None]


def _thrust_vector(x: np.ndarray, u: np.ndarray, params: VehicleParams) -> np.ndarray:
    f = params.motor_constant * np.sum(u * u, axis=-1)
    return f[..., None] * _body_z(x[..., ATT])


def _rotational_rhs(x: np.ndarray, u: np.ndarray, params: VehicleParams):
    q = x[..., ATT]
    omega = x[..., RATES]
    # q_dot = 0.5 * q (x) [0, omega], expanded inline
    w0, x0, y0, z0 = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ox, oy, oz = omega[..., 0], omega[..., 1], omega[..., 2]
    q_dot = np.empty_like(q)
    q_dot[..., 0] = 0.5 * (-x0 * ox - y0 * oy - z0 * oz)
    q_dot[..., 1] = 0.5 * (w0 * ox + y0 * oz - z0 * oy)
    q_dot[..., 2] = 0.5 * (w0 * oy - x0 * oz + z0 * ox)
    q_dot[..., 3] = 0.5 * (w0 * oz + x0 * oy - y0 * ox)
    m_body = (u * u) @ params.mixer[1:, :].T
    j_omega = omega @ params.inertia.T
    omega_dot = (m_body - _cross(omega, j_omega)) @ params.inertia_inv.T
    return q_dot, omega_dot


def cable_tension(x, u, params: VehicleParams, f_ext_load=None, f_ext_quad=None):
    """Cable tension implied by the taut dynamics (negative means pushing)."""
    x = _as_vector(x)
    u = _as_input(u)
    l = params.cable_length
    q = (x[..., LOAD_POS] - x[..., QUAD_POS]) / l
    q_rate = (x[..., LOAD_VEL] - x[..., QUAD_VEL]) / l
    t_vec = _thrust_vector(x, u, params)
    if f_ext_quad is not None:
        t_vec = t_vec + f_ext_quad
    w = -t_vec / params.mass
    if f_ext_load is not None:
        w = w + np.asarray(f_ext_load) / params.load_mass
    mu = params.mass * params.load_mass / params.total_mass
    return mu * (np.sum(q * w, axis=-1) + l * np.sum(q_rate * q_rate, axis=-1))


def taut_rhs(x: np.ndarray, u: np.ndarray, params: VehicleParams,
             f_ext_load=None, f_ext_quad=None) -> np.ndarray:
    """Coupled pendulum dynamics while the cable carries tension.

    Solves the constrained Newton equations through the tension scalar, which
    is algebraically identical to the Lagrange-d'Alembert form:
        (m+mL)(a_L + g e3) = (q . f R e3 - m l |q_dot|^2) q
        m l (q_ddot + |q_dot|^2 q) = q x (q x f R e3)
    and generalizes it to external forces on either body.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    l = params.cable_length
    g = params.gravity
    q = (x[..., LOAD_POS] - x[..., QUAD_POS]) / l
    q_rate = (x[..., LOAD_VEL] - x[..., QUAD_VEL]) / l
    t_vec = _thrust_vector(x, u, params)
    w = -t_vec / params.mass
    if f_ext_quad is not None:
        w = w - np.asarray(f_ext_quad) / params.mass
    if f_ext_load is not None:
        w = w + np.asarray(f_ext_load) / params.load_mass
    mu = params.mass * params.load_mass / params.total_mass
    tension = mu * (np.sum(q * w, axis=-1) + l * np.sum(q_rate * q_rate, axis=-1))

    a_load = -g * E3 - tension[..., None] * q / params.load_mass
    if f_ext_load is not None:
        a_load = a_load + np.asarray(f_ext_load) / params.load_mass
    a_quad = -g * E3 + (t_vec + tension[..., None] * q) / params.mass
    if f_ext_quad is not None:
        a_quad = a_quad + np.asarray(f_ext_quad) / params.mass

    q_dot, omega_dot = _rotational_rhs(x, u, params)
    out = np.empty_like(x)
    out[..., LOAD_POS] = x[..., LOAD_VEL]
    out[..., LOAD_VEL] = a_load
    out[..., QUAD_POS] = x[..., QUAD_VEL]
    out[..., QUAD_VEL] = a_quad
    out[..., ATT] = q_dot
    out[..., RATES] = omega_dot
    return out


def slack_rhs(x: np.ndarray, u: np.ndarray, params: VehicleParams,
              f_ext_load=None, f_ext_quad=None) -> np.ndarray:
    """Decoupled dynamics: payload in free fall, rotors act on the quad alone."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    g = params.gravity
    t_vec = _thrust_vector(x, u, params)
    a_load = np.broadcast_to(-g * E3, x[..., LOAD_VEL].shape).copy()
    if f_ext_load is not None:
        a_load = a_load + np.asarray(f_ext_load) / params.load_mass
    a_quad = t_vec / params.mass - g * E3
    if f_ext_quad is not None:
        a_quad = a_quad + np.asarray(f_ext_quad) / params.mass

    q_dot, omega_dot = _rotational_rhs(x, u, params)
    out = np.empty_like(x)
    out[..., LOAD_POS] = x[..., LOAD_VEL]
    out[..., LOAD_VEL] = a_load
    out[..., QUAD_POS] = x[..., QUAD_VEL]
    out[..., QUAD_VEL] = a_quad
    out[..., ATT] = q_dot
    out[..., RATES] = omega_dot
    return out


def mode_rhs(mode: HybridMode):
    return taut_rhs if mode == HybridMode.TAUT else slack_rhs


def taut_derivative(x, u, params: VehicleParams) -> np.ndarray:
    """Taut-mode state derivative; validates the cable-length precondition."""
    xv = _as_vector(x)
    sep = np.linalg.norm(xv[LOAD_POS] - xv[QUAD_POS])
    if abs(sep - params.cable_length) > 1e-3 * params.cable_length:
        raise InconsistentConstraint(
            f"separation {sep:.6f} m inconsistent with cable length {params.cable_length} m"
        )
    return taut_rhs(xv, _as_input(u), params)


def slack_derivative(x, u, params: VehicleParams) -> np.ndarray:
    return slack_rhs(_as_vector(x), _as_input(u), params)


def rk4_step(rhs, x: np.ndarray, u: np.ndarray, dt: float, params: VehicleParams, **kw) -> np.ndarray:
    k1 = rhs(x, u, params, **kw)
    k2 = rhs(x + 0.5 * dt * k1, u, params, **kw)
    k3 = rhs(x + 0.5 * dt * k2, u, params, **kw)
    k4 = rhs(x + dt * k3, u, params, **kw)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _merge_radial_velocity(x: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Replace both bodies' along-cable velocity by the momentum-weighted mean."""
    out = x.copy()
    d = out[LOAD_POS] - out[QUAD_POS]
    q = d / np.linalg.norm(d)
    v_load_r = out[LOAD_VEL] @ q
    v_quad_r = out[QUAD_VEL] @ q
    v_common = (params.mass * v_quad_r + params.load_mass * v_load_r) / params.total_mass
    out[LOAD_VEL] = out[LOAD_VEL] + (v_common - v_load_r) * q
    out[QUAD_VEL] = out[QUAD_VEL] + (v_common - v_quad_r) * q
    return out


def project_taut(x: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Project the payload onto the cable sphere and zero radial relative velocity."""
    out = x.copy()
    d = out[LOAD_POS] - out[QUAD_POS]
    out[LOAD_POS] = out[QUAD_POS] + params.cable_length * d / np.linalg.norm(d)
    return _merge_radial_velocity(out, params)


def step(x, u, mode: HybridMode, dt: float, params: VehicleParams,
         f_ext_load=None, f_ext_quad=None) -> SystemState:
    """Advance the plant one RK4 step under the given hybrid mode.

    Taut steps are followed by a constraint projection; the quaternion is
    renormalized in both modes.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    xv = _as_vector(x)
    uv = _as_input(u)
    rhs = mode_rhs(mode)
    xn = rk4_step(rhs, xv, uv, dt, params, f_ext_load=f_ext_load, f_ext_quad=f_ext_quad)
    if not np.isfinite(xn).all():
        raise NonFinite("integration produced NaN or Inf")
    xn[ATT] = quat_normalize(xn[ATT])
    if mode == HybridMode.TAUT:
        xn = project_taut(xn, params)
    return SystemState.from_vector(xn)


def impact_map(x, params: VehicleParams) -> SystemState:
    """Perfectly inelastic along-cable impulse at a slack-to-taut event.

    Conserves linear momentum, never increases kinetic energy, and leaves
    tangential velocity components untouched.
    """
    xv = _as_vector(x)
    d = xv[LOAD_POS] - xv[QUAD_POS]
    sep = np.linalg.norm(d)
    if sep < params.cable_length * (1.0 - 1e-9):
        raise NotExtended(f"cable not at full extension: {sep:.6f} < {params.cable_length}")
    out = project_taut(xv, params)
    return SystemState.from_vector(out)
