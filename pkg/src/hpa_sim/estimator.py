"""Cable-direction EKF and the slack/taut mode detector.

The filter state is X = [q, q_dot]: the unit cable direction (robot to
payload) and its rate. The process model is the spherical pendulum driven by
the commanded thrust vector; measurements are the payload position and
velocity seen in the body frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import HybridMode
from .params import VehicleParams
from .quat import quat_to_rot

log = logging.getLogger(__name__)

_EIG_FLOOR = 1e-12


def _default_process_cov() -> np.ndarray:
    # rate block inflated to cover the Euler discretization error of predict
    return np.diag([1e-4] * 3 + [1e-2] * 3)


def _default_measurement_cov() -> np.ndarray:
    # 1 cm position, 3 cm/s velocity noise of the synthetic vision pipeline
    return np.diag([1e-4] * 3 + [1e-3] * 3)


@dataclass
class NoiseConfig:
    process_cov: np.ndarray = field(default_factory=_default_process_cov)
    measurement_cov: np.ndarray = field(default_factory=_default_measurement_cov)

    def __post_init__(self) -> None:
        self.process_cov = np.asarray(self.process_cov, dtype=float)
        self.measurement_cov = np.asarray(self.measurement_cov, dtype=float)
        for m in (self.process_cov, self.measurement_cov):
            if np.any(np.linalg.eigvalsh(0.5 * (m + m.T)) < -1e-12):
                raise ValueError("noise covariances must be PSD")


@dataclass
class CableBelief:
    mean: np.ndarray  # [direction (3), rate (3)]
    cov: np.ndarray   # 6x6

    @property
    def direction(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def rate(self) -> np.ndarray:
        return self.mean[3:]


@dataclass
class CableMeasurement:
    """Payload position and velocity in the body frame."""

    pos_body: np.ndarray
    vel_body: np.ndarray

    def __post_init__(self) -> None:
        self.pos_body = np.asarray(self.pos_body, dtype=float)
        self.vel_body = np.asarray(self.vel_body, dtype=float)
        if not (np.isfinite(self.pos_body).all() and np.isfinite(self.vel_body).all()):
            raise ValueError("measurement must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.pos_body, self.vel_body])


@dataclass
class ModeDetectorState:
    # filter_alpha 0.6 keeps the detection lag within two sample periods of
    # a true transition regardless of sampling phase
    epsilon: float = 0.05
    filtered_length: float = 0.5
    filter_alpha: float = 0.6
    current_mode: HybridMode = HybridMode.TAUT

    def __post_init__(self) -> None:
        if not (0.0 < self.filter_alpha <= 1.0):
            raise ValueError("filter_alpha must be in (0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _psd_repair(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    if w[0] < _EIG_FLOOR:
        w = np.clip(w, _EIG_FLOOR, None)
        P = (V * w) @ V.T
        P = 0.5 * (P + P.T)
    return P


def process_rhs(mean: np.ndarray, thrust_world: np.ndarray, params: VehicleParams) -> np.ndarray:
    q = mean[:3]
    q_rate = mean[3:]
    acc = np.cross(q, np.cross(q, thrust_world)) / (params.mass * params.cable_length)
    acc = acc - (q_rate @ q_rate) * q
    return np.concatenate([q_rate, acc])


def process_jacobian(mean: np.ndarray, thrust_world: np.ndarray,
                     params: VehicleParams) -> np.ndarray:
    """Analytic Jacobian of process_rhs with respect to [q, q_dot]."""
    q = mean[:3]
    q_rate = mean[3:]
    u = thrust_world
    ml = params.mass * params.cable_length
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    # d/dq [q (q.u) - u (q.q)] = (q.u) I + q u^T - 2 u q^T
    A[3:, :3] = ((q @ u) * np.eye(3) + np.outer(q, u) - 2.0 * np.outer(u, q)) / ml
    A[3:, :3] -= (q_rate @ q_rate) * np.eye(3)
    A[3:, 3:] = -2.0 * np.outer(q, q_rate)
    return A


def measurement_model(mean: np.ndarray, attitude_quat: np.ndarray, body_rates: np.ndarray,
                      params: VehicleParams) -> np.ndarray:
    R = quat_to_rot(attitude_quat)
    l = params.cable_length
    q = mean[:3]
    q_rate = mean[3:]
    pos_body = R.T @ (l * q)
    vel_body = l * (R.T @ q_rate - np.cross(body_rates, R.T @ q))
    return np.concatenate([pos_body, vel_body])


def measurement_jacobian(attitude_quat: np.ndarray, body_rates: np.ndarray,
                         params: VehicleParams) -> np.ndarray:
    R = quat_to_rot(attitude_quat)
    l = params.cable_length
    w = body_rates
    skew = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    H = np.zeros((6, 6))
    H[:3, :3] = l * R.T
    H[3:, :3] = -l * skew @ R.T
    H[3:, 3:] = l * R.T
    return H


def ekf_predict(belief: CableBelief, thrust: float, attitude_quat: np.ndarray, dt: float,
                params: VehicleParams, noise: NoiseConfig) -> CableBelief:
    """Euler-propagate the belief through the pendulum process model."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    R = quat_to_rot(attitude_quat)
    u = thrust * R[:, 2]
    F = np.eye(6) + dt * process_jacobian(belief.mean, u, params)
    mean = belief.mean + dt * process_rhs(belief.mean, u, params)
    mean = _renormalize(mean)
    cov = _psd_repair(F @ belief.cov @ F.T + noise.process_cov * dt)
    return CableBelief(mean, cov)


def ekf_update(belief: CableBelief, z: CableMeasurement, attitude_quat: np.ndarray,
               body_rates: np.ndarray, params: VehicleParams,
               noise: NoiseConfig) -> CableBelief:
    """Standard EKF innovation update with Joseph-form covariance.

    Measurements beyond 1.5 cable lengths are physically impossible and are
    dropped as outliers.
    """
    if np.linalg.norm(z.pos_body) > 1.5 * params.cable_length:
        log.warning("measurement beyond 1.5 cable lengths, skipping update")
        return belief
    H = measurement_jacobian(attitude_quat, body_rates, params)
    S = H @ belief.cov @ H.T + noise.measurement_cov
    try:
        K = np.linalg.solve(S, H @ belief.cov).T
    except np.linalg.LinAlgError:
        log.warning("singular innovation covariance, skipping update")
        return belief
    innovation = z.as_vector() - measurement_model(belief.mean, attitude_quat, body_rates, params)
    mean = _renormalize(belief.mean + K @ innovation)
    I_KH = np.eye(6) - K @ H
    cov = I_KH @ belief.cov @ I_KH.T + K @ noise.measurement_cov @ K.T
    return CableBelief(mean, _psd_repair(cov))


def _renormalize(mean: np.ndarray) -> np.ndarray:
    out = mean.copy()
    out[:3] = out[:3] / np.linalg.norm(out[:3])
    return out


def belief_from_measurement(z: CableMeasurement, attitude_quat: np.ndarray,
                            body_rates: np.ndarray, params: VehicleParams,
                            cov_scale: float = 0.1) -> CableBelief:
    """Initialize the belief by inverting the measurement model."""
    R = quat_to_rot(attitude_quat)
    l = params.cable_length
    q = R @ z.pos_body
    q = q / np.linalg.norm(q)
    q_rate = R @ (z.vel_body / l + np.cross(body_rates, R.T @ q))
    return CableBelief(np.concatenate([q, q_rate]), np.eye(6) * cov_scale)


def load_state_from_belief(belief: CableBelief, quad_pos: np.ndarray, quad_vel: np.ndarray,
                           params: VehicleParams):
    """Payload position/velocity implied by the cable belief (taut geometry)."""
    l = params.cable_length
    return quad_pos + l * belief.direction, quad_vel + l * belief.rate


def detect_mode(det: ModeDetectorState, load_pos: np.ndarray, quad_pos: np.ndarray,
                params: VehicleParams) -> tuple[ModeDetectorState, HybridMode]:
    """Low-pass the measured cable length and threshold it at l - epsilon."""
    load_pos = np.asarray(load_pos, dtype=float)
    quad_pos = np.asarray(quad_pos, dtype=float)
    if not (np.isfinite(load_pos).all() and np.isfinite(quad_pos).all()):
        raise ValueError("detector positions must be finite")
    sep = float(np.linalg.norm(load_pos - quad_pos))
    filtered = det.filter_alpha * sep + (1.0 - det.filter_alpha) * det.filtered_length
    mode = HybridMode.SLACK if filtered < params.cable_length - det.epsilon else HybridMode.TAUT
    return replace(det, filtered_length=filtered, current_mode=mode), mode
