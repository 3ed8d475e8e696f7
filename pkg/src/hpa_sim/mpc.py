"""Hybrid perception-aware MPC.

Direct multiple shooting over an N-step horizon with a Gauss-Newton Hessian,
solved as a condensed box-constrained QP on the motor-speed corrections. One
SQP iteration per call gives the real-time iteration scheme; raising
max_sqp_iters turns the same code into a converged SQP solver.

The stage cost gates payload-tracking and quadrotor-tracking quadratics on
the hybrid mode and always adds the camera-visibility term on the payload's
camera-frame x, y offset.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    ATT,
    INPUT_DIM,
    RATES,
    STATE_DIM,
    HybridMode,
    SystemState,
    _as_input,
    _as_vector,
    mode_rhs,
    rk4_step,
)
from .errors import NonFinite, QpInfeasible
from .params import VehicleParams
from .qp import solve_box_qp
from .quat import drot_dq, left_matrix, quat_conjugate, quat_from_yaw, quat_normalize, quat_to_rot
from .trajectories import ReferencePoint

log = logging.getLogger(__name__)

_SQRT3 = np.sqrt(3.0)
_IRK_A = np.array([[0.25, 0.25 - _SQRT3 / 6.0], [0.25 + _SQRT3 / 6.0, 0.25]])
_IRK_B = np.array([0.5, 0.5])
_FD_H = 1e-6

_RES_DIM = 24  # 18 state + 4 input + 2 camera residuals


def _default_q_load() -> np.ndarray:
    # load pos/vel dominate; quad, attitude and rate entries keep the
    # remaining directions observable
    return np.array([200.0] * 3 + [20.0] * 3 + [1.0] * 6 + [1.0] * 3 + [1.0] * 3)


def _default_q_quad() -> np.ndarray:
    # payload entries zero: the payload is uncontrollable while slack
    return np.array([0.0] * 6 + [200.0] * 3 + [20.0] * 3 + [1.0] * 3 + [1.0] * 3)


@dataclass
class MpcConfig:
    horizon_steps: int = 10
    horizon_time: float = 1.0
    q_load: np.ndarray = field(default_factory=_default_q_load)
    r_load: np.ndarray = field(default_factory=lambda: np.full(4, 0.1))
    q_quad: np.ndarray = field(default_factory=_default_q_quad)
    r_quad: np.ndarray = field(default_factory=lambda: np.full(4, 0.1))
    q_cam: np.ndarray = field(default_factory=lambda: np.full(2, 50.0))
    motor_min: float | None = None
    motor_max: float | None = None
    kkt_tol: float = 1e-6
    max_sqp_iters: int = 1
    newton_tol: float = 1e-10
    newton_max_iter: int = 10
    step_limit_frac: float = 0.25  # per-iteration input-step trust region
    defect_reset: float = 0.05     # shooting-gap size triggering a re-rollout

    def __post_init__(self) -> None:
        if self.horizon_steps < 2:
            raise ValueError("horizon_steps must be >= 2")
        if self.horizon_time <= 0:
            raise ValueError("horizon_time must be positive")
        for name in ("q_load", "r_load", "q_quad", "r_quad", "q_cam"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative")
            setattr(self, name, arr)

    @property
    def stage_dt(self) -> float:
        return self.horizon_time / self.horizon_steps

    def bounds(self, params: VehicleParams) -> tuple[float, float]:
        lo = params.motor_min if self.motor_min is None else self.motor_min
        hi = params.motor_max if self.motor_max is None else self.motor_max
        return float(lo), float(hi)


@dataclass
class MpcProblem:
    initial_state: np.ndarray
    mode_schedule: list[HybridMode]
    state_refs: np.ndarray  # (N, 19)
    input_refs: np.ndarray  # (N, 4)
    config: MpcConfig
    params: VehicleParams

    def __post_init__(self) -> None:
        self.initial_state = _as_vector(self.initial_state)
        self.state_refs = np.asarray(self.state_refs, dtype=float)
        self.input_refs = np.asarray(self.input_refs, dtype=float)
        n = self.config.horizon_steps
        if len(self.mode_schedule) != n:
            raise ValueError("mode_schedule length must equal horizon_steps")
        if len(set(self.mode_schedule)) > 1:
            raise ValueError("mode_schedule must be constant over the horizon")
        if self.state_refs.shape != (n, STATE_DIM) or self.input_refs.shape != (n, INPUT_DIM):
            raise ValueError("reference arrays must match the horizon length")

    @property
    def mode(self) -> HybridMode:
        return self.mode_schedule[0]


@dataclass
class _SolverCache:
    """Per-stage integrator byproducts reused to warm start the next solve."""

    K: np.ndarray       # (N, 2, state) converged stage values
    jx: np.ndarray      # (N, 2, state, state) stage-point Jacobians
    dK_dx: np.ndarray   # (N, 2*state, state)
    dK_du: np.ndarray   # (N, 2*state, input)
    x: np.ndarray       # (N, state) linearization states
    u: np.ndarray       # (N, input) linearization inputs


@dataclass
class RateThrustCommand:
    thrust: float
    body_rates: np.ndarray


@dataclass
class MpcSolution:
    states: np.ndarray  # (N+1, 19)
    inputs: np.ndarray  # (N, 4)
    command: RateThrustCommand
    kkt_residual: float
    solve_time: float
    cost: float
    sqp_iters: int = 1
    newton_fallbacks: int = 0
    qp_failed: bool = False
    reused_previous: bool = False
    cache: "_SolverCache | None" = None
    mode: HybridMode | None = None


# ----------------------------------------------------------------- integrator


def _base_jacobian(rhs, x: np.ndarray, u: np.ndarray, params) -> np.ndarray:
    """Central-difference state Jacobian at a single point (one batched call)."""
    n = STATE_DIM
    xp = np.repeat(x[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    xp[2 * idx, idx] += _FD_H
    xp[2 * idx + 1, idx] -= _FD_H
    f = rhs(xp, np.broadcast_to(u, (2 * n, INPUT_DIM)), params).reshape(n, 2, n)
    return ((f[:, 0, :] - f[:, 1, :]) / (2 * _FD_H)).T


def _stage_jacobians_xu(rhs, points: np.ndarray, u: np.ndarray, params):
    """State and input Jacobians at both IRK stage points in one batched call."""
    n, m = STATE_DIM, INPUT_DIM
    xp = np.repeat(points[:, None, :], 2 * n, axis=1)
    idx = np.arange(n)
    xp[:, 2 * idx, idx] += _FD_H
    xp[:, 2 * idx + 1, idx] -= _FD_H
    batch_x = xp.reshape(-1, n)
    up = np.repeat(u[None, None, :], 2, axis=0).repeat(2 * m, axis=1)
    jdx = np.arange(m)
    up[:, 2 * jdx, jdx] += _FD_H
    up[:, 2 * jdx + 1, jdx] -= _FD_H
    batch_all_x = np.concatenate([batch_x, np.repeat(points, 2 * m, axis=0)])
    batch_all_u = np.concatenate([np.broadcast_to(u, (batch_x.shape[0], m)),
                                  up.reshape(-1, m)])
    f = rhs(batch_all_x, batch_all_u, params)
    fx = f[: 2 * 2 * n].reshape(2, n, 2, n)
    jx = np.transpose((fx[:, :, 0, :] - fx[:, :, 1, :]) / (2 * _FD_H), (0, 2, 1))
    fu = f[2 * 2 * n:].reshape(2, m, 2, n)
    ju = np.transpose((fu[:, :, 0, :] - fu[:, :, 1, :]) / (2 * _FD_H), (0, 2, 1))
    return jx, ju


def _newton_too_slow(res: float, prev_res: float, remaining: int, tol: float) -> bool:
    """True if the observed linear contraction cannot reach tol in time."""
    if res >= prev_res:
        return True
    rate = res / prev_res
    return res * rate ** max(remaining - 1, 1) > tol


def _irk_newton_matrix(j1: np.ndarray, j2: np.ndarray, dt: float) -> np.ndarray:
    n = STATE_DIM
    M = np.eye(2 * n)
    M[:n, :n] -= dt * _IRK_A[0, 0] * j1
    M[:n, n:] -= dt * _IRK_A[0, 1] * j1
    M[n:, :n] -= dt * _IRK_A[1, 0] * j2
    M[n:, n:] -= dt * _IRK_A[1, 1] * j2
    return M


def _irk_step(rhs, x: np.ndarray, u: np.ndarray, dt: float, params,
              tol: float, max_iter: int, want_sensitivity: bool,
              K0=None, jx0=None):
    """One 2-stage Gauss-Legendre step.

    Returns (x_next, A, B, converged, K, jx). Stage values solve a simplified
    Newton iteration; the Newton matrix reuses cached stage-point Jacobians
    (jx0) when available, else a base-point Jacobian. Sensitivities come from
    the implicit function theorem with fresh Jacobians at the converged stage
    points, which are also returned for reuse by the next warm-started call.
    """
    if K0 is None:
        f0 = rhs(x, u, params)
        K = np.stack([f0, f0])
    else:
        K = K0.copy()
    if jx0 is None:
        j_base = _base_jacobian(rhs, x, u, params)
        M = _irk_newton_matrix(j_base, j_base, dt)
    else:
        M = _irk_newton_matrix(jx0[0], jx0[1], dt)
    converged = False
    prev_res = np.inf
    u2 = np.broadcast_to(u, (2, INPUT_DIM))
    for it in range(max_iter):
        stage_x = x + dt * (_IRK_A @ K)
        R = K - rhs(stage_x, u2, params)
        res = np.abs(R).max()
        if res < tol:
            converged = True
            break
        if it >= 2 and _newton_too_slow(res, prev_res, max_iter - it, tol):
            # contraction rate will not reach tol in the remaining budget:
            # refresh the Jacobians at the current stage points
            jx, _ = _stage_jacobians_xu(rhs, stage_x, u, params)
            M = _irk_newton_matrix(jx[0], jx[1], dt)
        prev_res = res
        dK = np.linalg.solve(M, -R.reshape(-1)).reshape(2, STATE_DIM)
        K = K + dK

    x_next = x + dt * (_IRK_B @ K)
    if not want_sensitivity:
        return x_next, None, None, converged, K, None

    stage_x = x + dt * (_IRK_A @ K)
    jx, ju = _stage_jacobians_xu(rhs, stage_x, u, params)
    M = _irk_newton_matrix(jx[0], jx[1], dt)
    dK_dx = np.linalg.solve(M, np.vstack(jx))
    dK_du = np.linalg.solve(M, np.vstack(ju))
    n = STATE_DIM
    A = np.eye(n) + dt * (_IRK_B[0] * dK_dx[:n] + _IRK_B[1] * dK_dx[n:])
    B = dt * (_IRK_B[0] * dK_du[:n] + _IRK_B[1] * dK_du[n:])
    return x_next, A, B, converged, K, (jx, dK_dx, dK_du)


def discrete_dynamics(x, u, mode: HybridMode, dt: float, params: VehicleParams,
                      newton_tol: float = 1e-10, newton_max_iter: int = 10) -> SystemState:
    """Implicit Runge-Kutta prediction step used inside the MPC horizon.

    Falls back to a single explicit RK4 step if the stage equations do not
    converge (logged, never raised, mirroring the real-time controller).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    xv = _as_vector(x)
    uv = _as_input(u)
    rhs = mode_rhs(mode)
    x_next, _, _, converged, _, _ = _irk_step(rhs, xv, uv, dt, params,
                                              newton_tol, newton_max_iter, False)
    if not converged:
        log.warning("implicit RK Newton diverged, falling back to RK4")
        x_next = rk4_step(rhs, xv, uv, dt, params)
    if not np.isfinite(x_next).all():
        raise NonFinite("discrete dynamics produced NaN/Inf")
    x_next = x_next.copy()
    x_next[ATT] = quat_normalize(x_next[ATT])
    return SystemState.from_vector(x_next)


# ---------------------------------------------------------------------- costs


def payload_in_camera(x, params: VehicleParams) -> np.ndarray:
    """Payload position expressed in the camera frame."""
    xv = _as_vector(x)
    return _camera_position(xv, params)


def _camera_position(xv: np.ndarray, params: VehicleParams) -> np.ndarray:
    R = quat_to_rot(xv[ATT])
    R_wc = R @ params.cam_rotation
    rel = xv[:3] - xv[6:9] - R @ params.cam_translation
    return R_wc.T @ rel


def _camera_residual(xv: np.ndarray, params: VehicleParams,
                     payload_anchor: np.ndarray | None = None) -> np.ndarray:
    """Camera x, y offset of the payload, clamped onto the cable sphere.

    payload_anchor, when given, replaces the state's payload position. The
    solver anchors it to the measured payload during slack phases: the
    slack model predicts free fall, but the camera objective is about where
    the payload actually is, and the cable bounds that to one cable length.
    An unanchored free-fall prediction both dilutes the visibility gradient
    (the bearing shrinks on its own as the predicted payload drops) and
    blows up the residual's attitude stiffness with distance.
    """
    R = quat_to_rot(xv[ATT])
    payload = xv[:3] if payload_anchor is None else payload_anchor
    rel = payload - xv[6:9]
    dist = np.linalg.norm(rel)
    if dist > params.cable_length:
        rel = rel * (params.cable_length / dist)
    cam = (R @ params.cam_rotation).T @ (rel - R @ params.cam_translation)
    return cam[:2]


def _stage_weights(mode: HybridMode, config: MpcConfig) -> np.ndarray:
    if mode == HybridMode.TAUT:
        return np.concatenate([config.q_load, config.r_load, config.q_cam])
    return np.concatenate([config.q_quad, config.r_quad, config.q_cam])


def _stage_residual(xv: np.ndarray, uv: np.ndarray, x_ref: np.ndarray,
                    u_ref: np.ndarray, params: VehicleParams,
                    payload_anchor: np.ndarray | None = None) -> np.ndarray:
    rho = np.empty(_RES_DIM)
    rho[0:12] = x_ref[0:12] - xv[0:12]
    att_err = quat_normalize(x_ref[ATT])
    rho[12:15] = (left_matrix(quat_conjugate(att_err)) @ xv[ATT])[1:]
    rho[15:18] = x_ref[RATES] - xv[RATES]
    rho[18:22] = u_ref - uv
    rho[22:24] = _camera_residual(xv, params, payload_anchor)
    return rho


def _stage_jacobians(xv: np.ndarray, x_ref: np.ndarray, params: VehicleParams,
                     payload_anchor: np.ndarray | None = None):
    """Analytic residual Jacobians."""
    jx = np.zeros((_RES_DIM, STATE_DIM))
    jx[0:12, 0:12] = -np.eye(12)
    jx[12:15, 12:16] = left_matrix(quat_conjugate(quat_normalize(x_ref[ATT])))[1:, :]
    jx[15:18, 16:19] = -np.eye(3)
    q_att = xv[ATT]
    R = quat_to_rot(q_att)
    R_wc = R @ params.cam_rotation
    payload = xv[0:3] if payload_anchor is None else payload_anchor
    rel = payload - xv[6:9]
    dist = np.linalg.norm(rel)
    l = params.cable_length
    if dist > l:
        scale_jac = (l / dist) * (np.eye(3) - np.outer(rel, rel) / dist**2)
        rel = rel * (l / dist)
    else:
        scale_jac = np.eye(3)
    if payload_anchor is None:
        jx[22:24, 0:3] = R_wc.T[:2, :] @ scale_jac
    jx[22:24, 6:9] = -R_wc.T[:2, :] @ scale_jac
    dR = drot_dq(q_att)
    rel_cam = rel - R @ params.cam_translation
    for i in range(4):
        dcam = (dR[i] @ params.cam_rotation).T @ rel_cam - R_wc.T @ (dR[i] @ params.cam_translation)
        jx[22:24, 12 + i] = dcam[:2]
    ju = np.zeros((_RES_DIM, INPUT_DIM))
    ju[18:22] = -np.eye(4)
    return jx, ju


def stage_cost(x, u, x_ref, u_ref, mode: HybridMode, config: MpcConfig,
               params: VehicleParams) -> float:
    """Mode-gated tracking quadratics plus the camera-visibility term."""
    rho = _stage_residual(_as_vector(x), _as_input(u), _as_vector(x_ref),
                          _as_input(u_ref), params)
    w = _stage_weights(mode, config)
    return float(rho @ (w * rho))


# --------------------------------------------------------------------- solver


def reference_state(ref: ReferencePoint) -> np.ndarray:
    """Stacked state vector for a reference point: level attitude at the
    reference yaw, zero body rates."""
    x = np.zeros(STATE_DIM)
    x[0:3] = ref.load_pos
    x[3:6] = ref.load_vel
    x[6:9] = ref.quad_pos
    x[9:12] = ref.quad_vel
    x[ATT] = quat_from_yaw(ref.yaw)
    return x


def hover_inputs(mode: HybridMode, params: VehicleParams) -> np.ndarray:
    mass = params.total_mass if mode == HybridMode.TAUT else params.mass
    return np.full(INPUT_DIM, params.hover_motor_speed(mass))


def _rollout(problem: MpcProblem, U: np.ndarray):
    cfg = problem.config
    n = cfg.horizon_steps
    X = np.empty((n + 1, STATE_DIM))
    X[0] = problem.initial_state
    fallbacks = 0
    rhs = mode_rhs(problem.mode)
    for k in range(n):
        x_next, _, _, ok, _, _ = _irk_step(rhs, X[k], U[k], cfg.stage_dt, problem.params,
                                           cfg.newton_tol, cfg.newton_max_iter, False)
        if not ok:
            x_next = rk4_step(rhs, X[k], U[k], cfg.stage_dt, problem.params)
            fallbacks += 1
        x_next[ATT] = quat_normalize(x_next[ATT])
        X[k + 1] = x_next
    return X, fallbacks


def _batched_newton_matrices(jx: np.ndarray, dt: float) -> np.ndarray:
    """Newton matrices for every stage at once; jx has shape (n, 2, s, s)."""
    n = jx.shape[0]
    s = STATE_DIM
    M = np.tile(np.eye(2 * s), (n, 1, 1))
    M[:, :s, :s] -= dt * _IRK_A[0, 0] * jx[:, 0]
    M[:, :s, s:] -= dt * _IRK_A[0, 1] * jx[:, 0]
    M[:, s:, :s] -= dt * _IRK_A[1, 0] * jx[:, 1]
    M[:, s:, s:] -= dt * _IRK_A[1, 1] * jx[:, 1]
    return M


def _batched_stage_jacobians(rhs, points: np.ndarray, U: np.ndarray, params):
    """State/input Jacobians at all 2n stage points with one rhs call.

    points: (n, 2, s); U: (n, m). Returns jx (n, 2, s, s), ju (n, 2, s, m).
    """
    n = points.shape[0]
    s, m = STATE_DIM, INPUT_DIM
    flat = points.reshape(n * 2, s)
    xp = np.repeat(flat[:, None, :], 2 * s, axis=1)
    idx = np.arange(s)
    xp[:, 2 * idx, idx] += _FD_H
    xp[:, 2 * idx + 1, idx] -= _FD_H
    u_for_x = np.repeat(U, 2 * 2 * s, axis=0)
    up = np.repeat(U[:, None, :], 2 * 2 * m, axis=1).astype(float)
    jdx = np.arange(m)
    up[:, 2 * jdx, jdx] += _FD_H
    up[:, 2 * jdx + 1, jdx] -= _FD_H
    up[:, 2 * m + 2 * jdx, jdx] += _FD_H
    up[:, 2 * m + 2 * jdx + 1, jdx] -= _FD_H
    x_for_u = np.repeat(points, 2 * m, axis=1).reshape(n * 2 * 2 * m, s)
    batch_x = np.concatenate([xp.reshape(-1, s), x_for_u])
    batch_u = np.concatenate([u_for_x, up.reshape(-1, m)])
    f = rhs(batch_x, batch_u, params)
    fx = f[: n * 2 * 2 * s].reshape(n, 2, s, 2, s)
    jx = np.moveaxis((fx[:, :, :, 0, :] - fx[:, :, :, 1, :]) / (2 * _FD_H), 2, 3)
    fu = f[n * 2 * 2 * s:].reshape(n, 2, m, 2, s)
    ju = np.moveaxis((fu[:, :, :, 0, :] - fu[:, :, :, 1, :]) / (2 * _FD_H), 2, 3)
    return jx, ju


def _linearize(problem: MpcProblem, X: np.ndarray, U: np.ndarray,
               cache: _SolverCache | None = None):
    """Integrate all stages with sensitivities and quadratize the cost.

    The implicit-RK stage equations of the whole horizon are iterated in
    lockstep so every Newton sweep is a single batched rhs evaluation.
    """
    cfg = problem.config
    n = cfg.horizon_steps
    dt = cfg.stage_dt
    s = STATE_DIM
    rhs = mode_rhs(problem.mode)
    params = problem.params
    Xs = X[:n]

    if cache is not None:
        # first-order extrapolation of the stage values to the new iterate
        dx = Xs - cache.x
        du = U - cache.u
        K = cache.K.reshape(n, 2 * s) + np.einsum("nij,nj->ni", cache.dK_dx, dx) \
            + np.einsum("nij,nj->ni", cache.dK_du, du)
        K = K.reshape(n, 2, s)
        M = _batched_newton_matrices(cache.jx, dt)
    else:
        f0 = rhs(Xs, U, params)
        K = np.repeat(f0[:, None, :], 2, axis=1)
        jx0, _ = _batched_stage_jacobians(rhs, np.repeat(Xs[:, None, :], 2, axis=1), U, params)
        M = _batched_newton_matrices(jx0, dt)

    u2 = np.repeat(U, 2, axis=0)
    prev_res = np.inf
    converged = False
    for it in range(cfg.newton_max_iter):
        stage_x = Xs[:, None, :] + dt * np.einsum("ab,nbj->naj", _IRK_A, K)
        F = rhs(stage_x.reshape(-1, s), u2, params).reshape(n, 2, s)
        R = K - F
        res = float(np.abs(R).max())
        if res < cfg.newton_tol:
            converged = True
            break
        if it >= 2 and _newton_too_slow(res, prev_res, cfg.newton_max_iter - it, cfg.newton_tol):
            # refresh all stage Jacobians in one batched call
            jx_new, _ = _batched_stage_jacobians(rhs, stage_x, U, params)
            M = _batched_newton_matrices(jx_new, dt)
        prev_res = res
        dK = np.linalg.solve(M, -R.reshape(n, 2 * s, 1))
        K = K + dK.reshape(n, 2, s)
    fallbacks = 0
    if not converged:
        # replace unconverged stages by an explicit RK4 prediction
        stage_x = Xs[:, None, :] + dt * np.einsum("ab,nbj->naj", _IRK_A, K)
        R = K - rhs(stage_x.reshape(-1, s), u2, params).reshape(n, 2, s)
        bad = np.abs(R).max(axis=(1, 2)) >= cfg.newton_tol
        fallbacks = int(bad.sum())

    x_next = Xs + dt * np.einsum("b,nbj->nj", _IRK_B, K)
    if fallbacks:
        for k in np.where(bad)[0]:
            x_next[k] = rk4_step(rhs, Xs[k], U[k], dt, params)
    defects = x_next - X[1:]

    # fresh Jacobians at the converged stage points give the sensitivities
    stage_x = Xs[:, None, :] + dt * np.einsum("ab,nbj->naj", _IRK_A, K)
    jx, ju = _batched_stage_jacobians(rhs, stage_x, U, params)
    M = _batched_newton_matrices(jx, dt)
    dK_dx = np.linalg.solve(M, jx.reshape(n, 2 * s, s))
    dK_du = np.linalg.solve(M, ju.reshape(n, 2 * s, INPUT_DIM))
    A = np.eye(s) + dt * (_IRK_B[0] * dK_dx[:, :s] + _IRK_B[1] * dK_dx[:, s:])
    B = dt * (_IRK_B[0] * dK_du[:, :s] + _IRK_B[1] * dK_du[:, s:])
    new_cache = _SolverCache(K=K, jx=jx, dK_dx=dK_dx, dK_du=dK_du,
                             x=Xs.copy(), u=U.copy())

    Qbar = np.empty((n, s, s))
    qlin = np.empty((n, s))
    Rbar = np.empty((n, INPUT_DIM, INPUT_DIM))
    rlin = np.empty((n, INPUT_DIM))
    cost = 0.0
    w = _stage_weights(problem.mode, cfg)
    anchor = problem.initial_state[:3] if problem.mode == HybridMode.SLACK else None
    for k in range(n):
        rho = _stage_residual(X[k], U[k], problem.state_refs[k], problem.input_refs[k], params,
                              payload_anchor=anchor)
        jxc, juc = _stage_jacobians(X[k], problem.state_refs[k], params,
                                    payload_anchor=anchor)
        Qbar[k] = jxc.T @ (w[:, None] * jxc)
        qlin[k] = jxc.T @ (w * rho)
        Rbar[k] = juc.T @ (w[:, None] * juc)
        rlin[k] = juc.T @ (w * rho)
        cost += float(rho @ (w * rho))
    return A, B, defects, Qbar, qlin, Rbar, rlin, cost, fallbacks, new_cache


def _condense(cfg: MpcConfig, A, B, defects, Qbar, qlin, Rbar, rlin):
    """Eliminate the state deviations; returns (H, g, E_list, c_list) with
    H, g carrying the exact gradient convention grad = d(total cost)/d(dU)."""
    n = cfg.horizon_steps
    nu = n * INPUT_DIM
    H = np.zeros((nu, nu))
    g = np.zeros(nu)
    E = np.zeros((STATE_DIM, nu))
    c = np.zeros(STATE_DIM)
    E_list = [E.copy()]
    c_list = [c.copy()]
    for k in range(n):
        if k > 0:
            H += 2.0 * E.T @ Qbar[k] @ E
            g += 2.0 * E.T @ (Qbar[k] @ c + qlin[k])
        sl = slice(k * INPUT_DIM, (k + 1) * INPUT_DIM)
        H[sl, sl] += 2.0 * Rbar[k]
        g[sl] += 2.0 * rlin[k]
        E = A[k] @ E
        E[:, sl] += B[k]
        c = A[k] @ c + defects[k]
        E_list.append(E.copy())
        c_list.append(c.copy())
    return H, g, E_list, c_list


def _projected_gradient_norm(g: np.ndarray, U_flat: np.ndarray, lo: float, hi: float) -> float:
    pg = g.copy()
    at_lo = U_flat <= lo + 1e-12
    at_hi = U_flat >= hi - 1e-12
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi] = np.maximum(g[at_hi], 0.0)
    return float(np.abs(pg).max())


def solve(problem: MpcProblem, warm_start: MpcSolution | None = None) -> MpcSolution:
    """Run one (RTI) or more Gauss-Newton SQP iterations on the horizon.

    Cold starts use the mode's ideal hover command and a dynamics rollout;
    warm starts reuse the previous solution's trajectories unchanged.
    """
    t_start = time.perf_counter()
    cfg = problem.config
    n = cfg.horizon_steps
    lo, hi = cfg.bounds(problem.params)
    fallbacks = 0
    cache = None
    if warm_start is not None and warm_start.mode == problem.mode:
        X = warm_start.states.copy()
        U = np.clip(warm_start.inputs.copy(), lo, hi)
        X[0] = problem.initial_state
        cache = warm_start.cache
    elif warm_start is not None:
        # hybrid mode flipped: keep the input plan, rebuild the states under
        # the new vector field (the old prediction is inconsistent with it)
        U = np.clip(warm_start.inputs.copy(), lo, hi)
        X, fallbacks = _rollout(problem, U)
    else:
        U = np.tile(np.clip(hover_inputs(problem.mode, problem.params), lo, hi), (n, 1))
        X, fallbacks = _rollout(problem, U)

    kkt = np.inf
    qp_failed = False
    iters = 0
    for _ in range(max(1, cfg.max_sqp_iters)):
        A, B, defects, Qbar, qlin, Rbar, rlin, cost, fb, cache = _linearize(
            problem, X, U, cache)
        fallbacks += fb
        if np.abs(defects).max() > cfg.defect_reset:
            # curvature outran the linear state update: restore feasibility
            # by rolling the states out from x0 under the current inputs
            X, fb2 = _rollout(problem, U)
            fallbacks += fb2
            cache = None
            A, B, defects, Qbar, qlin, Rbar, rlin, cost, fb, cache = _linearize(
                problem, X, U, cache)
            fallbacks += fb
        H, g, E_list, c_list = _condense(cfg, A, B, defects, Qbar, qlin, Rbar, rlin)
        kkt = max(_projected_gradient_norm(g, U.reshape(-1), lo, hi),
                  float(np.abs(defects).max()))
        if kkt <= cfg.kkt_tol:
            break
        try:
            dU = solve_box_qp(H, g, lo - U.reshape(-1), hi - U.reshape(-1))
        except (QpInfeasible, np.linalg.LinAlgError) as exc:
            log.warning("QP subproblem failed: %s", exc)
            qp_failed = True
            break
        iters += 1
        # trust region: full Gauss-Newton steps overshoot and cycle when the
        # camera residual is strongly nonlinear in the attitude
        cap = cfg.step_limit_frac * (hi - lo)
        dU = np.clip(dU, -cap, cap)
        U = np.clip(U + dU.reshape(n, INPUT_DIM), lo, hi)
        for k in range(1, n + 1):
            X[k] = X[k] + c_list[k] + E_list[k] @ dU
            X[k, ATT] = quat_normalize(X[k, ATT])
        if not (np.isfinite(U).all() and np.isfinite(X).all()):
            raise NonFinite("SQP iterate diverged")

    # Command pair at the second horizon knot: the planned body rates there,
    # and the collective thrust of the interval that realizes that knot.
    # Extracting the thrust one interval later instead postpones every
    # correction (the optimizer front-loads them into the first interval) and
    # rectifies estimate noise through the squared motor speeds; the closed
    # loop then settles almost half a meter off the hover set-point.
    f_cmd = problem.params.motor_constant * float(np.sum(U[0] ** 2))
    command = RateThrustCommand(f_cmd, X[1, RATES].copy())
    anchor = problem.initial_state[:3] if problem.mode == HybridMode.SLACK else None
    w_cost = _stage_weights(problem.mode, cfg)
    total_cost = 0.0
    for k in range(n):
        rho_k = _stage_residual(X[k], U[k], problem.state_refs[k], problem.input_refs[k],
                                problem.params, payload_anchor=anchor)
        total_cost += float(rho_k @ (w_cost * rho_k))
    return MpcSolution(
        states=X, inputs=U, command=command,
        kkt_residual=kkt, solve_time=time.perf_counter() - t_start,
        cost=float(total_cost), sqp_iters=max(iters, 1),
        newton_fallbacks=fallbacks, qp_failed=qp_failed, cache=cache,
        mode=problem.mode,
    )


def command_loop_step(estimate, mode: HybridMode, refs: list[ReferencePoint],
                      config: MpcConfig, params: VehicleParams,
                      prev: MpcSolution | None = None):
    """One 150 Hz control cycle: fill the constant mode schedule, solve, and
    take the second horizon stage as the command.

    On solver failure the previous command is re-issued and flagged.
    """
    n = config.horizon_steps
    if len(refs) != n:
        raise ValueError("need one reference per horizon stage")
    state_refs = np.stack([reference_state(r) for r in refs])
    input_refs = np.tile(hover_inputs(mode, params), (n, 1))
    problem = MpcProblem(
        initial_state=_as_vector(estimate), mode_schedule=[mode] * n,
        state_refs=state_refs, input_refs=input_refs, config=config, params=params,
    )
    try:
        solution = solve(problem, warm_start=prev)
    except (NonFinite, np.linalg.LinAlgError) as exc:
        if prev is None:
            raise
        log.warning("MPC solve failed (%s); re-issuing previous command", exc)
        solution = MpcSolution(
            states=prev.states, inputs=prev.inputs, command=prev.command,
            kkt_residual=np.inf, solve_time=0.0, cost=np.nan,
            sqp_iters=0, newton_fallbacks=0, qp_failed=True, reused_previous=True,
            mode=prev.mode,
        )
    return solution, solution.command
