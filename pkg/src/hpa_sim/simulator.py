"""Deterministic lockstep closed-loop simulation.

Plant steps at 1 kHz, the controller at 150 Hz, and the vision pipeline plus
mode detector at 30 Hz, all phase-aligned at t = 0 through exact integer
scheduling. Disturbances (impulse, constant force, hold-at-position) emulate
the scripted experiments; everything is reproducible bit-for-bit from the
scenario seed.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    ATT,
    E3,
    LOAD_POS,
    LOAD_VEL,
    QUAD_POS,
    QUAD_VEL,
    RATES,
    HybridMode,
    cable_tension,
    impact_map,
    motor_speeds_from_wrench,
    step,
)
from .errors import ControllerFailure, NonFinite
from .estimator import (
    CableBelief,
    CableMeasurement,
    ModeDetectorState,
    NoiseConfig,
    belief_from_measurement,
    detect_mode,
    ekf_predict,
    ekf_update,
    load_state_from_belief,
)
from .geometric import GeometricController, default_gains
from .mpc import MpcConfig, command_loop_step, payload_in_camera, reference_state
from .params import VehicleParams
from .quat import quat_to_rot
from .trajectories import (
    HoverTrajectory,
    LineTrajectory,
    LissajousParams,
    LissajousTrajectory,
    TrajectorySource,
    horizon_refs,
    reference_at,
)

DEFAULT_FOV_HALF_ANGLES = (np.deg2rad(45.0), np.deg2rad(35.0))


@dataclass
class DisturbanceEvent:
    """Scripted external action on one body.

    kind "impulse": instantaneous momentum change (vector in N*s) at t0.
    kind "force": constant force (N) over [t0, t1].
    kind "hold": kinematic override of the load along waypoint segments over
    [t0, t1], modelling a gripper; the commanded point is clamped so the
    cable stays slack relative to the current quad position.
    """

    kind: str
    target: str
    t0: float
    t1: float | None = None
    vector: np.ndarray | None = None
    waypoints: list | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("impulse", "force", "hold"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.target not in ("load", "quad"):
            raise ValueError(f"unknown disturbance target {self.target!r}")
        if self.vector is not None:
            self.vector = np.asarray(self.vector, dtype=float)
        if self.kind != "impulse" and self.t1 is None:
            raise ValueError(f"{self.kind} disturbance needs t1")
        if self.kind == "hold":
            if self.target != "load":
                raise ValueError("hold disturbances act on the load")
            if not self.waypoints:
                raise ValueError("hold disturbance needs waypoints")
            self.waypoints = [(float(t), np.asarray(p, dtype=float)) for t, p in self.waypoints]

    def hold_pose(self, t: float):
        """Position and velocity of the gripper path at time t."""
        pts = self.waypoints
        if t <= pts[0][0]:
            return pts[0][1].copy(), np.zeros(3)
        for (ta, pa), (tb, pb) in zip(pts, pts[1:]):
            if t <= tb:
                tau = (t - ta) / (tb - ta)
                vel = (pb - pa) / (tb - ta)
                return pa + tau * (pb - pa), vel
        return pts[-1][1].copy(), np.zeros(3)


@dataclass
class Scenario:
    name: str = "scenario"
    duration: float = 5.0
    seed: int = 0
    controller: str = "hpa"  # hpa | taut | geometric
    trajectory: dict = field(default_factory=lambda: {"kind": "hover", "point": [0.0, 0.0, 0.7]})
    disturbances: list[DisturbanceEvent] = field(default_factory=list)
    plant_hz: int = 1000
    mpc_hz: int = 150
    sensor_hz: int = 30
    sensor_noise: bool = True
    quad_pos_noise: float = 0.005
    quad_vel_noise: float = 0.02
    rate_gain: float = 25.0
    record_every: int = 1
    yaw: float = 0.0
    mpc_overrides: dict = field(default_factory=dict)
    params: VehicleParams = field(default_factory=VehicleParams)

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.controller not in ("hpa", "taut", "geometric"):
            raise ValueError(f"unknown controller {self.controller!r}")
        times = [d.t0 for d in self.disturbances]
        if times != sorted(times):
            raise ValueError("disturbances must be ordered by start time")

    def build_source(self) -> TrajectorySource:
        return build_trajectory(self.trajectory)

    def mpc_config(self) -> MpcConfig:
        return MpcConfig(**self.mpc_overrides)


def build_trajectory(spec: dict) -> TrajectorySource:
    kind = spec.get("kind", "hover")
    if kind == "hover":
        return HoverTrajectory(spec.get("point", [0.0, 0.0, 0.7]))
    if kind == "line":
        return LineTrajectory(spec["start"], spec["end"], spec.get("t0", 0.0),
                              spec.get("duration", 5.0))
    if kind == "lissajous":
        p = LissajousParams(
            a=spec.get("a", 2.0), b=spec.get("b", 0.5), c=spec.get("c", 0.0),
            n=spec.get("n", 2.0), m_rel=spec.get("m", 1.0), phi=spec.get("phi", 0.0),
            psi=spec.get("psi", 0.0), period_scale=spec.get("period", 5.0),
        )
        return LissajousTrajectory(p, origin=spec.get("origin", (0.0, 0.0, 0.0)))
    raise ValueError(f"unknown trajectory kind {kind!r}")


@dataclass
class TraceRecord:
    time: float
    state: np.ndarray
    estimate: np.ndarray
    mode_true: int
    mode_detected: int
    hold_active: bool
    impulse_applied: bool
    motors: np.ndarray
    thrust_cmd: float
    rates_cmd: np.ndarray
    cam_load: np.ndarray
    fov_inside: bool
    ref_load_pos: np.ndarray
    kkt_residual: float
    solve_time: float
    controller_failed: bool


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    status: str = "ok"
    scenario_name: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def states(self) -> np.ndarray:
        return np.stack([r.state for r in self.records]) if self.records else np.empty((0, 19))


def synthesize_measurement(state: np.ndarray, params: VehicleParams,
                           noise: NoiseConfig, rng: np.random.Generator | None = None
                           ) -> CableMeasurement:
    """Exact body-frame payload measurement, plus Gaussian noise when an rng
    is supplied. Valid in both modes: uses the actual payload offset."""
    R = quat_to_rot(state[ATT])
    rel = state[LOAD_POS] - state[QUAD_POS]
    rel_v = state[LOAD_VEL] - state[QUAD_VEL]
    pos_body = R.T @ rel
    vel_body = R.T @ rel_v - np.cross(state[RATES], R.T @ rel)
    z = np.concatenate([pos_body, vel_body])
    if rng is not None:
        z = z + rng.multivariate_normal(np.zeros(6), noise.measurement_cov)
    return CableMeasurement(z[:3], z[3:])


def apply_disturbance(state: np.ndarray, event: DisturbanceEvent, t: float,
                      params: VehicleParams) -> np.ndarray:
    """Apply an instantaneous event effect to the state (impulse or hold)."""
    out = state.copy()
    if event.kind == "impulse":
        mass = params.load_mass if event.target == "load" else params.mass
        sl = LOAD_VEL if event.target == "load" else QUAD_VEL
        out[sl] = out[sl] + event.vector / mass
    elif event.kind == "hold":
        pos, vel = event.hold_pose(t)
        margin = 0.01
        rel = pos - out[QUAD_POS]
        dist = np.linalg.norm(rel)
        limit = params.cable_length - (0.05 + margin)
        if dist > limit:
            pos = out[QUAD_POS] + rel * (limit / dist)
        out[LOAD_POS] = pos
        out[LOAD_VEL] = vel
    return out


def taut_initial_state(source: TrajectorySource, params: VehicleParams,
                       yaw: float = 0.0) -> np.ndarray:
    """State on the trajectory at t = 0: taut cable, level attitude."""
    ref = reference_at(source, 0.0, params, yaw)
    return reference_state(ref)


class _HpaController:
    def __init__(self, scenario: Scenario, source: TrajectorySource, forced_taut: bool):
        self.cfg = scenario.mpc_config()
        self.params = scenario.params
        self.source = source
        self.yaw = scenario.yaw
        self.forced_taut = forced_taut
        self.prev = None

    def command(self, t: float, estimate: np.ndarray, mode: HybridMode):
        used = HybridMode.TAUT if self.forced_taut else mode
        refs = horizon_refs(t, self.cfg.stage_dt, self.cfg.horizon_steps,
                            self.source, self.params, self.yaw)
        sol, cmd = command_loop_step(estimate, used, refs, self.cfg, self.params,
                                     prev=self.prev)
        self.prev = sol
        return cmd.thrust, cmd.body_rates.copy(), sol


class _GeometricAdapter:
    def __init__(self, scenario: Scenario, source: TrajectorySource):
        self.inner = GeometricController(default_gains(scenario.params), scenario.params,
                                         source, yaw=scenario.yaw)
        self.params = scenario.params

    def command(self, t: float, estimate: np.ndarray, mode: HybridMode):
        thrust, moment = self.inner(t, estimate)
        motors = motor_speeds_from_wrench(thrust, moment, self.params)
        return thrust, motors, None


def _fov_inside(cam: np.ndarray, half_angles=DEFAULT_FOV_HALF_ANGLES) -> bool:
    if cam[2] >= 0:
        return False
    return bool(abs(np.arctan2(cam[0], -cam[2])) <= half_angles[0]
                and abs(np.arctan2(cam[1], -cam[2])) <= half_angles[1])


class _LiveHold:
    """Operator-driven gripper: rate-limited motion toward a movable target."""

    def __init__(self, anchor: np.ndarray, speed: float = 2.5) -> None:
        self.pos = anchor.copy()
        self.target = anchor.copy()
        self.speed = speed

    def advance(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        delta = self.target - self.pos
        dist = np.linalg.norm(delta)
        step_len = self.speed * dt
        if dist <= step_len:
            vel = delta / dt if dt > 0 else np.zeros(3)
            self.pos = self.target.copy()
            return self.pos.copy(), vel * (1.0 if dist > 0 else 0.0)
        move = delta * (step_len / dist)
        self.pos = self.pos + move
        return self.pos.copy(), move / dt


class Simulation:
    """Steppable closed-loop simulation; run() drives it to completion.

    Besides the scenario's scripted disturbances, a live command channel
    (grab / move_to / release / impulse / set_reference / select_controller)
    supports interactive operation through the bridge service.
    """

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.params = scenario.params
        self.source = scenario.build_source()
        self.rng = np.random.default_rng(scenario.seed)
        self.noise = NoiseConfig()
        self.x = taut_initial_state(self.source, self.params, scenario.yaw)
        self.mode_true = HybridMode.TAUT
        self.detector = ModeDetectorState(filtered_length=self.params.cable_length)
        self.mode_detected = HybridMode.TAUT
        self.belief: CableBelief | None = None
        self._build_controller(scenario.controller)
        self.dt = 1.0 / scenario.plant_hz
        self.n_steps = int(round(scenario.duration * scenario.plant_hz))
        self.k = 0
        self.thrust_cmd = self.params.total_mass * self.params.gravity
        self.rates_cmd = np.zeros(3)
        self.motors = np.full(4, self.params.hover_motor_speed())
        self.kkt = np.nan
        self.solve_time = np.nan
        self.ctrl_failed = False
        self.est = self.x.copy()
        self.t_last_predict = 0.0
        self.i_ctrl = 0
        self.i_sensor = 0
        self.status = "ok"
        self.live_hold: _LiveHold | None = None

    # ------------------------------------------------------ live commands

    def _build_controller(self, name: str) -> None:
        if name in ("hpa", "taut"):
            self.controller = _HpaController(self.scenario, self.source,
                                             forced_taut=name == "taut")
            self.uses_rate_loop = True
        elif name == "geometric":
            self.controller = _GeometricAdapter(self.scenario, self.source)
            self.uses_rate_loop = False
        else:
            raise ValueError(f"unknown controller {name!r}")
        self.controller_name = name

    def command_grab(self) -> None:
        if self.live_hold is not None:
            raise ValueError("already grabbed")
        self.live_hold = _LiveHold(self.x[LOAD_POS].copy())

    def command_move_to(self, point) -> None:
        if self.live_hold is None:
            raise ValueError("move_to requires an active grab")
        self.live_hold.target = np.asarray(point, dtype=float)

    def command_release(self) -> None:
        if self.live_hold is None:
            raise ValueError("release without grab")
        self.live_hold = None

    def command_impulse(self, vector) -> None:
        ev = DisturbanceEvent(kind="impulse", target="load", t0=self.t, vector=vector)
        self.x = apply_disturbance(self.x, ev, self.t, self.params)

    def command_set_reference(self, point) -> None:
        self.source = HoverTrajectory(point)
        self.controller.source = self.source
        if hasattr(self.controller, "inner"):
            self.controller.inner.source = self.source

    def command_select_controller(self, name: str) -> None:
        self._build_controller(name)

    # ------------------------------------------------------------- stepping

    @property
    def t(self) -> float:
        return self.k * self.dt

    @property
    def done(self) -> bool:
        return self.k >= self.n_steps or self.status != "ok"

    def step_once(self) -> TraceRecord | None:
        """Advance one plant step; returns the record for this step."""
        if self.done:
            return None
        scenario, params = self.scenario, self.params
        x = self.x
        t = self.t
        k = self.k
        dt = self.dt

        impulse_now = False
        hold_event = None
        for ev in scenario.disturbances:
            if ev.kind == "impulse" and ev.t0 <= t < ev.t0 + dt:
                x = apply_disturbance(x, ev, t, params)
                impulse_now = True
            elif ev.kind == "hold" and ev.t0 <= t <= ev.t1:
                hold_event = ev
        if hold_event is not None:
            x = apply_disturbance(x, hold_event, t, params)
        holding = hold_event is not None
        if self.live_hold is not None:
            holding = True
            pos, vel = self.live_hold.advance(dt)
            x = self._apply_live_hold(x, pos, vel)

        f_ext_load = f_ext_quad = None
        for ev in scenario.disturbances:
            if ev.kind == "force" and ev.t0 <= t <= ev.t1:
                if ev.target == "load":
                    f_ext_load = ev.vector
                else:
                    f_ext_quad = ev.vector

        sensor_due = k * scenario.sensor_hz >= self.i_sensor * scenario.plant_hz
        ctrl_due = k * scenario.mpc_hz >= self.i_ctrl * scenario.plant_hz
        if sensor_due or ctrl_due:
            if self.belief is not None and t > self.t_last_predict:
                self.belief = ekf_predict(self.belief, self.thrust_cmd, x[ATT],
                                          t - self.t_last_predict, params, self.noise)
            self.t_last_predict = t
        if sensor_due:
            self.i_sensor += 1
            meas_rng = self.rng if scenario.sensor_noise else None
            meas = synthesize_measurement(x, params, self.noise, meas_rng)
            if self.belief is None:
                self.belief = belief_from_measurement(meas, x[ATT], x[RATES], params)
            else:
                self.belief = ekf_update(self.belief, meas, x[ATT], x[RATES], params, self.noise)
            quad_pos_meas = x[QUAD_POS]
            if scenario.sensor_noise:
                quad_pos_meas = quad_pos_meas + self.rng.normal(0, scenario.quad_pos_noise, 3)
            load_pos_meas = quad_pos_meas + quat_to_rot(x[ATT]) @ meas.pos_body
            self.detector, self.mode_detected = detect_mode(
                self.detector, load_pos_meas, quad_pos_meas, params)

        if ctrl_due:
            self.i_ctrl += 1
            quad_pos = x[QUAD_POS].copy()
            quad_vel = x[QUAD_VEL].copy()
            if scenario.sensor_noise:
                quad_pos += self.rng.normal(0, scenario.quad_pos_noise, 3)
                quad_vel += self.rng.normal(0, scenario.quad_vel_noise, 3)
            est = x.copy()
            est[QUAD_POS] = quad_pos
            est[QUAD_VEL] = quad_vel
            load_pos, load_vel = load_state_from_belief(self.belief, quad_pos, quad_vel, params)
            if self.mode_detected == HybridMode.SLACK and self.controller_name == "hpa":
                # the hybrid stack knows the cable is slack and takes the
                # payload at its measured range; the taut-assuming baselines
                # keep the cable-length projection (their defining flaw)
                scale = self.detector.filtered_length / params.cable_length
                load_pos = quad_pos + (load_pos - quad_pos) * scale
                load_vel = quad_vel + (load_vel - quad_vel) * scale
            est[LOAD_POS] = load_pos
            est[LOAD_VEL] = load_vel
            self.est = est
            try:
                out_thrust, out_aux, sol = self.controller.command(t, est, self.mode_detected)
            except Exception as exc:  # noqa: BLE001 - truncate with reason
                self.status = f"controller_failure: {exc}"
                return None
            self.thrust_cmd = out_thrust
            if self.uses_rate_loop:
                self.rates_cmd = out_aux
                self.kkt = sol.kkt_residual
                self.solve_time = sol.solve_time
                self.ctrl_failed = sol.qp_failed or sol.reused_previous
            else:
                self.motors = out_aux
                self.kkt, self.solve_time, self.ctrl_failed = np.nan, np.nan, False

        if self.uses_rate_loop:
            omega = x[RATES]
            moment = params.inertia @ (scenario.rate_gain * (self.rates_cmd - omega))
            moment = moment + np.cross(omega, params.inertia @ omega)
            self.motors = motor_speeds_from_wrench(self.thrust_cmd, moment, params)

        if holding:
            self.mode_true = HybridMode.SLACK
        elif self.mode_true == HybridMode.TAUT:
            rel = x[LOAD_POS] - x[QUAD_POS]
            r_hat = rel / np.linalg.norm(rel)
            radial_rate = (x[LOAD_VEL] - x[QUAD_VEL]) @ r_hat
            # impulses can drive the bodies together faster than the tension
            # sign flips; an inward radial rate means slack immediately
            if radial_rate < -1e-9 or cable_tension(x, self.motors, params,
                                                    f_ext_load, f_ext_quad) < 0.0:
                self.mode_true = HybridMode.SLACK

        ref_pos, _, _ = self.source.sample(t)
        cam = payload_in_camera(x, params)
        record = None
        if k % scenario.record_every == 0:
            record = TraceRecord(
                time=t, state=x.copy(), estimate=self.est.copy(),
                mode_true=int(self.mode_true), mode_detected=int(self.mode_detected),
                hold_active=holding, impulse_applied=impulse_now,
                motors=self.motors.copy(), thrust_cmd=float(self.thrust_cmd),
                rates_cmd=np.asarray(self.rates_cmd, dtype=float).copy(),
                cam_load=cam, fov_inside=_fov_inside(cam),
                ref_load_pos=np.asarray(ref_pos, dtype=float),
                kkt_residual=float(self.kkt), solve_time=float(self.solve_time),
                controller_failed=bool(self.ctrl_failed),
            )

        try:
            x = step(x, self.motors, self.mode_true, dt, params,
                     f_ext_load=f_ext_load, f_ext_quad=f_ext_quad).as_vector()
        except NonFinite as exc:
            self.status = f"non_finite: {exc}"
            self.x = x
            return record

        if hold_event is not None and self.live_hold is None:
            x = apply_disturbance(x, hold_event, t + dt, params)
        elif self.live_hold is not None:
            x = self._apply_live_hold(x, self.live_hold.pos, np.zeros(3))
        elif self.mode_true == HybridMode.SLACK:
            rel = x[LOAD_POS] - x[QUAD_POS]
            sep = np.linalg.norm(rel)
            if sep >= params.cable_length:
                radial_rate = (x[LOAD_VEL] - x[QUAD_VEL]) @ (rel / sep)
                if radial_rate >= 0.0:
                    x = impact_map(x, params).as_vector()
                    self.mode_true = HybridMode.TAUT
                else:
                    x[LOAD_POS] = x[QUAD_POS] + rel * (params.cable_length / sep)

        self.x = x
        self.k += 1
        return record

    def _apply_live_hold(self, x: np.ndarray, pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
        out = x.copy()
        margin = 0.01
        rel = pos - out[QUAD_POS]
        dist = np.linalg.norm(rel)
        limit = self.params.cable_length - (self.detector.epsilon + margin)
        if dist > limit:
            pos = out[QUAD_POS] + rel * (limit / dist)
        out[LOAD_POS] = pos
        out[LOAD_VEL] = vel
        return out


def run(scenario: Scenario) -> Trace:
    """Run the closed loop; returns the trace, truncated with a reason on
    controller failure or non-finite states."""
    sim = Simulation(scenario)
    trace = Trace(scenario_name=scenario.name)
    while not sim.done:
        record = sim.step_once()
        if record is not None:
            trace.records.append(record)
    trace.status = sim.status
    return trace
