"""Simulation and control stack for a quadrotor with a cable-suspended payload."""

__version__ = "0.1.0"

from .dynamics import (
    ControlInput,
    HybridMode,
    SystemState,
    impact_map,
    moment_from_motors,
    slack_derivative,
    step,
    taut_derivative,
    thrust_from_motors,
)
from .estimator import (
    CableBelief,
    CableMeasurement,
    ModeDetectorState,
    NoiseConfig,
    detect_mode,
    ekf_predict,
    ekf_update,
    load_state_from_belief,
)
from .mpc import (
    MpcConfig,
    MpcProblem,
    MpcSolution,
    command_loop_step,
    discrete_dynamics,
    payload_in_camera,
    solve,
    stage_cost,
)
from .params import VehicleParams
from .simulator import Scenario, Simulation, Trace, run
from .trajectories import LissajousParams, ReferencePoint, flat_map, horizon_refs, lissajous

__all__ = [
    "CableBelief",
    "CableMeasurement",
    "ControlInput",
    "HybridMode",
    "LissajousParams",
    "ModeDetectorState",
    "MpcConfig",
    "MpcProblem",
    "MpcSolution",
    "NoiseConfig",
    "ReferencePoint",
    "Scenario",
    "Simulation",
    "SystemState",
    "Trace",
    "VehicleParams",
    "command_loop_step",
    "detect_mode",
    "discrete_dynamics",
    "ekf_predict",
    "ekf_update",
    "flat_map",
    "horizon_refs",
    "impact_map",
    "lissajous",
    "load_state_from_belief",
    "moment_from_motors",
    "payload_in_camera",
    "run",
    "slack_derivative",
    "solve",
    "stage_cost",
    "step",
    "taut_derivative",
    "thrust_from_motors",
]
