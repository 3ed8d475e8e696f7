from __future__ import annotations

import numpy as np
import pytest

from hpa_sim.dynamics import ATT, E3, LOAD_POS, LOAD_VEL, QUAD_POS, QUAD_VEL, RATES
from hpa_sim.params import VehicleParams
from hpa_sim.quat import quat_normalize


@pytest.fixture
def params() -> VehicleParams:
    return VehicleParams()


def taut_hover_vector(params: VehicleParams, load_pos=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Taut equilibrium: load at load_pos, quad one cable length above, level."""
    x = np.zeros(19)
    x[LOAD_POS] = load_pos
    x[QUAD_POS] = np.asarray(load_pos) + params.cable_length * E3
    x[ATT.start] = 1.0
    return x


def random_taut_vector(rng: np.random.Generator, params: VehicleParams,
                       vel_scale: float = 1.0, rate_scale: float = 1.0) -> np.ndarray:
    """Random state satisfying the taut constraint and its rate condition."""
    x = np.zeros(19)
    x[QUAD_POS] = rng.normal(0, 1.0, 3)
    d = rng.normal(0, 1, 3)
    d /= np.linalg.norm(d)
    x[LOAD_POS] = x[QUAD_POS] + params.cable_length * d
    x[QUAD_VEL] = rng.normal(0, vel_scale, 3)
    w = rng.normal(0, vel_scale, 3)
    w -= d * (d @ w)  # relative velocity tangent to the sphere
    x[LOAD_VEL] = x[QUAD_VEL] + w
    x[ATT] = quat_normalize(rng.normal(0, 1, 4))
    x[RATES] = rng.normal(0, rate_scale, 3)
    return x


def hover_input(params: VehicleParams, supported_mass=None) -> np.ndarray:
    return np.full(4, params.hover_motor_speed(supported_mass))
