from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpa_sim.dynamics import (
    ATT,
    E3,
    LOAD_POS,
    LOAD_VEL,
    QUAD_POS,
    QUAD_VEL,
    RATES,
    ControlInput,
    HybridMode,
    SystemState,
    cable_tension,
    impact_map,
    moment_from_motors,
    motor_speeds_from_wrench,
    rk4_step,
    slack_derivative,
    slack_rhs,
    step,
    taut_derivative,
    taut_rhs,
    thrust_from_motors,
)
from hpa_sim.errors import InconsistentConstraint, NotExtended
from hpa_sim.params import VehicleParams
from hpa_sim.quat import quat_normalize, quat_to_rot

from conftest import hover_input, random_taut_vector, taut_hover_vector

RNG = np.random.default_rng(1234)


# ---------------------------------------------------------------- motor model


def test_thrust_zero_input(params):
    assert thrust_from_motors(ControlInput(np.zeros(4)), params) == 0.0


def test_thrust_hover_arithmetic(params):
    w = np.full(4, np.sqrt(params.total_mass * params.gravity / (4 * params.motor_constant)))
    f = thrust_from_motors(w, params)
    assert f == pytest.approx(0.82 * 9.81, rel=1e-12)
    assert f == pytest.approx(8.0442, abs=1e-4)


def test_thrust_matches_termwise_sum(params):
    w = RNG.uniform(0, 2.0, 4)
    expected = sum(params.motor_constant * wi**2 for wi in w)  # brute-force oracle
    assert thrust_from_motors(w, params) == pytest.approx(expected, rel=1e-14)


def test_moment_all_equal_is_zero(params):
    M = moment_from_motors(np.full(4, 1.3), params)
    np.testing.assert_allclose(M, 0.0, atol=1e-12)


def test_moment_single_motor_rows(params):
    # evaluate the allocation matrix row by row for each single spinning motor
    a = params.arm_length / np.sqrt(2)
    kf, km = params.motor_constant, params.moment_constant
    # columns: motor 1 FR CCW, 2 BL CCW, 3 FL CW, 4 BR CW
    expected_cols = np.array(
        [
            [-a * kf, -a * kf, -km],
            [a * kf, a * kf, -km],
            [a * kf, -a * kf, km],
            [-a * kf, a * kf, km],
        ]
    )
    for i in range(4):
        w = np.zeros(4)
        w[i] = 1.7
        M = moment_from_motors(w, params)
        np.testing.assert_allclose(M, expected_cols[i] * 1.7**2, rtol=1e-12)


def test_moment_hover_equilibrium_zero(params):
    np.testing.assert_allclose(moment_from_motors(hover_input(params), params), 0.0, atol=1e-12)


def test_mixer_roundtrip(params):
    f, M = 6.0, np.array([0.01, -0.02, 0.005])
    w = motor_speeds_from_wrench(f, M, params)
    assert thrust_from_motors(w, params) == pytest.approx(f, rel=1e-10)
    np.testing.assert_allclose(moment_from_motors(w, params), M, atol=1e-12)


# ------------------------------------------------------------ taut derivative


def test_taut_hover_equilibrium(params):
    x = taut_hover_vector(params)
    d = taut_derivative(x, hover_input(params), params)
    np.testing.assert_allclose(d, 0.0, atol=1e-12)


def test_taut_zero_rates_zero_attitude_derivative(params):
    x = random_taut_vector(RNG, params)
    x[RATES] = 0.0
    d = taut_derivative(x, hover_input(params), params)
    np.testing.assert_allclose(d[ATT], 0.0, atol=1e-15)


def test_taut_matches_paper_form(params):
    """The tension-based implementation equals the Lagrange-d'Alembert form."""
    for _ in range(20):
        x = random_taut_vector(RNG, params)
        u = RNG.uniform(0.2, 2.0, 4)
        d = taut_rhs(x, u, params)
        l = params.cable_length
        q = (x[LOAD_POS] - x[QUAD_POS]) / l
        q_rate = (x[LOAD_VEL] - x[QUAD_VEL]) / l
        f = params.motor_constant * np.sum(u**2)
        t_vec = f * quat_to_rot(x[ATT])[:, 2]
        lam = q @ t_vec - params.mass * l * (q_rate @ q_rate)
        a_load = lam * q / params.total_mass - params.gravity * E3
        q_ddot = np.cross(q, np.cross(q, t_vec)) / (params.mass * l) - (q_rate @ q_rate) * q
        a_quad = a_load - l * q_ddot
        np.testing.assert_allclose(d[LOAD_VEL], a_load, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(d[QUAD_VEL], a_quad, rtol=1e-10, atol=1e-12)


def test_taut_cable_acceleration_tangency(params):
    """q . q_ddot = -|q_dot|^2 keeps the cable direction on the sphere."""
    for _ in range(50):
        x = random_taut_vector(RNG, params)
        u = RNG.uniform(0, 2.0, 4)
        d = taut_rhs(x, u, params)
        l = params.cable_length
        q = (x[LOAD_POS] - x[QUAD_POS]) / l
        q_rate = (x[LOAD_VEL] - x[QUAD_VEL]) / l
        q_ddot = (d[LOAD_VEL] - d[QUAD_VEL]) / l
        assert q @ q_ddot == pytest.approx(-(q_rate @ q_rate), abs=1e-9)


def test_taut_derivative_finite_difference_oracle(params):
    """Derivative matches central differences of a tiny-step integration."""
    h = 1e-6
    for _ in range(10):
        x = random_taut_vector(RNG, params)
        u = RNG.uniform(0.5, 2.0, 4)
        d = taut_derivative(x, u, params)
        x_plus = rk4_step(taut_rhs, x, u, h, params)
        x_minus = rk4_step(taut_rhs, x, u, -h, params)
        fd = (x_plus - x_minus) / (2 * h)
        np.testing.assert_allclose(d, fd, rtol=1e-6, atol=1e-8)


def test_taut_precondition_enforced(params):
    x = taut_hover_vector(params)
    x[LOAD_POS] += np.array([0.0, 0.0, 0.1])
    with pytest.raises(InconsistentConstraint):
        taut_derivative(x, hover_input(params), params)


def test_derivatives_match_finite_differences_on_100_states(params):
    """Both vector fields differentiate their own closed forms consistently."""
    h = 1e-6
    for _ in range(100):
        x = random_taut_vector(RNG, params)
        u = RNG.uniform(0.2, 2.2, 4)
        for rhs in (taut_rhs, slack_rhs):
            d = rhs(x, u, params)
            fd = (rk4_step(rhs, x, u, h, params) - rk4_step(rhs, x, u, -h, params)) / (2 * h)
            np.testing.assert_allclose(d, fd, rtol=1e-6, atol=1e-8)


# ----------------------------------------------------------- slack derivative


def test_slack_free_fall(params):
    x = random_taut_vector(RNG, params)
    d = slack_derivative(x, np.zeros(4), params)
    np.testing.assert_allclose(d[LOAD_VEL], [0, 0, -9.81], rtol=1e-12)
    np.testing.assert_allclose(d[QUAD_VEL], [0, 0, -9.81], rtol=1e-12)


def test_slack_decoupled_hover(params):
    x = taut_hover_vector(params)
    u = hover_input(params, params.mass)
    d = slack_derivative(x, u, params)
    np.testing.assert_allclose(d[QUAD_VEL], 0.0, atol=1e-12)
    np.testing.assert_allclose(d[LOAD_VEL], -9.81 * E3, rtol=1e-12)


def test_slack_matrix_vector_oracle(params):
    x = random_taut_vector(RNG, params)
    u = RNG.uniform(0.2, 2.0, 4)
    d = slack_derivative(x, u, params)
    f = params.motor_constant * np.sum(u**2)
    R = quat_to_rot(x[ATT])
    expected = f * (R @ np.array([0.0, 0.0, 1.0])) / params.mass - 9.81 * E3
    np.testing.assert_allclose(d[QUAD_VEL], expected, rtol=1e-12)


def test_slack_quad_independent_of_load(params):
    x = random_taut_vector(RNG, params)
    u = RNG.uniform(0.2, 2.0, 4)
    d1 = slack_rhs(x, u, params)
    x2 = x.copy()
    x2[LOAD_POS] += RNG.normal(0, 1, 3)
    x2[LOAD_VEL] += RNG.normal(0, 1, 3)
    d2 = slack_rhs(x2, u, params)
    assert np.array_equal(d1[6:], d2[6:])  # bit-identical quad derivative


def test_hybrid_field_continuity_at_zero_tension(params):
    """Taut and slack fields agree where the implied tension vanishes."""
    for _ in range(20):
        x = random_taut_vector(RNG, params)
        q = (x[LOAD_POS] - x[QUAD_POS]) / params.cable_length
        q_rate = (x[LOAD_VEL] - x[QUAD_VEL]) / params.cable_length
        # pick thrust so q . f R e3 = m l |q_dot|^2  (zero tension)
        b3 = quat_to_rot(x[ATT])[:, 2]
        denom = q @ b3
        if abs(denom) < 0.2:
            continue
        f_needed = params.mass * params.cable_length * (q_rate @ q_rate) / denom
        if f_needed < 0:
            continue
        w = np.full(4, np.sqrt(f_needed / (4 * params.motor_constant)))
        assert cable_tension(x, w, params) == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(
            taut_rhs(x, w, params), slack_rhs(x, w, params), rtol=1e-9, atol=1e-9
        )


# ----------------------------------------------------------------------- step


def test_step_slack_ballistic_oracle(params):
    x = taut_hover_vector(params)
    x[LOAD_POS] = [0, 0, 0]
    dt = 0.1
    xn = step(x, np.zeros(4), HybridMode.SLACK, dt, params)
    assert xn.load_pos[2] == pytest.approx(-0.5 * 9.81 * dt**2, rel=1e-12)
    assert xn.load_vel[2] == pytest.approx(-9.81 * dt, rel=1e-12)


def test_step_taut_hover_fixed_point(params):
    x = taut_hover_vector(params)
    xn = step(x, hover_input(params), HybridMode.TAUT, 0.05, params)
    np.testing.assert_allclose(xn.as_vector(), x, atol=1e-9)


def test_step_taut_constraint_drift(params):
    x = random_taut_vector(RNG, params, vel_scale=0.5, rate_scale=0.5)
    u = hover_input(params)
    for _ in range(100):
        s = step(x, u, HybridMode.TAUT, 1e-3, params)
        x = s.as_vector()
    sep = np.linalg.norm(x[LOAD_POS] - x[QUAD_POS])
    assert abs(sep - params.cable_length) < 1e-6


def test_step_taut_length_over_1000_steps(params):
    x = random_taut_vector(RNG, params, vel_scale=1.0, rate_scale=1.0)
    u = hover_input(params)
    worst = 0.0
    for _ in range(1000):
        x = step(x, u, HybridMode.TAUT, 1e-3, params).as_vector()
        sep = np.linalg.norm(x[LOAD_POS] - x[QUAD_POS])
        worst = max(worst, abs(sep - params.cable_length))
    assert worst < 1e-6


def test_step_quaternion_normalized(params):
    x = random_taut_vector(RNG, params)
    s = step(x, RNG.uniform(0, 2, 4), HybridMode.TAUT, 1e-3, params)
    assert abs(np.linalg.norm(s.attitude) - 1.0) < 1e-9


def test_slack_quad_energy_conserved_without_thrust(params):
    x = random_taut_vector(RNG, params, vel_scale=1.0, rate_scale=2.0)
    u = np.zeros(4)

    def energy(xv):
        ke = 0.5 * params.mass * xv[QUAD_VEL] @ xv[QUAD_VEL]
        rot = 0.5 * xv[RATES] @ params.inertia @ xv[RATES]
        pe = params.mass * params.gravity * xv[QUAD_POS][2]
        return ke + rot + pe

    e0 = energy(x)
    for _ in range(200):
        x = step(x, u, HybridMode.SLACK, 1e-3, params).as_vector()
    assert energy(x) == pytest.approx(e0, rel=1e-9)


# ----------------------------------------------------------------- impact map


def test_impact_momentum_oracle(params):
    x = taut_hover_vector(params)
    x[LOAD_VEL] = [0, 0, -1.0]  # receding straight down along the cable
    out = impact_map(x, params)
    v_common = 0.1 * 1.0 / 0.82
    assert v_common == pytest.approx(0.12195, abs=1e-5)
    np.testing.assert_allclose(out.load_vel, [0, 0, -v_common], rtol=1e-9)
    np.testing.assert_allclose(out.quad_vel, [0, 0, -v_common], rtol=1e-9)


def test_impact_no_relative_radial_velocity_is_identity(params):
    x = taut_hover_vector(params)
    x[LOAD_VEL] = [0.3, -0.2, 0.0]
    x[QUAD_VEL] = [0.3, -0.2, 0.0]
    out = impact_map(x, params)
    np.testing.assert_allclose(out.load_vel, x[LOAD_VEL], atol=1e-12)
    np.testing.assert_allclose(out.quad_vel, x[QUAD_VEL], atol=1e-12)


def test_impact_requires_extension(params):
    x = taut_hover_vector(params)
    x[LOAD_POS] = x[QUAD_POS] - np.array([0, 0, 0.3])
    with pytest.raises(NotExtended):
        impact_map(x, params)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_impact_conservation_properties(seed):
    params = VehicleParams()
    rng = np.random.default_rng(seed)
    x = np.zeros(19)
    x[ATT.start] = 1.0
    x[QUAD_POS] = rng.normal(0, 1, 3)
    d = rng.normal(0, 1, 3)
    d /= np.linalg.norm(d)
    ext = params.cable_length * (1.0 + rng.uniform(0, 0.05))
    x[LOAD_POS] = x[QUAD_POS] + ext * d
    x[LOAD_VEL] = rng.normal(0, 2, 3)
    x[QUAD_VEL] = rng.normal(0, 2, 3)

    out = impact_map(x, params).as_vector()

    p_before = params.mass * x[QUAD_VEL] + params.load_mass * x[LOAD_VEL]
    p_after = params.mass * out[QUAD_VEL] + params.load_mass * out[LOAD_VEL]
    np.testing.assert_allclose(p_after, p_before, rtol=1e-12, atol=1e-12)

    ke = lambda v_q, v_l: 0.5 * params.mass * v_q @ v_q + 0.5 * params.load_mass * v_l @ v_l
    assert ke(out[QUAD_VEL], out[LOAD_VEL]) <= ke(x[QUAD_VEL], x[LOAD_VEL]) + 1e-12

    # post-impact radial separation rate is zero
    q = (out[LOAD_POS] - out[QUAD_POS]) / params.cable_length
    assert (out[LOAD_VEL] - out[QUAD_VEL]) @ q == pytest.approx(0.0, abs=1e-12)

    # idempotent
    again = impact_map(out, params).as_vector()
    np.testing.assert_allclose(again, out, atol=1e-12)


# ------------------------------------------------------------------- wrappers


def test_system_state_roundtrip(params):
    x = random_taut_vector(RNG, params)
    s = SystemState.from_vector(x)
    np.testing.assert_array_equal(s.as_vector(), x)


def test_control_input_shape_checked():
    with pytest.raises(ValueError):
        ControlInput(np.zeros(3))
