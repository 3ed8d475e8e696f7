from __future__ import annotations

import numpy as np
import pytest

from hpa_sim.errors import QpInfeasible
from hpa_sim.qp import solve_box_qp

cvxopt = pytest.importorskip("cvxopt")
from cvxopt import matrix, solvers  # noqa: E402

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-10
solvers.options["reltol"] = 1e-10
solvers.options["feastol"] = 1e-10
RNG = np.random.default_rng(99)


def cvxopt_reference(H, g, lb, ub):
    n = len(g)
    G = np.vstack([np.eye(n), -np.eye(n)])
    h = np.concatenate([ub, -lb])
    sol = solvers.qp(matrix(H), matrix(g), matrix(G), matrix(h))
    return np.array(sol["x"]).ravel()


def random_problem(n, active_pressure=1.0):
    A = RNG.normal(0, 1, (n, n))
    H = A @ A.T + 0.5 * np.eye(n)
    g = RNG.normal(0, active_pressure * n, n)
    lb = RNG.uniform(-1.5, -0.2, n)
    ub = RNG.uniform(0.2, 1.5, n)
    return H, g, lb, ub


@pytest.mark.parametrize("n", [2, 5, 12, 40])
def test_matches_cvxopt_on_random_problems(n):
    for _ in range(25):
        H, g, lb, ub = random_problem(n)
        x = solve_box_qp(H, g, lb, ub)
        x_ref = cvxopt_reference(H, g, lb, ub)
        np.testing.assert_allclose(x, x_ref, atol=5e-6)
        assert np.all(x >= lb - 1e-10)
        assert np.all(x <= ub + 1e-10)


def test_unconstrained_interior_solution():
    H = np.diag([2.0, 4.0])
    g = np.array([-2.0, -4.0])
    x = solve_box_qp(H, g, np.full(2, -10.0), np.full(2, 10.0))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)


def test_fully_clamped():
    H = np.eye(3)
    g = np.array([-100.0, 100.0, -100.0])
    x = solve_box_qp(H, g, np.zeros(3), np.ones(3))
    np.testing.assert_allclose(x, [1.0, 0.0, 1.0], atol=1e-12)


def test_kkt_conditions_hold():
    for _ in range(50):
        H, g, lb, ub = random_problem(8, active_pressure=2.0)
        x = solve_box_qp(H, g, lb, ub)
        grad = H @ x + g
        for i in range(8):
            if x[i] <= lb[i] + 1e-9:
                assert grad[i] >= -1e-6
            elif x[i] >= ub[i] - 1e-9:
                assert grad[i] <= 1e-6
            else:
                assert abs(grad[i]) <= 1e-6


def test_inconsistent_bounds_raise():
    with pytest.raises(QpInfeasible):
        solve_box_qp(np.eye(2), np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
