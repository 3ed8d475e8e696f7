"""Dense box-constrained convex QP via a primal active-set method.

Solves   min 0.5 x^T H x + g^T x   s.t.  lb <= x <= ub
for symmetric positive definite H. Small and deterministic; sized for the
condensed MPC subproblem (a few dozen variables).
"""

from __future__ import annotations

import numpy as np

from .errors import QpInfeasible


def solve_box_qp(H: np.ndarray, g: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    n = g.shape[0]
    if np.any(lb > ub):
        raise QpInfeasible("inconsistent bounds")

    # working set: -1 at lower bound, +1 at upper, 0 free
    x = np.clip(np.linalg.solve(H, -g), lb, ub)
    active = np.zeros(n, dtype=int)
    active[x <= lb + tol] = -1
    active[x >= ub - tol] = 1

    for _ in range(max_iter):
        free = active == 0
        target = x.copy()
        target[active == -1] = lb[active == -1]
        target[active == 1] = ub[active == 1]
        if free.any():
            rhs = -(g[free] + H[np.ix_(free, ~free)] @ target[~free])
            target[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)

        step = target - x
        # largest feasible step toward the equality-constrained optimum
        alpha = 1.0
        blocking = -1
        blocking_side = 0
        for i in np.where(free)[0]:
            if step[i] > tol and x[i] + step[i] > ub[i]:
                a = (ub[i] - x[i]) / step[i]
                if a < alpha:
                    alpha, blocking, blocking_side = a, i, 1
            elif step[i] < -tol and x[i] + step[i] < lb[i]:
                a = (lb[i] - x[i]) / step[i]
                if a < alpha:
                    alpha, blocking, blocking_side = a, i, -1
        x = x + alpha * step
        if blocking >= 0:
            active[blocking] = blocking_side
            x[blocking] = lb[blocking] if blocking_side == -1 else ub[blocking]
            continue

        # full step taken: check multipliers of the active bounds
        grad = H @ x + g
        release = -1
        worst = tol
        for i in np.where(active != 0)[0]:
            # at a lower bound KKT needs grad >= 0, at an upper grad <= 0
            viol = -grad[i] if active[i] == -1 else grad[i]
            if viol > worst:
                worst, release = viol, i
        if release < 0:
            return np.clip(x, lb, ub)
        active[release] = 0

    raise QpInfeasible("active-set iteration limit reached")
