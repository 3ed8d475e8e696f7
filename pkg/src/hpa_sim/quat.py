"""Quaternion helpers, wxyz convention, world-from-body rotation.

All functions broadcast over leading axes so they can be used on batches
of states (shape (..., 4)).
"""

from __future__ import annotations

import numpy as np


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w1, x1, y1, z1 = (a[..., i] for i in range(4))
    w2, x2, y2, z2 = (b[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (world <- body) from a wxyz quaternion.

    Uses the homogeneous form scaled by 1/|q|^2, so the map is smooth in the
    raw components and exact on unit quaternions.
    """
    q = np.asarray(q, dtype=float)
    n = np.sum(q * q, axis=-1)
    w, x, y, z = (q[..., i] for i in range(4))
    R = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    R[..., 0, 0] = w * w + x * x - y * y - z * z
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = w * w - x * x + y * y - z * z
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = w * w - x * x - y * y + z * z
    return R / n[..., None, None]


def quat_derivative(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Kinematics q_dot = 0.5 * q (x) [0, omega], omega in body frame."""
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    omega_q = np.concatenate([np.zeros(omega.shape[:-1] + (1,)), omega], axis=-1)
    return 0.5 * quat_mul(q, omega_q)


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(0.5 * yaw), 0.0, 0.0, np.sin(0.5 * yaw)])


def left_matrix(q: np.ndarray) -> np.ndarray:
    """4x4 matrix L(q) with q (x) p = L(q) p."""
    w, x, y, z = np.asarray(q, dtype=float)
    return np.array(
        [
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ]
    )


def quat_error_vector(q_ref: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vector part of conj(q_ref) (x) q, a 3-component attitude error chart."""
    return quat_mul(quat_conjugate(q_ref), q)[..., 1:]


def rotate_vector(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    R = quat_to_rot(q)
    return np.einsum("...ij,...j->...i", R, v)


def drot_dq(q: np.ndarray) -> np.ndarray:
    """Derivative of quat_to_rot with respect to the four raw components.

    Returns shape (4, 3, 3); includes the 1/|q|^2 normalization chain rule.
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q
    n = float(q @ q)
    R = quat_to_rot(q)
    d = np.empty((4, 3, 3))
    d[0] = 2.0 * np.array([[w, -z, y], [z, w, -x], [-y, x, w]])
    d[1] = 2.0 * np.array([[x, y, z], [y, -x, -w], [z, w, -x]])
    d[2] = 2.0 * np.array([[-y, x, w], [x, y, z], [-w, z, -y]])
    d[3] = 2.0 * np.array([[-z, -w, x], [w, -z, y], [x, y, z]])
    for i, qi in enumerate((w, x, y, z)):
        d[i] = (d[i] - 2.0 * qi * R) / n
    return d
