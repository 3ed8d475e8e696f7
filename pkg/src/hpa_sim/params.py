"""Vehicle parameters: masses, cable, inertia, motor model, mixer, camera."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _default_inertia() -> np.ndarray:
    return np.diag([3.0e-3, 3.0e-3, 5.2e-3])


@dataclass
class VehicleParams:
    """Physical parameters of the quadrotor + cable + payload system.

    Motor speeds are expressed in normalized units (motor_constant = 1 gives
    per-motor thrust = speed^2 in newtons), which keeps control inputs O(1).
    Set motor_constant/moment_constant to physical values for a real vehicle.
    """

    mass: float = 0.72
    load_mass: float = 0.1
    cable_length: float = 0.5
    inertia: np.ndarray = field(default_factory=_default_inertia)
    motor_constant: float = 1.0
    moment_constant: float = 0.016
    arm_length: float = 0.17
    gravity: float = 9.81
    cam_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    cam_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    motor_min: float = 0.0
    motor_max: float | None = None

    def __post_init__(self) -> None:
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.cam_rotation = np.asarray(self.cam_rotation, dtype=float)
        self.cam_translation = np.asarray(self.cam_translation, dtype=float)
        if min(self.mass, self.load_mass, self.cable_length, self.motor_constant, self.arm_length) <= 0:
            raise ValueError("mass, load_mass, cable_length, motor_constant, arm_length must be > 0")
        if not np.allclose(self.inertia, self.inertia.T) or np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError("inertia must be symmetric positive definite")
        if not np.allclose(self.cam_rotation @ self.cam_rotation.T, np.eye(3), atol=1e-9):
            raise ValueError("cam_rotation must be orthonormal")
        if self.motor_max is None:
            # thrust-to-weight 2.5 at full throttle
            self.motor_max = float(
                np.sqrt(2.5 * self.total_mass * self.gravity / (4.0 * self.motor_constant))
            )
        self.inertia_inv = np.linalg.inv(self.inertia)
        self.mixer = self._build_mixer()
        self.mixer_inv = np.linalg.inv(self.mixer)

    @property
    def total_mass(self) -> float:
        return self.mass + self.load_mass

    def hover_motor_speed(self, supported_mass: float | None = None) -> float:
        """Per-motor speed that balances the given mass (total mass by default)."""
        m = self.total_mass if supported_mass is None else supported_mass
        return float(np.sqrt(m * self.gravity / (4.0 * self.motor_constant)))

    def _build_mixer(self) -> np.ndarray:
        # X configuration, body frame x forward / y left / z up.
        # Motor order and spin (viewed from above):
        #   1 front-right CCW, 2 back-left CCW, 3 front-left CW, 4 back-right CW
        # Rows map squared motor speeds to [thrust, Mx, My, Mz].
        a = self.arm_length / np.sqrt(2.0)
        kf, km = self.motor_constant, self.moment_constant
        return np.array(
            [
                [kf, kf, kf, kf],
                [-a * kf, a * kf, a * kf, -a * kf],
                [-a * kf, a * kf, -a * kf, a * kf],
                [-km, -km, km, km],
            ]
        )
