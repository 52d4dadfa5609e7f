"""A ball that can spin in place but not translate.

The manipulation tasks rotate a sphere whose center is pinned; its only
degrees of freedom are angular.  Contact impulses from the arm enter as
torques about the center, and a linear rotational damper resists spin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .contact_geom import Sphere
from .quaternions import quat_normalize

__all__ = ["BallModel", "BallState", "free_spin_velocity"]


@dataclass(frozen=True)
class BallModel:
    radius: float
    center: np.ndarray
    inertia: np.ndarray
    rotational_damping: np.ndarray
    label: str = "ball"

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        inertia = np.asarray(self.inertia, dtype=float)
        damping = np.asarray(self.rotational_damping, dtype=float)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if center.shape != (3,):
            raise ValueError("center must be a 3-vector")
        if inertia.shape != (3, 3) or np.abs(inertia - inertia.T).max() > 1e-12:
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(inertia).min() <= 0.0:
            raise ValueError("inertia must be positive definite")
        if damping.shape != (3, 3) or np.abs(damping - damping.T).max() > 1e-12:
            raise ValueError("rotational damping must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(damping).min() < 0.0:
            raise ValueError("rotational damping must be positive semidefinite")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "rotational_damping", damping)

    @classmethod
    def homogeneous(cls, mass, radius, center, damping=0.0, label="ball"):
        """Solid uniform sphere: inertia (2/5) m r^2 I, isotropic damping."""
        inertia = 0.4 * mass * radius**2 * np.eye(3)
        return cls(
            radius=radius,
            center=np.asarray(center, dtype=float),
            inertia=inertia,
            rotational_damping=float(damping) * np.eye(3),
            label=label,
        )

    def shape(self) -> Sphere:
        return Sphere(center=self.center, radius=self.radius)


@dataclass(frozen=True)
class BallState:
    """Orientation (scalar-first unit quaternion) and world-frame angular velocity."""

    orientation: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.orientation, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        if q.shape != (4,):
            raise ValueError("orientation must be a quaternion of shape (4,)")
        if omega.shape != (3,):
            raise ValueError("omega must be a 3-vector")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(omega))):
            raise ValueError("ball state must be finite")
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError("orientation must be unit within 1e-6")
        object.__setattr__(self, "orientation", quat_normalize(q))
        object.__setattr__(self, "omega", omega)

    @classmethod
    def at_rest(cls) -> "BallState":
        return cls(orientation=np.array([1.0, 0.0, 0.0, 0.0]), omega=np.zeros(3))


def free_spin_velocity(model: BallModel, state: BallState, h: float) -> np.ndarray:
    """Angular velocity after one damping-implicit step with no contact."""
    lhs = model.inertia + h * model.rotational_damping
    return scipy.linalg.solve(lhs, model.inertia @ state.omega, assume_a="pos")
