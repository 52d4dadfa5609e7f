"""Scalar-first unit quaternions with a series-guarded exponential map.

The exponential map takes a rotation vector (axis times angle) to the unit
quaternion rotating by it.  Near zero rotation the closed form divides
sin by the angle, so a short Taylor series in the squared angle takes over
below ``theta = 1e-4``; both branches are plain polynomials or
trigonometric forms in the squared angle, which keeps the map smooth
through zero and safe to probe with complex-step differentiation.
"""
from __future__ import annotations

import numpy as np

__all__ = ["quat_exp", "quat_mul", "quat_normalize", "quat_to_matrix"]

# squared-angle threshold below which the series branches activate
_SERIES_T2 = 1e-8


def quat_exp(w) -> np.ndarray:
    """Unit quaternion (scalar first) rotating by the rotation vector w."""
    w = np.asarray(w)
    if w.shape != (3,):
        raise ValueError(f"rotation vector must have shape (3,), got {w.shape}")
    t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    if abs(t2) < _SERIES_T2:
        qw = 1.0 - t2 / 8.0 + t2 * t2 / 384.0
        c = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0
    else:
        theta = np.sqrt(t2)
        qw = np.cos(0.5 * theta)
        c = np.sin(0.5 * theta) / theta
    out = np.empty(4, dtype=np.result_type(w.dtype, np.float64))
    out[0] = qw
    out[1:] = c * w
    return out


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a * b, both scalar first."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != (4,) or b.shape != (4,):
        raise ValueError("quaternions must have shape (4,)")
    out = np.empty(4, dtype=np.result_type(a.dtype, b.dtype, np.float64))
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / norm


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a quaternion (scalar first; unit up to scale)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
