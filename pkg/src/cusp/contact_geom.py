"""Convex shape primitives, signed gap functions, and contact frames.

Supported queries are exactly the pairs the scenarios need: a body disk
(modeled as a capped cylinder) against half-space, sphere, and box
environments, plus sphere against half-space.  The disk-sphere gap uses a
smooth signed-distance form so it stays differentiable in the disk pose;
the other pairs are exact support-function gaps.

The reported frame carries the contact point, a unit normal pointing from
the environment shape into the robot shape, and a deterministic orthonormal
tangent pair with n = t1 x t2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UnsupportedGeometryError",
    "HalfSpace",
    "Sphere",
    "Box",
    "Disk",
    "ContactFrame",
    "GeometryConfig",
    "sabs",
    "smax",
    "gap",
    "gap_gradient",
]


class UnsupportedGeometryError(TypeError):
    """Raised for shape pairs outside the supported set."""


def _unit(v, what):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if v.shape != (3,) or not np.isfinite(norm) or norm < 1e-12:
        raise ValueError(f"{what} must be a nonzero 3-vector")
    return v / norm


@dataclass(frozen=True)
class HalfSpace:
    """Solid occupying the points x with normal . x <= offset."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit(self.normal, "half-space normal"))
        object.__setattr__(self, "offset", float(self.offset))

    def translated(self, t):
        return HalfSpace(self.normal, self.offset + float(self.normal @ np.asarray(t)))


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.shape != (3,) or not np.all(np.isfinite(center)):
            raise ValueError("sphere center must be a finite 3-vector")
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    def translated(self, t):
        return Sphere(self.center + np.asarray(t, dtype=float), self.radius)


@dataclass(frozen=True)
class Box:
    center: np.ndarray
    rotation: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        rotation = np.asarray(self.rotation, dtype=float)
        he = np.asarray(self.half_extents, dtype=float)
        if center.shape != (3,) or rotation.shape != (3, 3) or he.shape != (3,):
            raise ValueError("box needs center (3,), rotation (3,3), half_extents (3,)")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > 1e-8:
            raise ValueError("box rotation must be orthonormal")
        if not (he > 0).all():
            raise ValueError("box half_extents must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "half_extents", he)

    def translated(self, t):
        return Box(self.center + np.asarray(t, dtype=float), self.rotation, self.half_extents)


@dataclass(frozen=True)
class Disk:
    """Capped cylinder attached to a backbone frame (axis = frame z)."""

    frame: object  # BodyFrame or anything with .position and .rotation
    radius: float
    half_thickness: float

    def __post_init__(self):
        if not (self.radius > 0 and self.half_thickness > 0):
            raise ValueError("disk radius and half_thickness must be positive")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "half_thickness", float(self.half_thickness))

    @property
    def position(self):
        return np.asarray(self.frame.position, dtype=float)

    @property
    def rotation(self):
        return np.asarray(self.frame.rotation, dtype=float)


@dataclass(frozen=True)
class ContactFrame:
    point: np.ndarray
    normal: np.ndarray
    t1: np.ndarray
    t2: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        """Columns (t1, t2, n): maps contact-frame coordinates to world."""
        return np.stack([self.t1, self.t2, self.normal], axis=1)

    def flipped(self) -> "ContactFrame":
        # swap tangents so the triad stays right-handed under normal reversal
        return ContactFrame(point=self.point, normal=-self.normal, t1=self.t2, t2=self.t1)


@dataclass(frozen=True)
class GeometryConfig:
    eps_sdf: float = 1e-12
    activation_distance: float = 0.005

    def __post_init__(self):
        if not self.eps_sdf > 0:
            raise ValueError("eps_sdf must be positive")
        if self.activation_distance < 0:
            raise ValueError("activation_distance must be nonnegative")


def sabs(s, eps):
    """Smooth |s|: sqrt(s^2 + eps)."""
    return np.sqrt(s * s + eps)


def smax(s1, s2, eps):
    """Smooth max: (s1 + s2 + sqrt((s1 - s2)^2 + eps)) / 2."""
    d = s1 - s2
    return 0.5 * (s1 + s2 + np.sqrt(d * d + eps))


def _cross3(a, b):
    # hand-rolled cross product; np.cross dominates profiles at this size
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def _tangent_basis(n):
    """Deterministic orthonormal completion with n = t1 x t2."""
    # seed with the world axis least aligned with n
    axis = int(np.argmin(np.abs(n)))
    seed = np.zeros(3)
    seed[axis] = 1.0
    t1 = _cross3(seed, n)
    t1 = t1 / np.linalg.norm(t1)
    t2 = _cross3(n, t1)
    return t1, t2


def _frame_from_normal(point, n):
    t1, t2 = _tangent_basis(n)
    return ContactFrame(point=np.asarray(point, float), normal=np.asarray(n, float), t1=t1, t2=t2)


# -- pair kernels -----------------------------------------------------------


def _disk_support_point(disk: Disk, direction):
    """Disk surface point extremal in -direction, and the support value."""
    a = disk.rotation[:, 2]
    na = float(direction @ a)
    n_perp = direction - na * a
    perp_norm = np.linalg.norm(n_perp)
    support = disk.radius * perp_norm + disk.half_thickness * abs(na)
    point = disk.position - disk.half_thickness * np.sign(na) * a
    if perp_norm > 1e-12:
        point = point - disk.radius * (n_perp / perp_norm)
    return point, support


def _gap_disk_halfspace(disk: Disk, hs: HalfSpace, cfg: GeometryConfig):
    n = hs.normal
    point, support = _disk_support_point(disk, n)
    g = float(n @ disk.position) - hs.offset - support
    return g, _frame_from_normal(point, n)


def _gap_sphere_halfspace(sphere: Sphere, hs: HalfSpace, cfg: GeometryConfig):
    n = hs.normal
    g = float(n @ sphere.center) - hs.offset - sphere.radius
    return g, _frame_from_normal(sphere.center - sphere.radius * n, n)


def _capped_cylinder_sdf_local(p, radius, half_thickness, eps):
    """Smooth signed distance (and gradient) from a point in disk coordinates
    to the capped-cylinder surface.

    Built from the classic radial/axial decomposition with every max, min,
    abs, and norm replaced by its sqrt-smoothed surrogate, so the value is
    analytic in p (complex inputs propagate derivatives exactly).
    """
    px, py, pz = p[0], p[1], p[2]
    rho = np.sqrt(px * px + py * py + eps)
    d_r = rho - radius
    az = np.sqrt(pz * pz + eps)
    d_z = az - half_thickness

    diff = d_r - d_z
    root_m = np.sqrt(diff * diff + eps)
    m = 0.5 * (d_r + d_z + root_m)
    root_i = np.sqrt(m * m + eps)
    inside = 0.5 * (m - root_i)

    root_r = np.sqrt(d_r * d_r + eps)
    pr = 0.5 * (d_r + root_r)
    root_z = np.sqrt(d_z * d_z + eps)
    pzp = 0.5 * (d_z + root_z)
    outside = np.sqrt(pr * pr + pzp * pzp + eps)

    sdf = inside + outside

    dm_ddr = 0.5 * (1.0 + diff / root_m)
    dm_ddz = 0.5 * (1.0 - diff / root_m)
    dinside_dm = 0.5 * (1.0 - m / root_i)
    dpr_ddr = 0.5 * (1.0 + d_r / root_r)
    dpzp_ddz = 0.5 * (1.0 + d_z / root_z)
    dsdf_ddr = dinside_dm * dm_ddr + (pr / outside) * dpr_ddr
    dsdf_ddz = dinside_dm * dm_ddz + (pzp / outside) * dpzp_ddz

    grad = np.stack(
        [dsdf_ddr * px / rho, dsdf_ddr * py / rho, dsdf_ddz * pz / az]
    )
    return sdf, grad


def _disk_sphere_core(disk: Disk, sphere: Sphere, cfg: GeometryConfig):
    R = disk.rotation
    p_local = R.T @ (sphere.center - disk.position)
    sdf, grad_local = _capped_cylinder_sdf_local(
        p_local, disk.radius, disk.half_thickness, cfg.eps_sdf
    )
    g = float(sdf) - sphere.radius
    return g, p_local, grad_local


def _gap_disk_sphere(disk: Disk, sphere: Sphere, cfg: GeometryConfig):
    g, _, grad_local = _disk_sphere_core(disk, sphere, cfg)
    grad_world = disk.rotation @ grad_local
    norm = np.linalg.norm(grad_world)
    if norm < 1e-12:  # pragma: no cover - degenerate deep-overlap pose
        n = disk.rotation[:, 2]
    else:
        n = -grad_world / norm  # from the sphere toward the disk
    point = sphere.center + sphere.radius * n
    return g, _frame_from_normal(point, n)


def _gap_disk_box(disk: Disk, box: Box, cfg: GeometryConfig):
    q = box.rotation.T @ (disk.position - box.center)
    he = box.half_extents
    excess = np.abs(q) - he
    if int((excess > 0.0).sum()) <= 1:
        # center sits in a face region (or inside the box): exact face contact
        axis = int(np.argmax(excess))
        sign = np.sign(q[axis]) or 1.0
        n = sign * box.rotation[:, axis]
        offset = float(n @ box.center) + he[axis]
        return _gap_disk_halfspace(disk, HalfSpace(n, offset), cfg)
    # edge/corner region: normal from the closest box feature to the center
    cp_local = np.clip(q, -he, he)
    cp = box.center + box.rotation @ cp_local
    diff = disk.position - cp
    dist = np.linalg.norm(diff)
    n = diff / dist
    point, support = _disk_support_point(disk, n)
    g = float(dist) - support
    return g, _frame_from_normal(point, n)


_KERNELS = {
    (Disk, HalfSpace): _gap_disk_halfspace,
    (Disk, Sphere): _gap_disk_sphere,
    (Disk, Box): _gap_disk_box,
    (Sphere, HalfSpace): _gap_sphere_halfspace,
}


def gap(shape_a, shape_b, config: GeometryConfig | None = None):
    """Signed surface gap and contact frame for a supported shape pair.

    Positive when separated, nonpositive in penetration.  The frame normal
    points from the environment shape into the robot shape for canonical
    (robot, environment) order; the swapped order returns the same gap with
    the normal reversed.
    """
    cfg = config if config is not None else GeometryConfig()
    kernel = _KERNELS.get((type(shape_a), type(shape_b)))
    if kernel is not None:
        return kernel(shape_a, shape_b, cfg)
    kernel = _KERNELS.get((type(shape_b), type(shape_a)))
    if kernel is not None:
        g, frame = kernel(shape_b, shape_a, cfg)
        return g, frame.flipped()
    raise UnsupportedGeometryError(
        f"no gap kernel for {type(shape_a).__name__}-{type(shape_b).__name__}"
    )


def gap_gradient(disk: Disk, sphere: Sphere, config: GeometryConfig | None = None) -> np.ndarray:
    """Gradient of the smooth disk-sphere gap in the disk pose.

    Returns a 6-vector: d(gap)/d(position) followed by d(gap)/d(rotation)
    for a body-frame rotation-vector perturbation R -> R expm(skew(delta)).
    """
    if not isinstance(disk, Disk) or not isinstance(sphere, Sphere):
        raise UnsupportedGeometryError("gap_gradient supports the Disk-Sphere pair")
    cfg = config if config is not None else GeometryConfig()
    _, p_local, grad_local = _disk_sphere_core(disk, sphere, cfg)
    # p_local = R^T (center - c):  d/dc = -R grad;  d/ddelta_k via
    # p_local -> (I - skew(delta)) p_local:  grad . (p x e_k) = e_k . (grad x p)
    d_pos = -(disk.rotation @ grad_local)
    d_rot = np.cross(grad_local, p_local)
    return np.concatenate([d_pos, d_rot])
