"""Constant-curvature kinematics and lumped dynamics of a chamber-actuated arm.

Each section of the arm carries three pneumatic chambers at 120 degree spacing
a fixed radial offset from the backbone.  Chamber elongations map linearly to
a per-section bend vector and arc length; poses along a section follow the
constant-curvature arc in closed form, and sections chain by composing tip
transforms.

All pose evaluations are analytic in the chamber coordinates: the closed
forms switch to truncated series near zero bend, so they stay smooth (and
complex-differentiable, which downstream gradient checks exploit) through the
straight configuration.  Body Jacobians are propagated alongside the poses in
forward mode rather than by finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidConfigurationError",
    "RobotParams",
    "RobotState",
    "BodyFrame",
    "FrameBatch",
    "check_configuration",
    "disk_layout",
    "pcc_forward_kinematics",
    "body_jacobian",
    "frame_batch",
    "mass_matrix",
    "gravity_load",
    "dynamics_terms",
    "mechanical_energy",
]

# Bend-angle-squared threshold below which series branches replace the closed
# arc forms.  The closed forms lose ~half their digits to cancellation near
# zero; at this seam both branches agree to ~1e-12.  The t2-derivatives
# cancel twice as hard, so they switch earlier.
SERIES_T2_THRESHOLD = 1e-4
SERIES_T2_THRESHOLD_D = 1e-2


class InvalidConfigurationError(ValueError):
    """Raised when a chamber is collapsed (total length nonpositive)."""


@dataclass(frozen=True)
class RobotParams:
    """Geometry, inertia, and load parameters of the arm.

    Lengths in meters, masses in kg; ``K`` and ``B`` act as scalar diagonal
    stiffness/damping on the chamber coordinates.  ``disks_per_section``
    counts interior contact frames; section end plates and the base plate are
    always present in addition.
    """

    sections: int = 3
    chambers_per_section: int = 3
    L0: float = 0.15
    chamber_offset: float = 0.02
    section_masses: tuple = (1.17, 0.54, 0.265)
    K: float = 265.0
    B: float = 125.0
    gravity: tuple = (0.0, 0.0, -9.81)
    disk_radius: float = 0.05
    disks_per_section: int = 6
    disk_half_thickness: float = 0.002

    def __post_init__(self):
        if self.sections < 1:
            raise ValueError("sections must be >= 1")
        if self.chambers_per_section != 3:
            raise ValueError("the curvature map requires exactly 3 chambers per section")
        if not (self.L0 > 0 and self.chamber_offset > 0):
            raise ValueError("L0 and chamber_offset must be positive")
        masses = tuple(float(m) for m in self.section_masses)
        if len(masses) != self.sections:
            raise ValueError(
                f"section_masses has {len(masses)} entries for {self.sections} sections"
            )
        if any(m <= 0 for m in masses):
            raise ValueError("section masses must be positive")
        if self.K < 0 or self.B < 0:
            raise ValueError("K and B must be nonnegative")
        if self.disks_per_section < 0:
            raise ValueError("disks_per_section must be nonnegative")
        if not (self.disk_radius > 0 and self.disk_half_thickness > 0):
            raise ValueError("disk dimensions must be positive")
        gravity = tuple(float(g) for g in self.gravity)
        if len(gravity) != 3 or not all(np.isfinite(gravity)):
            raise ValueError("gravity must be a finite 3-vector")
        object.__setattr__(self, "section_masses", masses)
        object.__setattr__(self, "gravity", gravity)

    @property
    def dof(self) -> int:
        return self.sections * self.chambers_per_section

    @property
    def gravity_vec(self) -> np.ndarray:
        return np.array(self.gravity)


@dataclass(frozen=True)
class RobotState:
    """Chamber elongations and their rates."""

    l: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        l = np.atleast_1d(np.asarray(self.l, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if l.ndim != 1 or v.shape != l.shape:
            raise ValueError("l and v must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(v))):
            raise ValueError("state must be finite")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class BodyFrame:
    """A material frame on the backbone, identified by section and arc fraction."""

    section: int
    arc_fraction: float
    position: np.ndarray
    rotation: np.ndarray
    jacobian: np.ndarray | None = None


def check_configuration(params: RobotParams, l) -> None:
    """Reject collapsed chambers (total length L0 + l must stay positive)."""
    l = np.asarray(l)
    if np.iscomplexobj(l):
        return  # derivative probe, validated at the real base point
    if l.shape != (params.dof,):
        raise ValueError(f"l has shape {l.shape}, expected ({params.dof},)")
    if not np.all(np.isfinite(l)):
        raise InvalidConfigurationError("chamber elongations must be finite")
    total = params.L0 + l
    if (total <= 0.0).any():
        worst = int(np.argmin(total))
        raise InvalidConfigurationError(
            f"chamber {worst} collapsed: L0 + l = {total[worst]:.6g} m"
        )


def _skew(v):
    return np.array(
        [
            [0.0 * v[0], -v[2], v[1]],
            [v[2], 0.0 * v[0], -v[0]],
            [-v[1], v[0], 0.0 * v[0]],
        ]
    )


def _curvature_map(params: RobotParams) -> np.ndarray:
    """Linear map from one section's chamber elongations to (bend_x, bend_y,
    mean elongation); chambers sit at 0/120/240 degrees at radius
    chamber_offset, and the longer side of the section lies on the outside of
    the bend."""
    d = params.chamber_offset
    s3 = np.sqrt(3.0)
    return np.array(
        [
            [-2.0 / (3 * d), 1.0 / (3 * d), 1.0 / (3 * d)],
            [0.0, -1.0 / (s3 * d), 1.0 / (s3 * d)],
            [1.0 / 3, 1.0 / 3, 1.0 / 3],
        ]
    )


# -- series-guarded arc coefficients ---------------------------------------
#
# With t2 the squared bend angle at the evaluation point, the arc transforms
# need (1 - cos s)/t2 and sin(s)/s for s = sqrt(t2), plus their t2-derivatives.
# Inputs may be complex (derivative probes); np.where keeps the excluded
# branch free of 0/0 by substituting a safe argument.


def _arc_ca(t2):
    t2 = np.asarray(t2)
    small = np.abs(t2) < SERIES_T2_THRESHOLD
    safe = np.where(small, 1.0, t2)
    s = np.sqrt(safe)
    closed = (1.0 - np.cos(s)) / safe
    series = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2**3 / 40320.0
    return np.where(small, series, closed)


def _arc_cb(t2):
    t2 = np.asarray(t2)
    small = np.abs(t2) < SERIES_T2_THRESHOLD
    safe = np.where(small, 1.0, t2)
    s = np.sqrt(safe)
    closed = np.sin(s) / s
    series = 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2**3 / 5040.0
    return np.where(small, series, closed)


def _arc_ca_d(t2):
    t2 = np.asarray(t2)
    small = np.abs(t2) < SERIES_T2_THRESHOLD_D
    safe = np.where(small, 1.0, t2)
    s = np.sqrt(safe)
    closed = (s * np.sin(s) - 2.0 + 2.0 * np.cos(s)) / (2.0 * safe * safe)
    series = -1.0 / 24 + t2 / 360.0 - t2 * t2 / 13440.0 + t2**3 / 907200.0
    return np.where(small, series, closed)


def _arc_cb_d(t2):
    t2 = np.asarray(t2)
    small = np.abs(t2) < SERIES_T2_THRESHOLD_D
    safe = np.where(small, 1.0, t2)
    s = np.sqrt(safe)
    closed = (s * np.cos(s) - np.sin(s)) / (2.0 * safe * s)
    series = -1.0 / 6 + t2 / 60.0 - t2 * t2 / 1680.0 + t2**3 / 90720.0
    return np.where(small, series, closed)


def _section_frames(wx, wy, ell, fractions, want_derivs):
    """Local poses at the given arc fractions of one section.

    Returns (p, R) with shapes (F, 3) and (F, 3, 3); with want_derivs also
    (dp, dR) holding partials w.r.t. (wx, wy, ell) in a trailing axis.
    """
    f = np.asarray(fractions, dtype=float)
    dtype = np.result_type(np.asarray(wx).dtype, np.asarray(ell).dtype, np.float64)
    f2 = f * f
    k2 = wx * wx + wy * wy
    t2 = f2 * k2
    ca = _arc_ca(t2)
    cb = _arc_cb(t2)

    p = np.stack([ell * f2 * wx * ca, ell * f2 * wy * ca, ell * f * cb], axis=-1)

    K1 = _skew(np.array([-wy, wx, 0.0 * wx], dtype=dtype))
    K1sq = K1 @ K1
    eye = np.eye(3, dtype=dtype)
    R = eye + (cb * f)[..., None, None] * K1 + (ca * f2)[..., None, None] * K1sq

    if not want_derivs:
        return p, R, None, None

    cad = _arc_ca_d(t2)
    cbd = _arc_cb_d(t2)

    # position partials w.r.t. (wx, wy, ell); axes (F, xyz, param)
    dp = np.empty(p.shape + (3,), dtype=dtype)
    dp[..., 0, 0] = ell * f2 * (ca + 2.0 * f2 * wx * wx * cad)
    dp[..., 1, 0] = 2.0 * ell * f2 * f2 * wx * wy * cad
    dp[..., 2, 0] = 2.0 * ell * f * f2 * wx * cbd
    dp[..., 0, 1] = 2.0 * ell * f2 * f2 * wx * wy * cad
    dp[..., 1, 1] = ell * f2 * (ca + 2.0 * f2 * wy * wy * cad)
    dp[..., 2, 1] = 2.0 * ell * f * f2 * wy * cbd
    dp[..., 0, 2] = f2 * wx * ca
    dp[..., 1, 2] = f2 * wy * ca
    dp[..., 2, 2] = f * cb

    E_wx = _skew(np.array([0.0, 1.0, 0.0]))
    E_wy = _skew(np.array([-1.0, 0.0, 0.0]))
    AC_wx = E_wx @ K1 + K1 @ E_wx
    AC_wy = E_wy @ K1 + K1 @ E_wy

    dt2_wx = 2.0 * f2 * wx
    dt2_wy = 2.0 * f2 * wy
    dR = np.zeros(R.shape + (3,), dtype=dtype)
    dR[..., 0] = (
        (cbd * dt2_wx * f)[..., None, None] * K1
        + (cb * f)[..., None, None] * E_wx
        + (cad * dt2_wx * f2)[..., None, None] * K1sq
        + (ca * f2)[..., None, None] * AC_wx
    )
    dR[..., 1] = (
        (cbd * dt2_wy * f)[..., None, None] * K1
        + (cb * f)[..., None, None] * E_wy
        + (cad * dt2_wy * f2)[..., None, None] * K1sq
        + (ca * f2)[..., None, None] * AC_wy
    )
    # arc length does not enter the rotation
    return p, R, dp, dR


def _frame_queries(params: RobotParams, l, queries, want_jacobians=False):
    """Poses for (section, arc_fraction) queries, chaining section transforms.

    With want_jacobians, also returns d(position)/dl of shape (F, 3, n) and
    d(rotation)/dl of shape (F, 3, 3, n), both propagated analytically.
    """
    l = np.atleast_1d(np.asarray(l))
    n = params.dof
    if l.shape != (n,):
        raise ValueError(f"l has shape {l.shape}, expected ({n},)")
    dtype = np.result_type(l.dtype, np.float64)

    sec_idx = np.array([int(q[0]) for q in queries])
    fracs = np.array([float(q[1]) for q in queries])
    if sec_idx.size and (sec_idx.min() < 0 or sec_idx.max() >= params.sections):
        raise ValueError("query section index out of range")
    if fracs.size and (fracs.min() < 0.0 or fracs.max() > 1.0):
        raise ValueError("arc_fraction must lie in [0, 1]")

    T = _curvature_map(params)
    F = len(queries)
    pos = np.zeros((F, 3), dtype)
    rot = np.zeros((F, 3, 3), dtype)
    jac = np.zeros((F, 3, n), dtype) if want_jacobians else None
    rotg = np.zeros((F, 3, 3, n), dtype) if want_jacobians else None

    base_p = np.zeros(3, dtype)
    base_Q = np.eye(3, dtype=dtype)
    if want_jacobians:
        dP = np.zeros((3, n), dtype)
        dQ = np.zeros((3, 3, n), dtype)

    for s in range(params.sections):
        cols = slice(3 * s, 3 * s + 3)
        cw = T @ l[cols]
        wx, wy = cw[0], cw[1]
        ell = params.L0 + cw[2]

        sel = np.nonzero(sec_idx == s)[0]
        f_eval = np.concatenate([fracs[sel], [1.0]])
        p_loc, R_loc, dp_dc, dR_dc = _section_frames(wx, wy, ell, f_eval, want_jacobians)
        if want_jacobians:
            dp_dls = dp_dc @ T  # chain (wx, wy, ell) -> chamber coordinates
            dR_dls = dR_dc @ T

        if sel.size:
            q_p, q_R = p_loc[:-1], R_loc[:-1]
            pos[sel] = base_p + q_p @ base_Q.T
            rot[sel] = np.einsum("ab,fbc->fac", base_Q, q_R)
            if want_jacobians:
                tmp = dP[None, :, :] + np.einsum("abk,fb->fak", dQ, q_p)
                tmp[:, :, cols] += np.einsum("ab,fbk->fak", base_Q, dp_dls[:-1])
                jac[sel] = tmp
                tmpR = np.einsum("abk,fbc->fack", dQ, q_R)
                tmpR[:, :, :, cols] += np.einsum("ab,fbck->fack", base_Q, dR_dls[:-1])
                rotg[sel] = tmpR

        p_t, R_t = p_loc[-1], R_loc[-1]
        if want_jacobians:
            new_dP = dP + np.einsum("abk,b->ak", dQ, p_t)
            new_dP[:, cols] += base_Q @ dp_dls[-1]
            new_dQ = np.einsum("abk,bc->ack", dQ, R_t)
            new_dQ[:, :, cols] += np.einsum("ab,bck->ack", base_Q, dR_dls[-1])
            dP, dQ = new_dP, new_dQ
        base_p = base_p + base_Q @ p_t
        base_Q = base_Q @ R_t

    return pos, rot, jac, rotg


@dataclass(frozen=True)
class FrameBatch:
    """Poses (and optionally derivatives) of several backbone frames at once."""

    sections: np.ndarray
    fractions: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray
    jacobians: np.ndarray | None
    rotation_gradients: np.ndarray | None

    def __len__(self):
        return self.sections.shape[0]

    def frame(self, i: int) -> BodyFrame:
        return BodyFrame(
            section=int(self.sections[i]),
            arc_fraction=float(self.fractions[i]),
            position=self.positions[i],
            rotation=self.rotations[i],
            jacobian=None if self.jacobians is None else self.jacobians[i],
        )

    def point_jacobian(self, i: int, world_point) -> np.ndarray:
        """Jacobian of a material point rigidly attached to frame i."""
        if self.jacobians is None or self.rotation_gradients is None:
            raise ValueError("batch was built without derivatives")
        offset = self.rotations[i].T @ (np.asarray(world_point) - self.positions[i])
        return self.jacobians[i] + np.einsum(
            "abk,b->ak", self.rotation_gradients[i], offset
        )


def disk_layout(params: RobotParams):
    """(section, arc_fraction) placement of all contact plates.

    One base plate, then per section the interior disks at evenly spaced
    fractions plus the end plate at the section tip.
    """
    queries = [(0, 0.0)]
    interior = np.linspace(0.0, 1.0, params.disks_per_section + 2)[1:-1]
    for s in range(params.sections):
        queries.extend((s, float(f)) for f in interior)
        queries.append((s, 1.0))
    return queries


def pcc_forward_kinematics(params: RobotParams, l, section: int, arc_fraction: float) -> BodyFrame:
    """Pose of the frame at the given arc fraction of a section."""
    check_configuration(params, l)
    pos, rot, _, _ = _frame_queries(params, l, [(section, arc_fraction)])
    return BodyFrame(
        section=int(section),
        arc_fraction=float(arc_fraction),
        position=pos[0],
        rotation=rot[0],
        jacobian=None,
    )


def body_jacobian(params: RobotParams, l, section: int, arc_fraction: float) -> np.ndarray:
    """World linear velocity of the frame origin per unit chamber rate, 3 x n."""
    check_configuration(params, l)
    _, _, jac, _ = _frame_queries(params, l, [(section, arc_fraction)], want_jacobians=True)
    return jac[0]


def frame_batch(params: RobotParams, l, queries=None, derivatives: bool = False) -> FrameBatch:
    """Evaluate many frames in one pass; queries default to disk_layout."""
    check_configuration(params, l)
    if queries is None:
        queries = disk_layout(params)
    pos, rot, jac, rotg = _frame_queries(params, l, queries, want_jacobians=derivatives)
    return FrameBatch(
        sections=np.array([q[0] for q in queries]),
        fractions=np.array([q[1] for q in queries]),
        positions=pos,
        rotations=rot,
        jacobians=jac,
        rotation_gradients=rotg,
    )


# -- dynamics ---------------------------------------------------------------


def _mass_point_jacobians(params: RobotParams, l):
    queries = [(s, 1.0) for s in range(params.sections)]
    _, _, jac, _ = _frame_queries(params, l, queries, want_jacobians=True)
    return jac


def mass_matrix(params: RobotParams, l) -> np.ndarray:
    """Configuration-dependent inertia from lumped masses at section tips."""
    check_configuration(params, l)
    jac = _mass_point_jacobians(params, l)
    masses = np.array(params.section_masses)
    M = np.einsum("p,pik,pim->km", masses, jac, jac)
    return 0.5 * (M + M.T)


def gravity_load(params: RobotParams, l) -> np.ndarray:
    """Generalized force of gravity on the lumped masses."""
    check_configuration(params, l)
    jac = _mass_point_jacobians(params, l)
    masses = np.array(params.section_masses)
    return np.einsum("p,pik,i->k", masses, jac, params.gravity_vec)


def dynamics_terms(params: RobotParams, state: RobotState, tau=None):
    """Inertia matrix and the non-contact generalized force.

    f_free collects actuation, elastic, damping, and gravity terms:
    tau - K l - B v + g(l).  Velocity-product terms are omitted by model
    choice, so f_free is affine in (l memberwise through gravity, v).
    """
    check_configuration(params, state.l)
    jac = _mass_point_jacobians(params, state.l)
    masses = np.array(params.section_masses)
    M = np.einsum("p,pik,pim->km", masses, jac, jac)
    M = 0.5 * (M + M.T)
    grav = np.einsum("p,pik,i->k", masses, jac, params.gravity_vec)
    if tau is None:
        tau = np.zeros(params.dof)
    else:
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (params.dof,):
            raise ValueError(f"tau has shape {tau.shape}, expected ({params.dof},)")
    f_free = tau - params.K * state.l - params.B * state.v + grav
    return M, f_free


def mechanical_energy(params: RobotParams, state: RobotState) -> float:
    """Kinetic plus elastic plus gravitational potential energy."""
    M = mass_matrix(params, state.l)
    queries = [(s, 1.0) for s in range(params.sections)]
    pos, _, _, _ = _frame_queries(params, state.l, queries)
    masses = np.array(params.section_masses)
    kinetic = 0.5 * float(state.v @ M @ state.v)
    elastic = 0.5 * params.K * float(state.l @ state.l)
    potential = -float(masses @ (pos @ params.gravity_vec))
    return kinetic + elastic + potential
