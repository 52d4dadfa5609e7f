"""Stacking active contacts into one monolithic complementarity problem.

Every active contact contributes a block of unknowns: a normal impulse, one
impulse per friction facet, and a slip-speed slack that closes the
polyhedral friction cone.  The blocks couple through the inverse inertia
(two contacts on the same body feel each other), so the assembled matrix is
dense over the contact set.  Solved impulses map back onto generalized
velocities with :func:`apply_impulses`.

Unknowns are impulses (N s).  The velocity-level model is purely inelastic:
normal impulses only stop approach, they never bounce.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .lcp import LcpProblem

__all__ = [
    "FrictionBasis",
    "ContactBlockLayout",
    "ContactCandidate",
    "AssembledLcp",
    "friction_basis",
    "assemble_global_lcp",
    "apply_impulses",
    "classify_mode",
]

# Frame tolerance: contact frames come from cross products of unit vectors,
# so anything worse than this indicates a construction bug, not roundoff.
_FRAME_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class FrictionBasis:
    """Unit tangent-plane directions spanning a polyhedral friction cone.

    ``directions`` has shape (2, facet_count); column k points along facet k
    in the tangent plane of the contact.  The facet count must be even so
    every direction has its antipode in the set, which keeps the cone
    symmetric and lets sticking contacts transmit zero net tangential
    impulse.
    """

    directions: np.ndarray
    mu: float

    def __post_init__(self):
        D = np.asarray(self.directions, dtype=float)
        if D.ndim != 2 or D.shape[0] != 2:
            raise ValueError(f"directions must be 2 x r, got shape {D.shape}")
        r = D.shape[1]
        if r < 2 or r % 2 != 0:
            raise ValueError(f"facet count must be even and >= 2, got {r}")
        if not np.all(np.isfinite(D)):
            raise ValueError("directions must be finite")
        norms = np.linalg.norm(D, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("directions must be unit columns")
        if not (np.isfinite(self.mu) and self.mu >= 0.0):
            raise ValueError(f"friction coefficient must be >= 0, got {self.mu}")
        object.__setattr__(self, "directions", D)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def facet_count(self) -> int:
        return self.directions.shape[1]


def friction_basis(facet_count: int, mu: float) -> FrictionBasis:
    """Evenly spaced facets at angles 2 pi k / facet_count in the tangent plane."""
    if facet_count < 2 or facet_count % 2 != 0:
        raise ValueError(f"facet count must be even and >= 2, got {facet_count}")
    angles = 2.0 * np.pi * np.arange(facet_count) / facet_count
    D = np.vstack([np.cos(angles), np.sin(angles)])
    # Snap the zeros that are exact on the axis-aligned facets; keeps the
    # four-facet basis literally (1,0),(0,1),(-1,0),(0,-1).
    D[np.abs(D) < 1e-15] = 0.0
    return FrictionBasis(directions=D, mu=mu)


@dataclass(frozen=True)
class ContactCandidate:
    """One potential contact, expressed at a world point on a robot disk.

    ``frame`` is a 3x3 rotation whose columns are (tangent1, tangent2,
    normal); the normal points from the environment shape toward the disk.
    ``world_jacobian`` maps generalized velocity to the world velocity of
    the contact point (3 x n).  ``gap`` is the signed separation in meters,
    negative when penetrating.
    """

    gap: float
    frame: np.ndarray
    world_jacobian: np.ndarray
    basis: FrictionBasis
    disk_index: int = -1
    shape_label: str = ""

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        J = np.asarray(self.world_jacobian, dtype=float)
        if frame.shape != (3, 3):
            raise ValueError(f"frame must be 3x3, got shape {frame.shape}")
        if np.abs(frame.T @ frame - np.eye(3)).max() > _FRAME_ORTHO_TOL:
            raise ValueError("frame columns must be orthonormal")
        if J.ndim != 2 or J.shape[0] != 3:
            raise ValueError(f"world_jacobian must be 3 x n, got shape {J.shape}")
        if not (np.isfinite(self.gap) and np.all(np.isfinite(J))):
            raise ValueError("candidate data must be finite")
        object.__setattr__(self, "gap", float(self.gap))
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "world_jacobian", J)

    @property
    def contact_jacobian(self) -> np.ndarray:
        """Jacobian in the contact frame: rows (tangent1, tangent2, normal)."""
        return self.frame.T @ self.world_jacobian

    @property
    def block_size(self) -> int:
        return self.basis.facet_count + 2


@dataclass(frozen=True)
class ContactBlockLayout:
    """Offsets of each candidate's (normal, facets, slip) triple in the stack.

    Per candidate the variables are contiguous: one normal impulse, then
    ``facet_count`` facet impulses, then one slip-speed slack.
    """

    offsets: tuple
    facet_counts: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        offsets = tuple(int(o) for o in self.offsets)
        counts = tuple(int(r) for r in self.facet_counts)
        if len(offsets) != len(counts):
            raise ValueError("offsets and facet_counts must have equal length")
        expected = 0
        for o, r in zip(offsets, counts):
            if o != expected:
                raise ValueError("blocks must be contiguous and non-overlapping")
            expected = o + r + 2
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "facet_counts", counts)
        object.__setattr__(self, "dim", expected)

    @classmethod
    def for_candidates(cls, candidates) -> "ContactBlockLayout":
        offsets, counts, at = [], [], 0
        for cand in candidates:
            offsets.append(at)
            counts.append(cand.basis.facet_count)
            at += cand.block_size
        return cls(offsets=tuple(offsets), facet_counts=tuple(counts))

    @property
    def candidate_count(self) -> int:
        return len(self.offsets)

    def block_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.facet_counts[i] + 2)

    def normal_index(self, i: int) -> int:
        return self.offsets[i]

    def friction_slice(self, i: int) -> slice:
        return slice(self.offsets[i] + 1, self.offsets[i] + 1 + self.facet_counts[i])

    def slack_index(self, i: int) -> int:
        return self.offsets[i] + 1 + self.facet_counts[i]

    @property
    def normal_indices(self) -> np.ndarray:
        """Indices of all normal-impulse variables in the stacked vector."""
        return np.asarray(self.offsets, dtype=int)

    def split_impulses(self, z):
        """Split a stacked vector into per-candidate (normal, facets, slip)."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"z has shape {z.shape}, expected ({self.dim},)")
        out = []
        for i in range(self.candidate_count):
            out.append(
                (
                    float(z[self.normal_index(i)]),
                    z[self.friction_slice(i)].copy(),
                    float(z[self.slack_index(i)]),
                )
            )
        return out


@dataclass(frozen=True)
class AssembledLcp:
    """The stacked problem plus the bookkeeping needed to interpret it."""

    problem: LcpProblem
    layout: ContactBlockLayout
    candidates: tuple
    normal_rows: np.ndarray  # contact-frame normal Jacobian rows, m x n

    def __post_init__(self):
        if self.problem.dim != self.layout.dim:
            raise ValueError("problem dimension does not match layout")
        if self.normal_rows.shape[0] != self.layout.candidate_count:
            raise ValueError("one normal row per candidate required")


def assemble_global_lcp(
    mass_matrix,
    f_free,
    velocity,
    candidates,
    h: float,
    alpha: float = 0.2,
) -> AssembledLcp:
    """Build the stacked contact LCP for one velocity-level time step.

    ``f_free`` collects every non-contact generalized force (actuation,
    elasticity, damping, gravity); ``velocity`` is the generalized velocity
    entering the step.  The matrix couples all candidates through the
    inverse of ``mass_matrix``; the right-hand side is the contact-frame
    free velocity, with ``(alpha / h) * gap`` added to penetrating normal
    rows so existing overlap is pushed back out over the next steps.

    Solving the returned problem yields impulses such that post-step normal
    velocities are nonnegative (up to stabilization) and facet impulses
    stay inside the friction cone.
    """
    M = np.asarray(mass_matrix, dtype=float)
    f_free = np.asarray(f_free, dtype=float)
    v = np.asarray(velocity, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"mass matrix must be square, got shape {M.shape}")
    n = M.shape[0]
    if f_free.shape != (n,) or v.shape != (n,):
        raise ValueError("f_free and velocity must match the mass matrix dimension")
    if not h > 0.0:
        raise ValueError(f"step size must be positive, got {h}")
    if alpha < 0.0:
        raise ValueError(f"stabilization gain must be >= 0, got {alpha}")

    cands = tuple(candidates)
    layout = ContactBlockLayout.for_candidates(cands)
    for cand in cands:
        if cand.world_jacobian.shape[1] != n:
            raise ValueError("candidate Jacobian width must match the mass matrix")
    if not cands:
        empty = LcpProblem(A=np.zeros((0, 0)), b=np.zeros(0))
        return AssembledLcp(
            problem=empty, layout=layout, candidates=cands,
            normal_rows=np.zeros((0, n)),
        )

    factor = scipy.linalg.cho_factor(M, lower=True)
    vel_free = v + h * scipy.linalg.cho_solve(factor, f_free)

    # One dense kernel J M^-1 J^T over all contact-frame rows; per-pair
    # blocks are 3x3 slices of it.
    J_all = np.vstack([cand.contact_jacobian for cand in cands])
    kernel = J_all @ scipy.linalg.cho_solve(factor, J_all.T)
    nu_free = J_all @ vel_free

    # Scatter operators: columns of E turn stacked (f_n, beta, gamma) blocks
    # into contact-frame forces, rows of G read contact-frame velocities out
    # into the w rows.  A single pair of BLAS products then covers every
    # candidate pair at once.
    m = len(cands)
    E = np.zeros((3 * m, layout.dim))
    G = np.zeros((layout.dim, 3 * m))
    for i, ci in enumerate(cands):
        Di = ci.basis.directions
        ni, fi = layout.normal_index(i), layout.friction_slice(i)
        E[3 * i + 2, ni] = 1.0
        E[3 * i : 3 * i + 2, fi] = Di
        G[ni, 3 * i + 2] = 1.0
        G[fi, 3 * i : 3 * i + 2] = Di.T

    A = G @ kernel @ E
    b = G @ nu_free
    for i, ci in enumerate(cands):
        ni, fi, si = layout.normal_index(i), layout.friction_slice(i), layout.slack_index(i)
        if ci.gap < 0.0:
            b[ni] += (alpha / h) * ci.gap
        # Cone closure: slip slack feeds the facet rows, the cone row ties
        # total facet impulse to mu times the normal impulse.
        A[fi, si] = 1.0
        A[si, ni] = ci.basis.mu
        A[si, fi] = -1.0

    return AssembledLcp(
        problem=LcpProblem(A=A, b=b),
        layout=layout,
        candidates=cands,
        normal_rows=J_all[2::3].copy(),
    )


def apply_impulses(mass_matrix, candidates, z, velocity, h: float, f_free):
    """Advance generalized velocity by the free forces plus contact impulses.

    ``z`` is a solved stacked impulse vector laid out as in
    :func:`assemble_global_lcp` for the same candidate list.
    """
    M = np.asarray(mass_matrix, dtype=float)
    v = np.asarray(velocity, dtype=float)
    f_free = np.asarray(f_free, dtype=float)
    z = np.asarray(z, dtype=float)
    cands = tuple(candidates)
    layout = ContactBlockLayout.for_candidates(cands)
    if z.shape != (layout.dim,):
        raise ValueError(f"z has shape {z.shape}, expected ({layout.dim},)")

    impulse = h * f_free
    for i, cand in enumerate(cands):
        force_c = np.empty(3)
        force_c[:2] = cand.basis.directions @ z[layout.friction_slice(i)]
        force_c[2] = z[layout.normal_index(i)]
        impulse = impulse + cand.contact_jacobian.T @ force_c
    factor = scipy.linalg.cho_factor(M, lower=True)
    return v + scipy.linalg.cho_solve(factor, impulse)


def classify_mode(
    normal_impulse: float,
    slip_speed: float,
    *,
    impulse_tol: float = 1e-9,
    slip_tol: float = 1e-8,
) -> str:
    """Label a solved contact block: 'separated', 'sticking', or 'sliding'."""
    if normal_impulse <= impulse_tol:
        return "separated"
    return "sliding" if slip_speed > slip_tol else "sticking"
