"""Pre-solver conditioning for stacked contact problems.

Multi-contact matrices come in poorly scaled: stacked disks pressing on the
same plane contribute nearly dependent normal rows, impulse magnitudes span
orders of magnitude, and redundant constraints make the matrix singular.
Three independent stages repair this before the solver runs:

1. rank selection drops candidates whose normal rows are linearly
   dependent on the retained ones in the inertia-whitened metric, found by
   column-pivoted QR;
2. equilibration iteratively rescales rows and columns toward unit l2
   norm;
3. a tiny diagonal shift on the normal-impulse entries gives the scaled
   matrix strictly positive pivots there.

Every stage records exact bookkeeping, so solutions of the scaled reduced
problem map back to physical units without approximation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .contact_assembly import ContactBlockLayout
from .lcp import LcpProblem, LcpSolution, SolverConfig, solve_lcp

__all__ = [
    "ConditioningConfig",
    "ConditioningRecord",
    "WhitenedNormals",
    "whiten_normals",
    "rank_select",
    "ruiz_equilibrate",
    "tikhonov_normals",
    "condition_and_solve",
]


@dataclass(frozen=True)
class ConditioningConfig:
    """Stage parameters and per-stage enable flags."""

    eps_rank: float = 1e-8
    ruiz_iterations: int = 5
    eps_tikhonov: float = 1e-10
    rank_enabled: bool = True
    ruiz_enabled: bool = True
    tikhonov_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.eps_rank < 1.0:
            raise ValueError(f"eps_rank must lie in (0, 1), got {self.eps_rank}")
        if self.ruiz_iterations < 0:
            raise ValueError("ruiz_iterations must be nonnegative")
        if self.eps_tikhonov < 0.0:
            raise ValueError("eps_tikhonov must be nonnegative")


@dataclass(frozen=True)
class WhitenedNormals:
    """Normal Jacobian rows expressed in the inertia-whitened metric.

    Row i is the i-th contact's normal row times the inverse transposed
    Cholesky factor of the mass matrix, so row inner products reproduce the
    normal-normal coupling of the assembled problem.
    """

    matrix: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if not np.all(np.isfinite(S)):
            raise ValueError("whitened rows must be finite")
        object.__setattr__(self, "matrix", S)


@dataclass(frozen=True)
class ConditioningRecord:
    """What the pipeline did, with enough detail to interpret the solution.

    ``keep_set`` lists retained candidate indices in pivot order;
    ``row_scale`` and ``col_scale`` are the accumulated equilibration
    diagonals over the reduced system; ``normal_index_set`` locates the
    normal-impulse variables inside the scaled reduced system.
    """

    keep_set: tuple
    row_scale: np.ndarray
    col_scale: np.ndarray
    eps_applied: float
    normal_index_set: tuple

    def __post_init__(self):
        keep = tuple(int(i) for i in self.keep_set)
        if len(set(keep)) != len(keep):
            raise ValueError("keep_set must not contain duplicates")
        sr = np.atleast_1d(np.asarray(self.row_scale, dtype=float))
        sc = np.atleast_1d(np.asarray(self.col_scale, dtype=float))
        if sr.shape != sc.shape:
            raise ValueError("row and column scalings must have equal length")
        if sr.size and not (np.all(sr > 0.0) and np.all(sc > 0.0)):
            raise ValueError("scalings must be strictly positive")
        object.__setattr__(self, "keep_set", keep)
        object.__setattr__(self, "row_scale", sr)
        object.__setattr__(self, "col_scale", sc)
        object.__setattr__(self, "eps_applied", float(self.eps_applied))
        object.__setattr__(
            self, "normal_index_set", tuple(int(i) for i in self.normal_index_set)
        )

    def to_json_dict(self) -> dict:
        """Plain-types view for per-step diagnostics logs."""
        return {
            "keep_set": list(self.keep_set),
            "row_scale": [float(x) for x in self.row_scale],
            "col_scale": [float(x) for x in self.col_scale],
            "eps_applied": float(self.eps_applied),
            "normal_index_set": list(self.normal_index_set),
        }


def whiten_normals(normal_rows, mass_matrix) -> WhitenedNormals:
    """Map normal Jacobian rows into the inertia-whitened metric.

    With the mass matrix factored as L L^T, returns rows times L^{-T}; the
    Gram matrix of the result equals J_n M^{-1} J_n^T.
    """
    J_n = np.atleast_2d(np.asarray(normal_rows, dtype=float))
    M = np.asarray(mass_matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"mass matrix must be square, got shape {M.shape}")
    if J_n.shape[1] != M.shape[0]:
        raise ValueError("normal rows must match the mass matrix dimension")
    L = scipy.linalg.cholesky(M, lower=True)
    S = scipy.linalg.solve_triangular(L, J_n.T, lower=True).T
    return WhitenedNormals(matrix=S)


def rank_select(whitened: WhitenedNormals, eps_rank: float):
    """Indices of a maximal independent subset of whitened rows.

    Column-pivoted QR of the transposed stack orders candidates by
    remaining leverage; rows whose pivot magnitude falls to eps_rank
    relative to the first pivot are redundant and dropped.  Returns kept
    row indices in pivot order; empty when every row is zero.
    """
    if not 0.0 < eps_rank < 1.0:
        raise ValueError(f"eps_rank must lie in (0, 1), got {eps_rank}")
    S = whitened.matrix
    if S.shape[0] == 0:
        return []
    _, R, pivots = scipy.linalg.qr(S.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return []
    threshold = eps_rank * diag[0]
    return [int(pivots[k]) for k in range(diag.size) if diag[k] > threshold]


def ruiz_equilibrate(A, b, iterations: int):
    """Iteratively rescale rows and columns toward unit l2 norm.

    Each iteration divides every row and column by the square root of its
    current l2 norm (zero rows and columns keep scale 1), applying both
    scalings simultaneously.  Returns (A_scaled, b_scaled, row_scale,
    col_scale) with A_scaled = diag(row_scale) A diag(col_scale) and
    b_scaled = row_scale * b.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if b.shape != (A.shape[0],):
        raise ValueError("vector length must match the matrix")
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")

    n = A.shape[0]
    row_scale = np.ones(n)
    col_scale = np.ones(n)
    A_scaled = A.copy()
    for _ in range(iterations):
        row_norms = np.linalg.norm(A_scaled, axis=1)
        col_norms = np.linalg.norm(A_scaled, axis=0)
        dr = 1.0 / np.sqrt(np.where(row_norms > 0.0, row_norms, 1.0))
        dc = 1.0 / np.sqrt(np.where(col_norms > 0.0, col_norms, 1.0))
        A_scaled = dr[:, None] * A_scaled * dc[None, :]
        row_scale *= dr
        col_scale *= dc
    return A_scaled, row_scale * b, row_scale, col_scale


def tikhonov_normals(A_scaled, normal_indices, eps: float) -> np.ndarray:
    """Add eps to the diagonal entries listed in normal_indices.

    Every other entry of the returned copy is bit-identical to the input.
    """
    A = np.asarray(A_scaled, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    idx = [int(i) for i in normal_indices]
    if len(set(idx)) != len(idx):
        raise ValueError("normal_indices must not contain duplicates")
    for i in idx:
        if not 0 <= i < A.shape[0]:
            raise ValueError(f"normal index {i} out of range for dimension {A.shape[0]}")
    out = A.copy()
    if idx:
        out[idx, idx] += eps
    return out


def _reduced_layout(layout: ContactBlockLayout, keep_sorted):
    counts = tuple(layout.facet_counts[i] for i in keep_sorted)
    offsets = []
    at = 0
    for r in counts:
        offsets.append(at)
        at += r + 2
    return ContactBlockLayout(offsets=tuple(offsets), facet_counts=counts)


def condition_and_solve(
    problem: LcpProblem,
    layout: ContactBlockLayout,
    config: ConditioningConfig | None = None,
    solver: SolverConfig | None = None,
    whitened: WhitenedNormals | None = None,
    warm_start=None,
):
    """Run the enabled conditioning stages, solve, and unscale.

    ``whitened`` feeds the rank stage; without it (or with the stage
    disabled) every candidate is kept.  ``warm_start``, when given, is a
    full-width impulse vector in physical units, typically the previous
    step's solution.

    Returns ``(solution, record)``.  The solution's ``z`` and ``w`` cover
    the full variable set in physical units, with pruned candidates at
    zero impulse; ``residual`` is the complementarity residual of the
    retained sub-system (the system actually solved), and ``converged`` is
    the scaled solve's certificate.
    """
    cfg = config if config is not None else ConditioningConfig()
    scfg = solver if solver is not None else SolverConfig()
    m = layout.candidate_count
    if problem.dim != layout.dim:
        raise ValueError("problem dimension does not match layout")
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float)
        if warm_start.shape != (layout.dim,):
            raise ValueError(
                f"warm_start has shape {warm_start.shape}, expected ({layout.dim},)"
            )

    if cfg.rank_enabled and whitened is not None and m > 0:
        if whitened.matrix.shape[0] != m:
            raise ValueError("whitened rows must match the candidate count")
        keep = rank_select(whitened, cfg.eps_rank)
    else:
        keep = list(range(m))

    keep_sorted = sorted(keep)
    var_idx = np.concatenate(
        [np.arange(layout.block_slice(i).start, layout.block_slice(i).stop) for i in keep_sorted]
    ).astype(int) if keep_sorted else np.zeros(0, dtype=int)
    reduced = _reduced_layout(layout, keep_sorted)

    A_red = problem.A[np.ix_(var_idx, var_idx)]
    b_red = problem.b[var_idx]

    if cfg.ruiz_enabled:
        A_s, b_s, row_scale, col_scale = ruiz_equilibrate(A_red, b_red, cfg.ruiz_iterations)
    else:
        row_scale = np.ones(reduced.dim)
        col_scale = np.ones(reduced.dim)
        A_s, b_s = A_red, b_red

    eps_applied = cfg.eps_tikhonov if cfg.tikhonov_enabled else 0.0
    normal_idx = tuple(int(i) for i in reduced.normal_indices)
    A_s = tikhonov_normals(A_s, normal_idx, eps_applied)

    ws_scaled = None
    if warm_start is not None and reduced.dim > 0:
        ws_scaled = warm_start[var_idx] / col_scale

    scaled_sol = solve_lcp(LcpProblem(A=A_s, b=b_s), scfg, warm_start=ws_scaled)

    z_full = np.zeros(layout.dim)
    if reduced.dim > 0:
        z_full[var_idx] = col_scale * scaled_sol.z
    w_full = problem.A @ z_full + problem.b

    if reduced.dim > 0:
        w_kept = w_full[var_idx]
        z_kept = z_full[var_idx]
        residual = float(np.abs(z_kept + w_kept - np.hypot(z_kept, w_kept)).max())
    else:
        residual = 0.0

    record = ConditioningRecord(
        keep_set=tuple(keep),
        row_scale=row_scale,
        col_scale=col_scale,
        eps_applied=eps_applied,
        normal_index_set=normal_idx,
    )
    solution = LcpSolution(
        z=z_full,
        w=w_full,
        residual=residual,
        iterations=scaled_sol.iterations,
        converged=scaled_sol.converged,
    )
    return solution, record
