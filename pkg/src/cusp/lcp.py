"""Dense linear complementarity problems and a damped semismooth Newton solver.

A problem asks for ``z >= 0`` with ``w = A z + b >= 0`` and ``w . z = 0``.
The solver reformulates those conditions through the Fischer-Burmeister
function ``phi(a, b) = a + b - sqrt(a^2 + b^2)``, whose componentwise root
set is exactly the solution set, and drives ``phi`` to zero with a
Levenberg-Marquardt damped Newton iteration plus a backtracking line search
on the squared residual.

Converged solutions carry a certificate: the residual is the infinity norm
of ``phi``, and both ``z`` and ``w`` are within a small negative slack of
the nonnegative orthant.  A cheap active-set polish runs after the Newton
loop so the certificate holds at tight tolerances instead of merely "close".
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg

__all__ = [
    "LcpProblem",
    "SolverConfig",
    "LcpSolution",
    "fb_residual",
    "solve_lcp",
    "save_case",
    "load_case",
]

# Certificate slack: converged iterates may undershoot the orthant by this much.
CERT_ORTHANT_SLACK = 1e-10

CASE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class LcpProblem:
    """Dense problem data: find z >= 0 with w = A z + b >= 0 and z . w = 0."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise ValueError(
                f"b has shape {b.shape}, expected ({A.shape[0]},) to match A"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("problem data must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    """Newton loop knobs; the defaults suit contact systems of dimension <= ~200."""

    max_iterations: int = 200
    fb_tolerance: float = 1e-8
    lm_lambda_init: float = 1e-6
    lm_lambda_min: float = 1e-12
    lm_lambda_max: float = 1e6
    line_search_shrink: float = 0.5
    line_search_max_backtracks: int = 30

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.fb_tolerance <= 0:
            raise ValueError("fb_tolerance must be positive")
        if not (0 < self.lm_lambda_min <= self.lm_lambda_init <= self.lm_lambda_max):
            raise ValueError("lambda bounds must satisfy 0 < min <= init <= max")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")


@dataclass(frozen=True)
class LcpSolution:
    """Solver output; ``residual`` is the infinity norm of the FB residual."""

    z: np.ndarray
    w: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _fb(z, w):
    # sqrt(z^2 + w^2) via hypot avoids overflow for large iterates
    return z + w - np.hypot(z, w)


def fb_residual(problem: LcpProblem, z) -> np.ndarray:
    """Componentwise Fischer-Burmeister residual at the candidate point z."""
    z = np.asarray(z, dtype=float)
    if z.shape != (problem.dim,):
        raise ValueError(f"z has shape {z.shape}, expected ({problem.dim},)")
    w = problem.A @ z + problem.b
    return _fb(z, w)


def _fb_jacobian(A, z, w):
    """Generalized Jacobian of the FB residual.

    Away from the origin the partials are 1 - z/r and 1 - w/r with
    r = hypot(z, w).  At the kink (z, w) == (0, 0) any pair (1 - a, 1 - b)
    with a^2 + b^2 <= 1 is a valid element; the symmetric choice
    a = b = 1/sqrt(2) is used so the selection is deterministic.
    """
    r = np.hypot(z, w)
    kink = r == 0.0
    r_safe = np.where(kink, 1.0, r)
    dz = np.where(kink, 1.0 - 1.0 / np.sqrt(2.0), 1.0 - z / r_safe)
    dw = np.where(kink, 1.0 - 1.0 / np.sqrt(2.0), 1.0 - w / r_safe)
    return np.diag(dz) + dw[:, None] * A


def _certified(z, w, residual, tol):
    return (
        residual <= tol
        and z.min(initial=0.0) >= -CERT_ORTHANT_SLACK
        and w.min(initial=0.0) >= -CERT_ORTHANT_SLACK
    )


def _polish_candidates(A, b, z):
    """Cheap post-iterates that often land exactly on the certificate.

    Yields (z, w) pairs: the iterate clamped to the orthant, and the
    active-set refinement that re-solves A[B, B] z_B = -b[B] on the basic
    set B = {i : z_i > w_i}.
    """
    zc = np.maximum(z, 0.0)
    yield zc, A @ zc + b

    w = A @ z + b
    basic = z > w
    zp = np.zeros_like(z)
    if basic.any():
        sub = A[np.ix_(basic, basic)]
        rhs = -b[basic]
        try:
            zb = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError:
            zb = np.linalg.lstsq(sub, rhs, rcond=None)[0]
        zp[basic] = zb
    zp = np.maximum(zp, 0.0)
    yield zp, A @ zp + b


def solve_lcp(
    problem: LcpProblem,
    config: SolverConfig | None = None,
    warm_start=None,
    residual_history: list | None = None,
) -> LcpSolution:
    """Solve the problem by damped semismooth Newton iteration.

    warm_start, when given, seeds the iteration after clamping to the
    nonnegative orthant; a warm start at the solution certifies immediately
    with zero iterations.  residual_history, when a list is passed, receives
    the infinity-norm residual of the start point and of every accepted step.
    """
    cfg = config if config is not None else SolverConfig()
    A, b = problem.A, problem.b
    n = problem.dim

    if warm_start is not None:
        z = np.maximum(np.asarray(warm_start, dtype=float), 0.0)
        if z.shape != (n,):
            raise ValueError(f"warm_start has shape {z.shape}, expected ({n},)")
    else:
        z = np.zeros(n)

    w = A @ z + b
    phi = _fb(z, w)
    residual = float(np.abs(phi).max(initial=0.0))
    merit = 0.5 * float(phi @ phi)
    if residual_history is not None:
        residual_history.append(residual)

    lam = cfg.lm_lambda_init
    iterations = 0
    identity = np.eye(n)

    # Iterate until the full certificate holds, not merely the residual:
    # a degenerate solve can reach max|phi| <= tol while some w_i still
    # undershoots the orthant slack, and one or two more steps repair it.
    while (
        not _certified(z, w, residual, cfg.fb_tolerance)
        and iterations < cfg.max_iterations
    ):
        iterations += 1
        J = _fb_jacobian(A, z, w)
        grad = J.T @ phi
        H = J.T @ J

        accepted = False
        while True:
            try:
                cho = scipy.linalg.cho_factor(H + lam * identity, lower=True)
                step = scipy.linalg.cho_solve(cho, -grad)
            except scipy.linalg.LinAlgError:
                step = np.linalg.lstsq(H + lam * identity, -grad, rcond=None)[0]

            alpha = 1.0
            for _ in range(cfg.line_search_max_backtracks + 1):
                z_try = z + alpha * step
                w_try = A @ z_try + b
                phi_try = _fb(z_try, w_try)
                merit_try = 0.5 * float(phi_try @ phi_try)
                if np.isfinite(merit_try) and merit_try < merit:
                    accepted = True
                    z, w, phi, merit = z_try, w_try, phi_try, merit_try
                    break
                alpha *= cfg.line_search_shrink
            if accepted:
                lam = max(lam / 10.0, cfg.lm_lambda_min)
                break
            if lam >= cfg.lm_lambda_max:
                break  # no descent direction even at maximum damping
            lam = min(lam * 10.0, cfg.lm_lambda_max)

        if not accepted:
            break
        residual = float(np.abs(phi).max(initial=0.0))
        if residual_history is not None:
            residual_history.append(residual)

    # Certificate: prefer the raw iterate, then cheap polishes.
    if _certified(z, w, residual, cfg.fb_tolerance):
        return LcpSolution(z=z, w=w, residual=residual, iterations=iterations, converged=True)

    best = (z, w, residual)
    for z_cand, w_cand in _polish_candidates(A, b, z):
        phi_cand = _fb(z_cand, w_cand)
        res_cand = float(np.abs(phi_cand).max(initial=0.0))
        if _certified(z_cand, w_cand, res_cand, cfg.fb_tolerance):
            return LcpSolution(
                z=z_cand, w=w_cand, residual=res_cand, iterations=iterations, converged=True
            )
        if res_cand < best[2]:
            best = (z_cand, w_cand, res_cand)

    z, w, residual = best
    return LcpSolution(z=z, w=w, residual=residual, iterations=iterations, converged=False)


# ---------------------------------------------------------------------------
# regression-case serialization
#
# A case is a Matrix Market file for A next to a JSON sidecar holding b and,
# optionally, a reference solution z.


def save_case(directory, name: str, problem: LcpProblem, z=None) -> Path:
    """Write ``<name>.mtx`` and ``<name>.json`` into directory; returns the dir."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(
        str(directory / f"{name}.mtx"), problem.A, comment="lcp matrix A"
    )
    sidecar = {
        "format_version": CASE_FORMAT_VERSION,
        "b": [repr(float(x)) for x in problem.b],
        "z": None if z is None else [repr(float(x)) for x in np.asarray(z, float)],
    }
    with open(directory / f"{name}.json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return directory


def load_case(directory, name: str):
    """Read a saved case; returns (LcpProblem, z or None)."""
    directory = Path(directory)
    A = np.asarray(scipy.io.mmread(str(directory / f"{name}.mtx")))
    if hasattr(A, "todense"):  # pragma: no cover - sparse round-trip
        A = np.asarray(A.todense())
    with open(directory / f"{name}.json") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format_version") != CASE_FORMAT_VERSION:
        raise ValueError(f"unsupported case format: {sidecar.get('format_version')}")
    b = np.array([float(x) for x in sidecar["b"]])
    z = sidecar.get("z")
    if z is not None:
        z = np.array([float(x) for x in z])
    return LcpProblem(A=A, b=b), z
