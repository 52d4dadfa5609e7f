"""Frictional time stepping for the arm and its environment.

Each step integrates the smooth dynamics to a tentative velocity, collects
nearby disk/shape pairs, stacks them into one complementarity problem,
solves it through the conditioning pipeline, applies the impulses, and
advances positions with the corrected velocity.  Spinning balls ride along
as extra angular coordinates of the same velocity-level system, so contact
between a disk and a ball transfers torque through the very Jacobian that
measures their relative surface velocity.

Two integrators are provided.  The default semi-implicit Euler treats the
viscous damping implicitly (the effective matrix ``M + h B I`` also backs
the contact kernel), which keeps large damping stable at any step size.
The RK23 variant integrates the smooth dynamics with the Bogacki-Shampine
stages and resolves contact once per macro step at the final free velocity;
impulsive contact is not smooth, so embedding the solve inside every stage
would be meaningless.

A failed complementarity solve never crashes a run: the step falls back to
the free velocity and records ``lcp_converged=False``.  Configuration
errors (collapsed sections, divergence to non-finite state) abort the run
with a partial log instead of raising.
"""
from __future__ import annotations

import csv
import functools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .ball import BallModel, BallState, free_spin_velocity
from .conditioning import ConditioningConfig, condition_and_solve, whiten_normals
from .contact_assembly import (
    ContactCandidate,
    apply_impulses,
    assemble_global_lcp,
    classify_mode,
    friction_basis,
)
from .contact_geom import Box, Disk, GeometryConfig, HalfSpace, Sphere, gap
from .lcp import SolverConfig
from .quaternions import quat_exp, quat_mul, quat_normalize
from .soft_robot import (
    InvalidConfigurationError,
    RobotParams,
    RobotState,
    check_configuration,
    disk_layout,
    dynamics_terms,
    frame_batch,
    mass_matrix,
)

__all__ = [
    "ActuationSchedule",
    "EnvShape",
    "ContactParams",
    "SimWorld",
    "SimConfig",
    "SimState",
    "Scenario",
    "ContactRecord",
    "StepMetrics",
    "TrajectoryLog",
    "AblationCell",
    "CellResult",
    "AblationReport",
    "step",
    "run_scenario",
    "run_ablation",
    "evaluate_cell",
    "summarize_log",
    "write_summary",
    "write_trajectory_csv",
    "write_frames",
]

INTEGRATORS = ("semi_implicit_euler", "rk23")

# Mode labels use coarser thresholds than the solver tolerance on purpose.
# A certified solve bounds each complementarity product by roughly
# tol * (z + w), which still lets one factor of a pair sit near tol while
# the other is large.  Requiring slip > 1e-6 m/s before calling a contact
# "sliding" guarantees the cone-boundary identity holds to ~1e-8 on every
# step labeled sliding, and normal impulses below 1e-7 N*s are solver dust.
MODE_IMPULSE_TOL = 1e-7
MODE_SLIP_TOL = 1e-6

SUMMARY_FORMAT_VERSION = 1
FRAMES_FORMAT_VERSION = 1
CSV_FORMAT_VERSION = 1


# -- configuration types ----------------------------------------------------


@dataclass(frozen=True)
class ActuationSchedule:
    """Piecewise-linear generalized force per chamber coordinate.

    ``times`` are strictly increasing knots; values are held constant
    outside the knot range.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :] if times.size == 1 else values[:, None]
        if times.ndim != 1 or times.size == 0:
            raise ValueError("schedule needs at least one time knot")
        if values.shape[0] != times.size:
            raise ValueError("one value row per time knot required")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("schedule times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("schedule knots must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dof(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, values) -> "ActuationSchedule":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(times=np.zeros(1), values=values[None, :])

    def torque(self, t: float) -> np.ndarray:
        out = np.empty(self.dof)
        for j in range(self.dof):
            out[j] = np.interp(t, self.times, self.values[:, j])
        return out


@dataclass(frozen=True)
class EnvShape:
    """A fixed environment shape with a stable label for logs and caches."""

    label: str
    shape: object

    def __post_init__(self):
        if not self.label:
            raise ValueError("environment shapes need a nonempty label")
        if not isinstance(self.shape, (HalfSpace, Sphere, Box)):
            raise ValueError(f"unsupported environment shape {type(self.shape).__name__}")


@dataclass(frozen=True)
class ContactParams:
    mu: float = 0.5
    facet_count: int = 4
    activation_distance: float = 0.005
    eps_sdf: float = 1e-12

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("friction coefficient must be nonnegative")
        if self.activation_distance < 0:
            raise ValueError("activation distance must be nonnegative")
        if not self.eps_sdf > 0:
            raise ValueError("eps_sdf must be positive")
        friction_basis(self.facet_count, self.mu)  # validates the facet count


@dataclass(frozen=True)
class SimWorld:
    """Everything physical: the arm, fixed shapes, spinning balls, friction."""

    robot: RobotParams
    shapes: tuple = ()
    balls: tuple = ()
    contact: ContactParams = ContactParams()

    def __post_init__(self):
        shapes = tuple(self.shapes)
        balls = tuple(self.balls)
        for s in shapes:
            if not isinstance(s, EnvShape):
                raise ValueError("world shapes must be EnvShape instances")
        for b in balls:
            if not isinstance(b, BallModel):
                raise ValueError("world balls must be BallModel instances")
        labels = [s.label for s in shapes] + [b.label for b in balls]
        if len(set(labels)) != len(labels):
            raise ValueError("shape and ball labels must be unique")
        object.__setattr__(self, "shapes", shapes)
        object.__setattr__(self, "balls", balls)

    @property
    def augmented_dof(self) -> int:
        return self.robot.dof + 3 * len(self.balls)


@dataclass(frozen=True)
class SimConfig:
    """Everything numerical: step size, integrator, schedule, solver knobs."""

    duration: float
    schedule: ActuationSchedule
    h: float = 1e-4
    integrator: str = "semi_implicit_euler"
    conditioning: ConditioningConfig = ConditioningConfig()
    solver: SolverConfig = SolverConfig()
    alpha: float = 0.2

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size must be positive")
        if self.duration < self.h:
            raise ValueError("duration must cover at least one step")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.alpha < 0:
            raise ValueError("stabilization gain must be nonnegative")


@dataclass(frozen=True)
class SimState:
    robot: RobotState
    balls: tuple = ()
    time: float = 0.0

    def __post_init__(self):
        balls = tuple(self.balls)
        for b in balls:
            if not isinstance(b, BallState):
                raise ValueError("ball states must be BallState instances")
        object.__setattr__(self, "balls", balls)


@dataclass(frozen=True)
class Scenario:
    name: str
    world: SimWorld
    initial: SimState
    config: SimConfig

    def __post_init__(self):
        if self.initial.robot.l.size != self.world.robot.dof:
            raise ValueError("initial state does not match the robot dimension")
        if len(self.initial.balls) != len(self.world.balls):
            raise ValueError("one initial BallState per ball model required")
        if self.config.schedule.dof != self.world.robot.dof:
            raise ValueError("actuation schedule does not match the robot dimension")


# -- per-step records -------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ContactRecord:
    disk_index: int
    shape_label: str
    gap: float
    normal_impulse: float
    facet_impulses: tuple
    slip_speed: float
    mode: str
    kept: bool


@dataclass(frozen=True, slots=True)
class StepMetrics:
    time: float
    lcp_converged: bool
    lcp_iterations: int
    max_penetration: float
    active_contacts: int
    kept_contacts: int
    contacts: tuple

    def __post_init__(self):
        if self.kept_contacts > self.active_contacts:
            raise ValueError("kept_contacts cannot exceed active_contacts")

    @property
    def contact_modes(self) -> tuple:
        return tuple(r.mode for r in self.contacts)


@dataclass
class TrajectoryLog:
    planned_steps: int
    states: list
    metrics: list
    aborted: bool = False
    abort_reason: str = ""

    @property
    def steps_completed(self) -> int:
        return len(self.metrics)

    @property
    def completion_fraction(self) -> float:
        return self.steps_completed / self.planned_steps if self.planned_steps else 1.0

    @property
    def convergence_rate(self) -> float:
        if not self.metrics:
            return 1.0
        return sum(m.lcp_converged for m in self.metrics) / len(self.metrics)

    @property
    def max_penetration(self) -> float:
        return max((m.max_penetration for m in self.metrics), default=0.0)

    def mode_transitions(self):
        """Chronological (time, disk_index, shape_label, from, to) events.

        A candidate that drops out of the active set counts as a transition
        to 'separated'.
        """
        previous = {}
        events = []
        for m in self.metrics:
            seen = {}
            for rec in m.contacts:
                seen[(rec.disk_index, rec.shape_label)] = rec.mode
            for key, mode in seen.items():
                before = previous.get(key, "separated")
                if mode != before:
                    events.append((m.time, key[0], key[1], before, mode))
                previous[key] = mode
            for key, before in list(previous.items()):
                if key not in seen and before != "separated":
                    events.append((m.time, key[0], key[1], before, "separated"))
                    previous[key] = "separated"
        return events


# -- one step ---------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _cached_basis(facet_count: int, mu: float):
    return friction_basis(facet_count, mu)


def _skew(v):
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _collect_candidates(world: SimWorld, l, fb0):
    """Gap-test every disk against every shape and ball; return near pairs.

    Runs on a derivative-free frame batch first and evaluates Jacobians
    only for disks that are actually close, which skips the expensive
    derivative pass entirely during free flight.  The base plate (index 0)
    is bolted to the mount and excluded: its Jacobian is identically zero,
    so it cannot exchange impulses through the velocity-level system.
    """
    params = world.robot
    contact = world.contact
    geo = GeometryConfig(
        eps_sdf=contact.eps_sdf, activation_distance=contact.activation_distance
    )
    basis = _cached_basis(contact.facet_count, contact.mu)
    queries = disk_layout(params)
    n_rob = params.dof
    n_aug = world.augmented_dof

    hits = []
    for i in range(1, len(queries)):
        disk = Disk(
            frame=fb0.frame(i),
            radius=params.disk_radius,
            half_thickness=params.disk_half_thickness,
        )
        for env in world.shapes:
            g, cframe = gap(disk, env.shape, geo)
            if g <= contact.activation_distance:
                hits.append((i, env.label, -1, g, cframe))
        for b_idx, ball in enumerate(world.balls):
            g, cframe = gap(disk, ball.shape(), geo)
            if g <= contact.activation_distance:
                hits.append((i, ball.label, b_idx, g, cframe))
    if not hits:
        return (), 0.0

    near = sorted({hit[0] for hit in hits})
    fb1 = frame_batch(params, l, queries=[queries[i] for i in near], derivatives=True)
    row_of = {disk_i: k for k, disk_i in enumerate(near)}

    candidates = []
    penetration = 0.0
    for disk_i, label, b_idx, g, cframe in hits:
        J = np.zeros((3, n_aug))
        J[:, :n_rob] = fb1.point_jacobian(row_of[disk_i], cframe.point)
        if b_idx >= 0:
            arm = cframe.point - world.balls[b_idx].center
            J[:, n_rob + 3 * b_idx : n_rob + 3 * b_idx + 3] = _skew(arm)
        candidates.append(
            ContactCandidate(
                gap=g,
                frame=cframe.rotation,
                world_jacobian=J,
                basis=basis,
                disk_index=disk_i,
                shape_label=label,
            )
        )
        penetration = max(penetration, -g)
    return tuple(candidates), max(penetration, 0.0)


@dataclass
class _Resolution:
    v_plus: np.ndarray
    converged: bool
    iterations: int
    records: tuple
    kept_count: int


def _resolve_contacts(world, config, M_aug, v_hat_aug, candidates, h, cache):
    """Solve the stacked contact problem and apply impulses (or fall back)."""
    n_aug = M_aug.shape[0]
    if not candidates:
        return _Resolution(v_hat_aug, True, 0, (), 0)

    zeros = np.zeros(n_aug)
    assembled = assemble_global_lcp(M_aug, zeros, v_hat_aug, candidates, h, config.alpha)
    whitened = None
    if config.conditioning.rank_enabled:
        whitened = whiten_normals(assembled.normal_rows, M_aug)

    warm = None
    if cache:
        warm = np.zeros(assembled.layout.dim)
        for i, cand in enumerate(candidates):
            hit = cache.get((cand.disk_index, cand.shape_label))
            if hit is None:
                continue
            f_n, beta, gamma = hit
            warm[assembled.layout.normal_index(i)] = f_n
            warm[assembled.layout.friction_slice(i)] = beta
            warm[assembled.layout.slack_index(i)] = gamma

    solution, record = condition_and_solve(
        assembled.problem,
        assembled.layout,
        config.conditioning,
        config.solver,
        whitened=whitened,
        warm_start=warm,
    )
    keep = set(record.keep_set)

    if solution.converged:
        v_plus = apply_impulses(M_aug, candidates, solution.z, v_hat_aug, h, zeros)
        split = assembled.layout.split_impulses(solution.z)
    else:
        v_plus = v_hat_aug
        split = None

    records = []
    kept_count = 0
    for i, cand in enumerate(candidates):
        nu = cand.contact_jacobian @ v_plus
        slip = float(np.hypot(nu[0], nu[1]))
        if split is not None:
            f_n, beta, gamma = split[i]
            cache[(cand.disk_index, cand.shape_label)] = (f_n, beta, gamma)
        else:
            f_n, beta = 0.0, np.zeros(cand.basis.facet_count)
        kept_flag = i in keep
        kept_count += kept_flag
        records.append(
            ContactRecord(
                disk_index=cand.disk_index,
                shape_label=cand.shape_label,
                gap=float(cand.gap),
                normal_impulse=float(f_n),
                facet_impulses=tuple(float(b) for b in beta),
                slip_speed=slip,
                mode=classify_mode(
                    f_n, slip, impulse_tol=MODE_IMPULSE_TOL, slip_tol=MODE_SLIP_TOL
                ),
                kept=kept_flag,
            )
        )
    return _Resolution(v_plus, solution.converged, solution.iterations, tuple(records), kept_count)


def _advance_balls(world, state, v_plus, h):
    n = world.robot.dof
    advanced = []
    for b_idx, ball_state in enumerate(state.balls):
        omega = v_plus[n + 3 * b_idx : n + 3 * b_idx + 3]
        q = quat_normalize(quat_mul(quat_exp(h * omega), ball_state.orientation))
        advanced.append(BallState(orientation=q, omega=omega.copy()))
    return tuple(advanced)


def _require_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidConfigurationError("integration diverged to non-finite state")


def _step_euler(state, world, config, cache):
    params = world.robot
    h = config.h
    n = params.dof

    tau = config.schedule.torque(state.time)
    M, f_free = dynamics_terms(params, state.robot, tau)
    M_eff = M + (h * params.B) * np.eye(n)
    # Damping handled implicitly: (M + hB) v_hat = M v + h (tau - K l + g).
    rhs = M @ state.robot.v + h * (f_free + params.B * state.robot.v)
    v_hat = scipy.linalg.solve(M_eff, rhs, assume_a="pos")

    blocks = [M_eff]
    omegas = [v_hat]
    for ball, ball_state in zip(world.balls, state.balls):
        blocks.append(ball.inertia + h * ball.rotational_damping)
        omegas.append(free_spin_velocity(ball, ball_state, h))
    M_aug = scipy.linalg.block_diag(*blocks) if len(blocks) > 1 else M_eff
    v_hat_aug = np.concatenate(omegas)
    _require_finite(v_hat_aug)

    fb0 = frame_batch(params, state.robot.l)
    candidates, penetration = _collect_candidates(world, state.robot.l, fb0)
    res = _resolve_contacts(world, config, M_aug, v_hat_aug, candidates, h, cache)

    v_next = res.v_plus[:n]
    l_next = state.robot.l + h * v_next
    # Raise here rather than log an unusable state: every recorded state
    # must support kinematic evaluation (for the frames writer, restarts).
    check_configuration(params, l_next)
    next_state = SimState(
        robot=RobotState(l=l_next, v=v_next),
        balls=_advance_balls(world, state, res.v_plus, h),
        time=state.time + h,
    )
    metrics = StepMetrics(
        time=state.time,
        lcp_converged=res.converged,
        lcp_iterations=res.iterations,
        max_penetration=penetration,
        active_contacts=len(candidates),
        kept_contacts=res.kept_count,
        contacts=res.records,
    )
    return next_state, metrics


def _free_rates(params, schedule, t, l, v):
    robot = RobotState(l=l, v=v)
    M, f_free = dynamics_terms(params, robot, schedule.torque(t))
    return v, scipy.linalg.solve(M, f_free, assume_a="pos")


def _step_rk23(state, world, config, cache):
    params = world.robot
    h = config.h
    n = params.dof
    t = state.time
    l0, v0 = state.robot.l, state.robot.v
    sched = config.schedule

    # Bogacki-Shampine stages on the smooth dynamics only.
    k1l, k1v = _free_rates(params, sched, t, l0, v0)
    k2l, k2v = _free_rates(params, sched, t + 0.5 * h, l0 + 0.5 * h * k1l, v0 + 0.5 * h * k1v)
    k3l, k3v = _free_rates(params, sched, t + 0.75 * h, l0 + 0.75 * h * k2l, v0 + 0.75 * h * k2v)
    l_free = l0 + h * (2.0 / 9.0 * k1l + 1.0 / 3.0 * k2l + 4.0 / 9.0 * k3l)
    v_free = v0 + h * (2.0 / 9.0 * k1v + 1.0 / 3.0 * k2v + 4.0 / 9.0 * k3v)
    _require_finite(l_free, v_free)

    blocks = [mass_matrix(params, l_free)]
    omegas = [v_free]
    for ball, ball_state in zip(world.balls, state.balls):
        spin = lambda w: -scipy.linalg.solve(
            ball.inertia, ball.rotational_damping @ w, assume_a="pos"
        )
        w0 = ball_state.omega
        s1 = spin(w0)
        s2 = spin(w0 + 0.5 * h * s1)
        s3 = spin(w0 + 0.75 * h * s2)
        blocks.append(ball.inertia)
        omegas.append(w0 + h * (2.0 / 9.0 * s1 + 1.0 / 3.0 * s2 + 4.0 / 9.0 * s3))
    M_aug = scipy.linalg.block_diag(*blocks) if len(blocks) > 1 else blocks[0]
    v_free_aug = np.concatenate(omegas)
    _require_finite(v_free_aug)

    fb0 = frame_batch(params, l_free)
    candidates, penetration = _collect_candidates(world, l_free, fb0)
    res = _resolve_contacts(world, config, M_aug, v_free_aug, candidates, h, cache)

    v_next = res.v_plus[:n]
    # The impulse's effect on position enters through the velocity change.
    l_next = l_free + h * (v_next - v_free)
    check_configuration(params, l_next)
    next_state = SimState(
        robot=RobotState(l=l_next, v=v_next),
        balls=_advance_balls(world, state, res.v_plus, h),
        time=t + h,
    )
    metrics = StepMetrics(
        time=t,
        lcp_converged=res.converged,
        lcp_iterations=res.iterations,
        max_penetration=penetration,
        active_contacts=len(candidates),
        kept_contacts=res.kept_count,
        contacts=res.records,
    )
    return next_state, metrics


def step(state: SimState, world: SimWorld, config: SimConfig, cache=None):
    """Advance one step; returns (next_state, StepMetrics).

    ``cache`` is a mutable dict carrying per-contact impulses between
    consecutive calls to warm-start the solver; pass the same dict for each
    step of a run (run_scenario does this automatically).
    """
    if cache is None:
        cache = {}
    stepper = _step_euler if config.integrator == "semi_implicit_euler" else _step_rk23
    return stepper(state, world, config, cache)


# -- whole runs -------------------------------------------------------------


def run_scenario(scenario: Scenario, out_dir=None, *, frame_stride: int = 20, extra_summary=None):
    """Run a scenario to completion (or abort) and summarize it.

    Returns (TrajectoryLog, summary dict).  With ``out_dir`` set, writes
    ``summary.json``, ``trajectory.csv``, and ``frames.json`` there.
    ``extra_summary`` entries are merged into the summary dict (the command
    line records flag overrides this way).
    """
    config = scenario.config
    world = scenario.world
    planned = int(round(config.duration / config.h))
    state = scenario.initial
    states = [state]
    metrics = []
    cache = {}
    aborted = False
    reason = ""
    stepper = _step_euler if config.integrator == "semi_implicit_euler" else _step_rk23
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(planned):
            try:
                state, m = stepper(state, world, config, cache)
            except (InvalidConfigurationError, ValueError, np.linalg.LinAlgError) as exc:
                aborted = True
                reason = f"{type(exc).__name__}: {exc}"
                break
            states.append(state)
            metrics.append(m)
    log = TrajectoryLog(
        planned_steps=planned,
        states=states,
        metrics=metrics,
        aborted=aborted,
        abort_reason=reason,
    )
    summary = summarize_log(scenario, log, extra_summary)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_summary(summary, out / "summary.json")
        write_trajectory_csv(log, out / "trajectory.csv")
        write_frames(log, world, out / "frames.json", stride=frame_stride)
    return log, summary


def summarize_log(scenario: Scenario, log: TrajectoryLog, extra=None) -> dict:
    """Deterministic run summary; every value is a plain JSON type."""
    transitions = log.mode_transitions()
    pair_counts = {}
    stick_to_slide = 0
    for _, disk_i, label, before, after in transitions:
        if before == "sticking" and after == "sliding":
            stick_to_slide += 1
            key = (disk_i, label)
            pair_counts[key] = pair_counts.get(key, 0) + 1
    summary = {
        "format_version": SUMMARY_FORMAT_VERSION,
        "scenario": scenario.name,
        "integrator": scenario.config.integrator,
        "h": float(scenario.config.h),
        "duration": float(scenario.config.duration),
        "planned_steps": log.planned_steps,
        "steps_completed": log.steps_completed,
        "completion_fraction": float(log.completion_fraction),
        "aborted": log.aborted,
        "abort_reason": log.abort_reason,
        "lcp_convergence_rate": float(log.convergence_rate),
        "max_penetration_m": float(log.max_penetration),
        "final_time": float(log.states[-1].time),
        "peak_active_contacts": max((m.active_contacts for m in log.metrics), default=0),
        "sticking_to_sliding_transitions": stick_to_slide,
        "sticking_to_sliding_pairs": [
            [disk_i, label, count]
            for (disk_i, label), count in sorted(pair_counts.items())
        ],
    }
    if extra:
        summary.update(extra)
    return summary


def write_summary(summary: dict, path):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_trajectory_csv(log: TrajectoryLog, path):
    """One row per completed step: post-step state plus step metrics."""
    n = log.states[0].robot.l.size
    header = (
        ["time"]
        + [f"l_{j}" for j in range(n)]
        + [f"v_{j}" for j in range(n)]
        + [
            "max_penetration",
            "lcp_converged",
            "lcp_iterations",
            "active_contacts",
            "kept_contacts",
            "n_separated",
            "n_sticking",
            "n_sliding",
        ]
    )
    with open(path, "w", newline="") as handle:
        # Comment-style version marker; csv readers skip it with comment="#".
        handle.write(f"# format_version={CSV_FORMAT_VERSION}\n")
        writer = csv.writer(handle)
        writer.writerow(header)
        for k, m in enumerate(log.metrics):
            state = log.states[k + 1]
            modes = m.contact_modes
            writer.writerow(
                [repr(float(state.time))]
                + [repr(float(x)) for x in state.robot.l]
                + [repr(float(x)) for x in state.robot.v]
                + [
                    repr(float(m.max_penetration)),
                    int(m.lcp_converged),
                    m.lcp_iterations,
                    m.active_contacts,
                    m.kept_contacts,
                    sum(x == "separated" for x in modes),
                    sum(x == "sticking" for x in modes),
                    sum(x == "sliding" for x in modes),
                ]
            )


def _shape_dict(env: EnvShape) -> dict:
    shape = env.shape
    if isinstance(shape, HalfSpace):
        return {
            "label": env.label,
            "type": "halfspace",
            "normal": [float(x) for x in shape.normal],
            "offset": float(shape.offset),
        }
    if isinstance(shape, Sphere):
        return {
            "label": env.label,
            "type": "sphere",
            "center": [float(x) for x in shape.center],
            "radius": float(shape.radius),
        }
    return {
        "label": env.label,
        "type": "box",
        "center": [float(x) for x in shape.center],
        "rotation": [[float(x) for x in row] for row in shape.rotation],
        "half_extents": [float(x) for x in shape.half_extents],
    }


def write_frames(log: TrajectoryLog, world: SimWorld, path, stride: int = 20):
    """Subsampled disk/ball poses plus the static shapes, for rendering."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    params = world.robot
    picks = list(range(0, len(log.states), stride))
    if picks and picks[-1] != len(log.states) - 1:
        picks.append(len(log.states) - 1)
    frames = []
    for idx in picks:
        state = log.states[idx]
        fb = frame_batch(params, state.robot.l)
        frames.append(
            {
                "time": float(state.time),
                "disks": [
                    {
                        "position": [float(x) for x in fb.positions[i]],
                        "rotation": [[float(x) for x in row] for row in fb.rotations[i]],
                    }
                    for i in range(len(fb))
                ],
                "ball_orientations": [
                    [float(x) for x in b.orientation] for b in state.balls
                ],
            }
        )
    doc = {
        "format_version": FRAMES_FORMAT_VERSION,
        "stride": stride,
        "disk_radius": float(params.disk_radius),
        "disk_half_thickness": float(params.disk_half_thickness),
        "shapes": [_shape_dict(s) for s in world.shapes],
        "balls": [
            {
                "label": b.label,
                "center": [float(x) for x in b.center],
                "radius": float(b.radius),
            }
            for b in world.balls
        ],
        "frames": frames,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- ablation grid ----------------------------------------------------------

SUCCESS_CONVERGENCE = 0.95
SUCCESS_PENETRATION = 0.010
SUCCESS_COMPLETION = 0.80


@dataclass(frozen=True)
class AblationCell:
    scenario: Scenario
    subset: str
    physical: str


@dataclass(frozen=True)
class CellResult:
    subset: str
    physical: str
    convergence_rate: float
    max_penetration: float
    completion: float
    aborted: bool
    passed: bool


def evaluate_cell(cell: AblationCell) -> CellResult:
    _, summary = run_scenario(cell.scenario)
    convergence = summary["lcp_convergence_rate"]
    penetration = summary["max_penetration_m"]
    completion = summary["completion_fraction"]
    passed = (
        convergence >= SUCCESS_CONVERGENCE
        and penetration < SUCCESS_PENETRATION
        and completion >= SUCCESS_COMPLETION
    )
    return CellResult(
        subset=cell.subset,
        physical=cell.physical,
        convergence_rate=float(convergence),
        max_penetration=float(penetration),
        completion=float(completion),
        aborted=bool(summary["aborted"]),
        passed=passed,
    )


@dataclass(frozen=True)
class AblationReport:
    results: tuple

    def subsets(self):
        seen = []
        for r in self.results:
            if r.subset not in seen:
                seen.append(r.subset)
        return seen

    def subset_rows(self):
        """(subset, success rate, mean convergence, mean peak penetration)."""
        rows = []
        for name in self.subsets():
            cells = [r for r in self.results if r.subset == name]
            rows.append(
                (
                    name,
                    sum(r.passed for r in cells) / len(cells),
                    sum(r.convergence_rate for r in cells) / len(cells),
                    sum(r.max_penetration for r in cells) / len(cells),
                )
            )
        return rows

    def success_rate(self, subset: str) -> float:
        for name, rate, _, _ in self.subset_rows():
            if name == subset:
                return rate
        raise KeyError(subset)

    def to_csv_text(self) -> str:
        lines = [
            f"# format_version={CSV_FORMAT_VERSION}",
            "subset,success_rate,mean_convergence_rate,mean_peak_penetration_m",
        ]
        for name, rate, conv, pen in self.subset_rows():
            lines.append(f"{name},{rate!r},{conv!r},{pen!r}")
        return "\n".join(lines) + "\n"

    def to_markdown_text(self) -> str:
        lines = [
            "| subset | success rate | mean convergence rate | mean peak penetration (m) |",
            "| --- | --- | --- | --- |",
        ]
        for name, rate, conv, pen in self.subset_rows():
            lines.append(f"| {name} | {rate:.3f} | {conv:.4f} | {pen:.6f} |")
        return "\n".join(lines) + "\n"


def run_ablation(cells, jobs: int = 1) -> AblationReport:
    """Evaluate every cell (optionally across processes) in input order."""
    cells = tuple(cells)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = tuple(pool.map(evaluate_cell, cells))
    else:
        results = tuple(evaluate_cell(c) for c in cells)
    return AblationReport(results=results)
