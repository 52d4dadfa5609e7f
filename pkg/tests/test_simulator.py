"""Stepping engine, run harness, and the on-disk artifacts it writes."""

import json

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from cusp.ball import BallModel, BallState
from cusp.contact_geom import HalfSpace
from cusp.lcp import SolverConfig
from cusp.simulator import (
    AblationCell,
    ActuationSchedule,
    ContactParams,
    ContactRecord,
    EnvShape,
    Scenario,
    SimConfig,
    SimState,
    SimWorld,
    StepMetrics,
    TrajectoryLog,
    _collect_candidates,
    evaluate_cell,
    run_ablation,
    run_scenario,
    step,
    summarize_log,
)
from cusp.soft_robot import (
    RobotParams,
    RobotState,
    disk_layout,
    dynamics_terms,
    frame_batch,
    gravity_load,
    mass_matrix,
)


def one_section(gravity=(0.0, 0.0, 0.0)):
    return RobotParams(
        sections=1, section_masses=(1.17,), disks_per_section=1, gravity=gravity
    )


def press_scenario(duration, h=1e-4, solver=None, integrator="semi_implicit_euler",
                   name="press"):
    """Straight arm pushed by gravity into a plane 2.5 mm above its tip."""
    params = one_section(gravity=(0.0, 0.0, 9.81))
    ceiling = EnvShape("ceiling", HalfSpace(normal=(0.0, 0.0, -1.0), offset=-0.16))
    config = SimConfig(
        duration=duration,
        schedule=ActuationSchedule.constant(np.zeros(3)),
        h=h,
        integrator=integrator,
        solver=solver if solver is not None else SolverConfig(),
    )
    initial = SimState(robot=RobotState(l=np.full(3, 0.0075), v=np.zeros(3)))
    return Scenario(
        name=name,
        world=SimWorld(robot=params, shapes=(ceiling,)),
        initial=initial,
        config=config,
    )


def ball_press_scenario():
    """Bending sweep that presses the tip disk against a pivoting ball.

    The ball sits just past the free sweep of the tip, so contact starts
    around t = 0.3 s and stays engaged for the rest of the run.
    """
    ball = BallModel.homogeneous(
        mass=0.5, radius=0.05, center=[0.130, 0.0, 0.147], damping=1e-4, label="ball"
    )
    schedule = ActuationSchedule(
        times=np.array([0.0, 0.1, 0.5]),
        values=np.array([[0.0, 0.0, 0.0], [-6.0, 3.0, 3.0], [-6.0, 3.0, 3.0]]),
    )
    initial = SimState(
        robot=RobotState(l=np.full(3, 0.02), v=np.zeros(3)),
        balls=(BallState.at_rest(),),
    )
    return Scenario(
        name="ball_press",
        world=SimWorld(robot=one_section(), balls=(ball,)),
        initial=initial,
        config=SimConfig(duration=0.5, schedule=schedule, h=1e-4),
    )


def bookkeeping_residual(scenario, log, k):
    """Momentum-balance defect of step k, recomputed from scratch.

    Every quantity except the logged impulses is rebuilt here (effective
    inertia, free forces, contact Jacobians), so this checks that the
    recorded impulses really account for the non-free momentum change.
    Valid for the semi-implicit integrator only.
    """
    world, config = scenario.world, scenario.config
    params, h = world.robot, config.h
    before, after = log.states[k], log.states[k + 1]
    M, f_free = dynamics_terms(params, before.robot, config.schedule.torque(before.time))
    blocks = [M + (h * params.B) * np.eye(params.dof)]
    forces = [f_free]
    v0, v1 = [before.robot.v], [after.robot.v]
    for model, b0, b1 in zip(world.balls, before.balls, after.balls):
        blocks.append(model.inertia + h * model.rotational_damping)
        forces.append(-model.rotational_damping @ b0.omega)
        v0.append(b0.omega)
        v1.append(b1.omega)
    M_aug = scipy.linalg.block_diag(*blocks)
    gain = M_aug @ (np.concatenate(v1) - np.concatenate(v0))
    applied = h * np.concatenate(forces)
    candidates, _ = _collect_candidates(
        world, before.robot.l, frame_batch(params, before.robot.l)
    )
    records = {(r.disk_index, r.shape_label): r for r in log.metrics[k].contacts}
    assert len(candidates) == len(records)
    for cand in candidates:
        rec = records[(cand.disk_index, cand.shape_label)]
        tangential = cand.basis.directions @ np.array(rec.facet_impulses)
        impulse = np.array([tangential[0], tangential[1], rec.normal_impulse])
        applied += cand.contact_jacobian.T @ impulse
    return float(np.linalg.norm(gain - applied))


@pytest.fixture(scope="module")
def ball_run():
    scenario = ball_press_scenario()
    log, summary = run_scenario(scenario)
    return scenario, log, summary


class TestActuationSchedule:
    def test_piecewise_linear_with_end_clamping(self):
        sched = ActuationSchedule(
            times=np.array([0.0, 1.0, 2.0]),
            values=np.array([[0.0, 0.0], [0.0, 10.0], [40.0, 10.0]]),
        )
        assert sched.dof == 2
        np.testing.assert_allclose(sched.torque(0.5), [0.0, 5.0])
        np.testing.assert_allclose(sched.torque(1.5), [20.0, 10.0])
        np.testing.assert_allclose(sched.torque(-3.0), [0.0, 0.0])
        np.testing.assert_allclose(sched.torque(99.0), [40.0, 10.0])

    def test_constant_factory(self):
        sched = ActuationSchedule.constant([2.0, -1.0, 0.5])
        np.testing.assert_array_equal(sched.torque(0.0), [2.0, -1.0, 0.5])
        np.testing.assert_array_equal(sched.torque(123.0), [2.0, -1.0, 0.5])

    def test_one_dim_values_follow_knot_count(self):
        # A single knot reads a 1-D array as one row; several knots read
        # it as one value per knot for a single coordinate.
        row = ActuationSchedule(times=[0.0], values=[1.0, 2.0])
        assert row.dof == 2
        column = ActuationSchedule(times=[0.0, 1.0], values=[3.0, 5.0])
        assert column.dof == 1
        assert column.torque(0.5)[0] == pytest.approx(4.0)

    @pytest.mark.parametrize(
        "times,values",
        [
            ([1.0, 1.0], [[0.0], [1.0]]),
            ([2.0, 1.0], [[0.0], [1.0]]),
            ([], np.zeros((0, 3))),
            ([0.0, 1.0], [[0.0]]),
            ([0.0], [[np.nan]]),
        ],
    )
    def test_rejects_malformed_knots(self, times, values):
        with pytest.raises(ValueError):
            ActuationSchedule(times=np.asarray(times, dtype=float), values=values)


class TestValidation:
    def test_labels_unique_across_shapes_and_balls(self):
        plane = EnvShape("floor", HalfSpace(normal=(0.0, 0.0, 1.0), offset=0.0))
        ball = BallModel.homogeneous(
            mass=0.1, radius=0.03, center=[1.0, 0.0, 0.0], label="floor"
        )
        with pytest.raises(ValueError, match="unique"):
            SimWorld(robot=one_section(), shapes=(plane,), balls=(ball,))

    def test_env_shape_checks(self):
        with pytest.raises(ValueError, match="unsupported"):
            EnvShape("thing", object())
        with pytest.raises(ValueError):
            EnvShape("", HalfSpace(normal=(0.0, 0.0, 1.0), offset=0.0))

    def test_contact_params_checks(self):
        with pytest.raises(ValueError):
            ContactParams(mu=-0.1)
        with pytest.raises(ValueError):
            ContactParams(facet_count=5)

    def test_config_rejects_bad_numerics(self):
        sched = ActuationSchedule.constant(np.zeros(3))
        with pytest.raises(ValueError):
            SimConfig(duration=1.0, schedule=sched, h=0.0)
        with pytest.raises(ValueError):
            SimConfig(duration=1e-6, schedule=sched, h=1e-4)
        with pytest.raises(ValueError, match="integrator"):
            SimConfig(duration=1.0, schedule=sched, integrator="rk4")
        with pytest.raises(ValueError):
            SimConfig(duration=1.0, schedule=sched, alpha=-0.5)

    def test_scenario_dimension_checks(self):
        world = SimWorld(robot=one_section())
        config = SimConfig(duration=0.01, schedule=ActuationSchedule.constant(np.zeros(3)))
        with pytest.raises(ValueError, match="dimension"):
            Scenario(
                name="bad",
                world=world,
                initial=SimState(robot=RobotState(l=np.zeros(4), v=np.zeros(4))),
                config=config,
            )
        with pytest.raises(ValueError, match="BallState"):
            Scenario(
                name="bad",
                world=world,
                initial=SimState(
                    robot=RobotState(l=np.zeros(3), v=np.zeros(3)),
                    balls=(BallState.at_rest(),),
                ),
                config=config,
            )
        with pytest.raises(ValueError, match="schedule"):
            Scenario(
                name="bad",
                world=world,
                initial=SimState(robot=RobotState(l=np.zeros(3), v=np.zeros(3))),
                config=SimConfig(
                    duration=0.01, schedule=ActuationSchedule.constant(np.zeros(5))
                ),
            )

    def test_step_metrics_kept_bound(self):
        with pytest.raises(ValueError):
            StepMetrics(
                time=0.0,
                lcp_converged=True,
                lcp_iterations=1,
                max_penetration=0.0,
                active_contacts=1,
                kept_contacts=2,
                contacts=(),
            )


class TestFreeFlight:
    def test_single_euler_step_matches_update_rule(self):
        """One semi-implicit step equals the closed-form update it claims."""
        params = one_section(gravity=(0.0, -9.81, 0.3))
        tau = np.array([0.7, -0.2, 0.1])
        h = 1e-3
        l0 = np.array([0.011, 0.019, 0.015])
        v0 = np.array([-0.03, 0.05, 0.01])
        config = SimConfig(duration=1.0, schedule=ActuationSchedule.constant(tau), h=h)
        state = SimState(robot=RobotState(l=l0, v=v0))
        next_state, metrics = step(state, SimWorld(robot=params), config)

        M = mass_matrix(params, l0)
        g = gravity_load(params, l0)
        v1 = scipy.linalg.solve(
            M + h * params.B * np.eye(3),
            M @ v0 + h * (tau - params.K * l0 + g),
            assume_a="pos",
        )
        np.testing.assert_allclose(next_state.robot.v, v1, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(next_state.robot.l, l0 + h * v1, rtol=0.0, atol=1e-12)
        assert next_state.time == pytest.approx(h)
        assert metrics.lcp_converged and metrics.lcp_iterations == 0
        assert metrics.active_contacts == 0 and metrics.contacts == ()

    def test_velocity_decays_without_forcing(self):
        config = SimConfig(
            duration=0.2, schedule=ActuationSchedule.constant(np.zeros(3)), h=1e-3
        )
        initial = SimState(robot=RobotState(l=np.zeros(3), v=np.array([0.3, -0.2, 0.25])))
        log, summary = run_scenario(
            Scenario(name="decay", world=SimWorld(robot=one_section()),
                     initial=initial, config=config)
        )
        assert not log.aborted
        v_end = np.linalg.norm(log.states[-1].robot.v)
        assert v_end < 0.1 * np.linalg.norm(initial.robot.v)
        assert summary["peak_active_contacts"] == 0

    def test_metrics_carry_step_start_times(self):
        config = SimConfig(
            duration=0.005, schedule=ActuationSchedule.constant(np.zeros(3)), h=1e-3
        )
        log, _ = run_scenario(
            Scenario(
                name="clock",
                world=SimWorld(robot=one_section()),
                initial=SimState(robot=RobotState(l=np.full(3, 0.02), v=np.zeros(3))),
                config=config,
            )
        )
        assert log.planned_steps == 5
        np.testing.assert_allclose([m.time for m in log.metrics], np.arange(5) * 1e-3,
                                   atol=1e-15)
        np.testing.assert_allclose([s.time for s in log.states], np.arange(6) * 1e-3,
                                   atol=1e-15)


class TestRk23:
    def test_free_flight_tracks_reference(self):
        """Fifty 1 ms macro steps stay close to a tight adaptive reference."""
        params = one_section()
        tau = np.array([1.5, -0.4, 0.8])
        l0 = np.array([0.012, 0.02, 0.016])
        v0 = np.array([0.05, -0.02, 0.0])
        T = 0.05

        def run(integrator):
            config = SimConfig(
                duration=T,
                schedule=ActuationSchedule.constant(tau),
                h=1e-3,
                integrator=integrator,
            )
            log, _ = run_scenario(
                Scenario(name="free", world=SimWorld(robot=params),
                         initial=SimState(robot=RobotState(l=l0, v=v0)), config=config)
            )
            return log.states[-1].robot

        def rates(t, y):
            robot = RobotState(l=y[:3], v=y[3:])
            M, f = dynamics_terms(params, robot, tau)
            return np.concatenate([y[3:], scipy.linalg.solve(M, f, assume_a="pos")])

        ref = scipy.integrate.solve_ivp(
            rates, (0.0, T), np.concatenate([l0, v0]), method="RK45",
            rtol=1e-11, atol=1e-13,
        )
        l_ref, v_ref = ref.y[:3, -1], ref.y[3:, -1]

        rk = run("rk23")
        np.testing.assert_allclose(rk.l, l_ref, rtol=0.0, atol=1e-8)
        np.testing.assert_allclose(rk.v, v_ref, rtol=0.0, atol=1e-7)

        # The first-order scheme at the same step is far worse, so the
        # bound above really does exercise the higher order.
        euler = run("semi_implicit_euler")
        assert np.max(np.abs(euler.l - l_ref)) > 100.0 * np.max(np.abs(rk.l - l_ref))

    def test_contact_macro_step_stays_bounded(self):
        scenario = press_scenario(duration=0.3, h=1e-3, integrator="rk23",
                                  name="rk23_press")
        log, summary = run_scenario(scenario)
        assert not log.aborted
        assert summary["lcp_convergence_rate"] >= 0.9
        assert summary["max_penetration_m"] <= 0.010


class TestRestingContact:
    def test_arm_settles_against_plane(self):
        """Pressed into a plane, the arm comes to rest without penetration.

        Settled means every chamber speed below 1e-4 m/s after the
        transient; penetration must stay under 10 mm throughout.
        """
        scenario = press_scenario(duration=0.3125, h=2.5e-5, name="resting")
        log, summary = run_scenario(scenario)
        assert not log.aborted
        assert summary["lcp_convergence_rate"] == 1.0
        settled = [float(np.max(np.abs(s.robot.v))) for s in log.states[2500:]]
        assert max(settled) <= 1e-4
        assert summary["max_penetration_m"] <= 0.010


class TestImpulseBookkeeping:
    def test_pressed_arm_momentum_identity(self):
        """Logged impulses account exactly for the non-free momentum change."""
        scenario = press_scenario(duration=0.03, name="audit")
        log, _ = run_scenario(scenario)
        assert not log.aborted
        pushing = 0
        for k in range(log.steps_completed):
            assert bookkeeping_residual(scenario, log, k) <= 1e-8
            m = log.metrics[k]
            pushing += any(r.normal_impulse > 0.0 for r in m.contacts)
            assert all(r.disk_index >= 1 for r in m.contacts)
        assert pushing > 100


class TestBallInteraction:
    def test_rubbing_disk_spins_ball_up(self, ball_run):
        _, log, summary = ball_run
        assert not log.aborted
        assert summary["lcp_convergence_rate"] == 1.0
        assert summary["max_penetration_m"] <= 1e-3
        touched = [m for m in log.metrics if m.active_contacts]
        assert len(touched) > 1000
        omega_y = [s.balls[0].omega[1] for s in log.states]
        assert min(omega_y) < -1.0
        assert log.states[-1].balls[0].omega[1] < -0.3
        # The sweep lives in the xz-plane, so spin must stay on the y-axis.
        for s in log.states[::50]:
            assert abs(s.balls[0].omega[0]) < 1e-9
            assert abs(s.balls[0].omega[2]) < 1e-9

    def test_ball_orientation_stays_unit(self, ball_run):
        _, log, _ = ball_run
        for s in log.states[::25]:
            assert abs(np.linalg.norm(s.balls[0].orientation) - 1.0) <= 1e-9
        turned = log.states[-1].balls[0].orientation - np.array([1.0, 0.0, 0.0, 0.0])
        assert np.linalg.norm(turned) > 1e-3

    def test_momentum_identity_with_ball_rows(self, ball_run):
        scenario, log, _ = ball_run
        in_contact = 0
        for k in range(0, log.steps_completed, 25):
            assert bookkeeping_residual(scenario, log, k) <= 1e-8
            in_contact += bool(log.metrics[k].active_contacts)
        assert in_contact > 50


class TestDegradation:
    def test_failed_solve_falls_back_to_free_step(self):
        """An unattainable tolerance degrades the step, never the run."""
        scenario = press_scenario(
            duration=0.005, solver=SolverConfig(fb_tolerance=1e-300), name="hopeless"
        )
        log, summary = run_scenario(scenario)
        assert not log.aborted
        assert log.steps_completed == log.planned_steps
        failed = [m for m in log.metrics if not m.lcp_converged]
        assert failed
        assert summary["lcp_convergence_rate"] < 1.0
        for m in failed:
            assert all(r.normal_impulse == 0.0 for r in m.contacts)
            assert all(r.mode == "separated" for r in m.contacts)
        for state in log.states:
            assert np.all(np.isfinite(state.robot.v))

    def test_abort_keeps_partial_log_and_summary(self, tmp_path):
        config = SimConfig(
            duration=0.1, schedule=ActuationSchedule.constant(np.full(3, -2000.0)), h=1e-4
        )
        scenario = Scenario(
            name="crush",
            world=SimWorld(robot=one_section()),
            initial=SimState(robot=RobotState(l=np.full(3, 0.02), v=np.zeros(3))),
            config=config,
        )
        log, summary = run_scenario(scenario, out_dir=tmp_path)
        assert log.aborted
        assert "collapsed" in log.abort_reason
        assert 0.0 < log.completion_fraction < 1.0
        assert len(log.states) == log.steps_completed + 1
        on_disk = json.loads((tmp_path / "summary.json").read_text())
        assert on_disk["aborted"] is True
        assert on_disk["abort_reason"] == log.abort_reason
        assert on_disk["steps_completed"] == log.steps_completed


class TestDeterminism:
    def test_reruns_are_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            run_scenario(press_scenario(duration=0.02, name="det"),
                         out_dir=tmp_path / sub)
        for name in ("summary.json", "trajectory.csv", "frames.json"):
            first = (tmp_path / "a" / name).read_bytes()
            second = (tmp_path / "b" / name).read_bytes()
            assert first == second


def logging_scenario():
    """Short pressed run with one (far away) ball, for the file writers."""
    params = one_section(gravity=(0.0, 0.0, 9.81))
    ceiling = EnvShape("ceiling", HalfSpace(normal=(0.0, 0.0, -1.0), offset=-0.16))
    orb = BallModel.homogeneous(mass=0.2, radius=0.04, center=[1.0, 1.0, 1.0],
                                label="orb")
    config = SimConfig(
        duration=0.004, schedule=ActuationSchedule.constant(np.zeros(3)), h=1e-4
    )
    initial = SimState(
        robot=RobotState(l=np.full(3, 0.0075), v=np.zeros(3)),
        balls=(BallState.at_rest(),),
    )
    return Scenario(
        name="logging",
        world=SimWorld(robot=params, shapes=(ceiling,), balls=(orb,)),
        initial=initial,
        config=config,
    )


@pytest.fixture(scope="module")
def outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("writers")
    scenario = logging_scenario()
    log, summary = run_scenario(scenario, out_dir=out, frame_stride=7)
    return scenario, log, summary, out


class TestWriters:
    def test_summary_round_trip(self, outputs):
        _, _, summary, out = outputs
        doc = json.loads((out / "summary.json").read_text())
        assert doc == summary
        assert doc["format_version"] == 1
        assert doc["scenario"] == "logging"
        assert doc["planned_steps"] == 40
        assert doc["steps_completed"] == 40
        assert doc["aborted"] is False

    def test_trajectory_csv_layout(self, outputs):
        _, log, _, out = outputs
        rows = (out / "trajectory.csv").read_text().splitlines()
        assert rows[0] == "# format_version=1"
        rows = rows[1:]
        assert rows[0].split(",") == [
            "time", "l_0", "l_1", "l_2", "v_0", "v_1", "v_2",
            "max_penetration", "lcp_converged", "lcp_iterations",
            "active_contacts", "kept_contacts",
            "n_separated", "n_sticking", "n_sliding",
        ]
        assert len(rows) == 1 + log.steps_completed
        assert float(rows[1].split(",")[0]) == pytest.approx(1e-4)
        for m, row in zip(log.metrics, rows[1:]):
            cells = row.split(",")
            assert int(cells[10]) == m.active_contacts
            assert int(cells[12]) + int(cells[13]) + int(cells[14]) == m.active_contacts

    def test_frames_structure(self, outputs):
        scenario, log, _, out = outputs
        doc = json.loads((out / "frames.json").read_text())
        assert doc["format_version"] == 1
        assert doc["stride"] == 7
        assert [s["type"] for s in doc["shapes"]] == ["halfspace"]
        assert doc["balls"][0]["label"] == "orb"
        # every seventh state plus the final one
        assert len(doc["frames"]) == 7
        assert doc["frames"][-1]["time"] == pytest.approx(log.states[-1].time)
        for frame in doc["frames"]:
            assert len(frame["disks"]) == len(disk_layout(scenario.world.robot))
            assert len(frame["ball_orientations"]) == 1


def _rec(disk, label, mode):
    return ContactRecord(
        disk_index=disk,
        shape_label=label,
        gap=0.0,
        normal_impulse=0.0 if mode == "separated" else 1e-3,
        facet_impulses=(0.0,) * 4,
        slip_speed=1e-3 if mode == "sliding" else 0.0,
        mode=mode,
        kept=True,
    )


def _metrics(t, *recs):
    return StepMetrics(
        time=t,
        lcp_converged=True,
        lcp_iterations=3,
        max_penetration=0.0,
        active_contacts=len(recs),
        kept_contacts=len(recs),
        contacts=recs,
    )


class TestModeTransitions:
    def test_event_sequence_includes_separation(self):
        log = TrajectoryLog(
            planned_steps=3,
            states=[],
            metrics=[
                _metrics(0.0, _rec(1, "wall", "sticking")),
                _metrics(0.1, _rec(1, "wall", "sliding")),
                _metrics(0.2),
            ],
        )
        assert log.mode_transitions() == [
            (0.0, 1, "wall", "separated", "sticking"),
            (0.1, 1, "wall", "sticking", "sliding"),
            (0.2, 1, "wall", "sliding", "separated"),
        ]

    def test_summary_counts_sticking_to_sliding(self):
        scenario = press_scenario(duration=0.01, name="synthetic")
        states = [
            SimState(robot=RobotState(l=np.full(3, 0.0075), v=np.zeros(3)), time=0.1 * k)
            for k in range(4)
        ]
        log = TrajectoryLog(
            planned_steps=3,
            states=states,
            metrics=[
                _metrics(0.0, _rec(2, "wall", "sticking"), _rec(3, "wall", "sticking")),
                _metrics(0.1, _rec(2, "wall", "sliding"), _rec(3, "wall", "sticking")),
                _metrics(0.2, _rec(2, "wall", "sticking"), _rec(3, "wall", "sliding")),
            ],
        )
        summary = summarize_log(scenario, log)
        assert summary["sticking_to_sliding_transitions"] == 2
        assert summary["sticking_to_sliding_pairs"] == [[2, "wall", 1], [3, "wall", 1]]


class TestBasePlate:
    def test_mounted_plate_ignores_touching_floor(self):
        """A plane the bolted base plate sits on produces no contact work."""
        floor = EnvShape("floor", HalfSpace(normal=(0.0, 0.0, 1.0), offset=-0.004))
        config = SimConfig(
            duration=0.001, schedule=ActuationSchedule.constant(np.zeros(3)), h=1e-4
        )
        log, summary = run_scenario(
            Scenario(
                name="plate",
                world=SimWorld(robot=one_section(), shapes=(floor,)),
                initial=SimState(robot=RobotState(l=np.full(3, 0.02), v=np.zeros(3))),
                config=config,
            )
        )
        assert not log.aborted
        assert summary["peak_active_contacts"] == 0


class TestAblationHarness:
    def _cells(self):
        ok = press_scenario(duration=0.02, name="ok")
        crush = Scenario(
            name="crush",
            world=SimWorld(robot=one_section()),
            initial=SimState(robot=RobotState(l=np.full(3, 0.02), v=np.zeros(3))),
            config=SimConfig(
                duration=0.02,
                schedule=ActuationSchedule.constant(np.full(3, -2000.0)),
                h=1e-4,
            ),
        )
        return (
            AblationCell(scenario=ok, subset="full", physical="press"),
            AblationCell(scenario=crush, subset="full", physical="crush"),
            AblationCell(scenario=ok, subset="none", physical="press"),
            AblationCell(scenario=crush, subset="none", physical="crush"),
        )

    def test_evaluate_cell_applies_thresholds(self):
        cells = self._cells()
        good = evaluate_cell(cells[0])
        assert good.passed and not good.aborted
        assert good.convergence_rate == 1.0
        bad = evaluate_cell(cells[1])
        assert bad.aborted and not bad.passed
        assert bad.completion < 0.8

    def test_report_tables(self):
        report = run_ablation(self._cells())
        assert report.subsets() == ["full", "none"]
        assert report.success_rate("full") == 0.5
        lines = report.to_csv_text().splitlines()
        assert lines[0] == "# format_version=1"
        assert lines[1] == "subset,success_rate,mean_convergence_rate,mean_peak_penetration_m"
        assert len(lines) == 4
        md = report.to_markdown_text()
        assert md.splitlines()[0].startswith("| subset |")
        assert "| full |" in md
        with pytest.raises(KeyError):
            report.success_rate("missing")

    def test_parallel_workers_match_serial(self):
        cells = self._cells()[:2]
        serial = run_ablation(cells, jobs=1)
        parallel = run_ablation(cells, jobs=2)
        assert serial.results == parallel.results
