"""Bundled scenario builders and the conditioning ablation grid.

Two narrative scenarios ship with the package:

``scenario_a``
    A horizontally mounted arm droops under gravity onto a 45 degree box
    face, then a chamber ramp drives the contacting segment down the
    incline.  Exercises sticking, the sticking-to-sliding transition,
    and steady sliding against one face.
``scenario_b``
    A lighter arm (3 interior disks per section) droops onto one sphere,
    then a distal chamber ramp sweeps the tip across a second sphere.
    Exercises sequential contact with curved obstacles.

The ablation grid crosses eight physical drop cells (face tilt 45/60
degrees, 3/6 interior disks per section, fixed-step or adaptive
integration) with the eight on/off subsets of the conditioning pipeline.
"""

from __future__ import annotations

import numpy as np

from .conditioning import ConditioningConfig
from .contact_geom import Box, Sphere
from .simulator import (
    AblationCell,
    ActuationSchedule,
    EnvShape,
    Scenario,
    SimConfig,
    SimState,
    SimWorld,
)
from .soft_robot import RobotParams, RobotState

# Uniform chamber extension every bundled run starts from.
REST_OFFSET = 0.02


def _rest_state(params: RobotParams) -> SimState:
    n = params.dof
    return SimState(robot=RobotState(l=np.full(n, REST_OFFSET), v=np.zeros(n)))


def _ramp_schedule(knots, final_torques) -> ActuationSchedule:
    """Hold zero until the middle knot, ramp linearly to the final row."""
    values = np.zeros((3, len(final_torques)))
    values[2] = final_torques
    return ActuationSchedule(times=np.asarray(knots, dtype=float), values=values)


def build_scenario_a() -> Scenario:
    """Droop onto a 45 degree box face, then slide down it.

    The face normal is tilted 45 degrees from vertical in the plane of the
    droop, so the arm lands on the upper face and the late chamber ramp
    (sections two and three, from t = 1 s) pushes it into a slide.
    """
    params = RobotParams(gravity=(0.0, -9.81, 0.0))

    c = np.cos(np.pi / 4)
    normal = np.array([0.0, c, c])
    upslope = np.array([0.0, -c, c])
    rotation = np.column_stack([np.array([1.0, 0.0, 0.0]), normal, upslope])
    half_extents = np.array([0.3, 0.2, 0.25])
    face_center = np.array([0.0, -0.25, 0.45])
    box = Box(
        center=face_center - half_extents[1] * normal,
        rotation=rotation,
        half_extents=half_extents,
    )

    torques = np.zeros(9)
    torques[3:9] = 40.0
    return Scenario(
        name="scenario_a",
        world=SimWorld(robot=params, shapes=(EnvShape("box", box),)),
        initial=_rest_state(params),
        config=SimConfig(
            duration=2.0,
            schedule=_ramp_schedule([0.0, 1.0, 2.0], torques),
            h=1e-4,
        ),
    )


def build_scenario_b() -> Scenario:
    """Droop onto one sphere, then sweep the tip across a second one."""
    params = RobotParams(gravity=(0.0, -9.81, 0.0), disks_per_section=3)

    shapes = (
        EnvShape("sphere_mid", Sphere(center=np.array([0.0, -0.22, 0.24]), radius=0.07)),
        EnvShape("sphere_tip", Sphere(center=np.array([-0.19, -0.17, 0.34]), radius=0.06)),
    )

    # Chamber 6 is the first chamber of the last section; pressurising it
    # alone bends the tip toward -x, into the second sphere.
    torques = np.zeros(9)
    torques[6] = 40.0
    return Scenario(
        name="scenario_b",
        world=SimWorld(robot=params, shapes=shapes),
        initial=_rest_state(params),
        config=SimConfig(
            duration=2.0,
            schedule=_ramp_schedule([0.0, 0.8, 1.6], torques),
            h=1e-4,
        ),
    )


# ---------------------------------------------------------------------------
# Conditioning ablation grid


# Section masses for the drop cells.  Lighter than the default arm so the
# adaptive integrator keeps a stability margin at its 1 ms macro step.
ABLATION_MASSES = (1.17, 0.8, 0.6)

CELL_DURATION = 0.4
CELL_RAMP_KNOTS = (0.0, 0.15, 0.3)
CELL_RAMP_TORQUE = 40.0

# Disk rims start 22 mm off the face: 72 mm from backbone to plane minus
# the 50 mm disk radius.
GUTTER_CLEARANCE = 0.072

_STEP_SIZES = {"semi_implicit_euler": 1e-4, "rk23": 1e-3}
_INTEGRATOR_TAGS = {"semi_implicit_euler": "euler", "rk23": "rk23"}


def gutter_box(angle_deg: float) -> Box:
    """Box whose top face is parallel to the undeformed backbone.

    The face is rolled about the backbone axis by ``angle_deg``, so the
    sagging arm lands lengthwise across it (several disks at once) and
    then slides sideways down the incline.
    """
    phi = np.radians(angle_deg)
    along = np.array([np.cos(phi), np.sin(phi), 0.0])
    normal = np.array([-np.sin(phi), np.cos(phi), 0.0])
    rotation = np.column_stack([along, normal, np.array([0.0, 0.0, 1.0])])
    half_extents = np.array([0.45, 0.2, 0.33])
    face_center = -GUTTER_CLEARANCE * normal + np.array([0.0, 0.0, 0.26])
    return Box(
        center=face_center - half_extents[1] * normal,
        rotation=rotation,
        half_extents=half_extents,
    )


def conditioning_subsets() -> dict[str, ConditioningConfig]:
    """The eight on/off combinations of the conditioning stages.

    Ordered from everything off to everything on; the names index the
    ablation report rows.
    """
    subsets: dict[str, ConditioningConfig] = {}
    for rank in (False, True):
        for ruiz in (False, True):
            for tik in (False, True):
                tags = [
                    tag
                    for tag, on in (("rank", rank), ("ruiz", ruiz), ("tikhonov", tik))
                    if on
                ]
                if not tags:
                    name = "none"
                elif len(tags) == 3:
                    name = "full"
                else:
                    name = "+".join(tags)
                subsets[name] = ConditioningConfig(
                    rank_enabled=rank, ruiz_enabled=ruiz, tikhonov_enabled=tik
                )
    order = [
        "none",
        "rank",
        "ruiz",
        "tikhonov",
        "rank+ruiz",
        "rank+tikhonov",
        "ruiz+tikhonov",
        "full",
    ]
    return {name: subsets[name] for name in order}


def build_ablation_scenario(
    angle_deg: float,
    disks_per_section: int,
    integrator: str,
    conditioning: ConditioningConfig | None = None,
    *,
    name: str = "",
    duration: float = CELL_DURATION,
) -> Scenario:
    if integrator not in _STEP_SIZES:
        raise ValueError(f"no ablation step size for integrator {integrator!r}")
    params = RobotParams(
        gravity=(0.0, -9.81, 0.0),
        section_masses=ABLATION_MASSES,
        disks_per_section=disks_per_section,
    )
    torques = np.zeros(9)
    torques[3:9] = CELL_RAMP_TORQUE
    return Scenario(
        name=name or f"ablation_{int(angle_deg)}deg_{disks_per_section}disk_{_INTEGRATOR_TAGS[integrator]}",
        world=SimWorld(robot=params, shapes=(EnvShape("box", gutter_box(angle_deg)),)),
        initial=_rest_state(params),
        config=SimConfig(
            duration=duration,
            schedule=_ramp_schedule(CELL_RAMP_KNOTS, torques),
            h=_STEP_SIZES[integrator],
            integrator=integrator,
            conditioning=conditioning if conditioning is not None else ConditioningConfig(),
        ),
    )


def physical_cells() -> list[tuple[str, float, int, str]]:
    """(label, face angle, disks per section, integrator) for the 8 drops."""
    cells = []
    for angle in (45.0, 60.0):
        for disks in (3, 6):
            for integrator in ("semi_implicit_euler", "rk23"):
                label = f"{int(angle)}deg-{disks}disk-{_INTEGRATOR_TAGS[integrator]}"
                cells.append((label, angle, disks, integrator))
    return cells


def build_ablation_cells() -> list[AblationCell]:
    """The full 64-cell grid: 8 physical drops x 8 conditioning subsets."""
    subsets = conditioning_subsets()
    cells = []
    for label, angle, disks, integrator in physical_cells():
        for subset_name, cond in subsets.items():
            scenario = build_ablation_scenario(
                angle,
                disks,
                integrator,
                cond,
                name=f"ablation-{label}-{subset_name}",
            )
            cells.append(
                AblationCell(scenario=scenario, subset=subset_name, physical=label)
            )
    return cells


SCENARIO_BUILDERS = {
    "scenario_a": build_scenario_a,
    "scenario_b": build_scenario_b,
}
