"""Human-editable TOML files for scenarios, ablation grids, and plan tasks.

Every file carries a ``format_version`` field and is validated against a
JSON schema before any object is built.  Unknown keys are rejected with the
offending key named, at every nesting level.  Loaders return fully built
domain objects, so the command line and the Python API construct scenarios
through exactly the same path.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

import jsonschema

from .ball import BallModel, BallState
from .conditioning import ConditioningConfig
from .contact_geom import Box, HalfSpace, Sphere
from .lcp import SolverConfig
from .scenarios import build_ablation_scenario, conditioning_subsets
from .simulator import (
    AblationCell,
    ActuationSchedule,
    ContactParams,
    EnvShape,
    Scenario,
    SimConfig,
    SimState,
    SimWorld,
)
from .soft_robot import RobotParams, RobotState

FILE_FORMAT_VERSION = 1


class ConfigError(Exception):
    """A config file failed to parse or validate; the message names the problem."""


# ---------------------------------------------------------------------------
# Schemas

_VEC3 = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 3,
    "maxItems": 3,
}
_MAT3 = {"type": "array", "items": _VEC3, "minItems": 3, "maxItems": 3}
_NUMBER_OR_LIST = {
    "anyOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]
}

_ROBOT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "sections": {"type": "integer", "minimum": 1},
        "chambers_per_section": {"const": 3},
        "L0": {"type": "number", "exclusiveMinimum": 0},
        "chamber_offset": {"type": "number", "exclusiveMinimum": 0},
        "section_masses": {"type": "array", "items": {"type": "number"}},
        "K": {"type": "number"},
        "B": {"type": "number"},
        "gravity": _VEC3,
        "disk_radius": {"type": "number", "exclusiveMinimum": 0},
        "disks_per_section": {"type": "integer", "minimum": 0},
        "disk_half_thickness": {"type": "number", "exclusiveMinimum": 0},
    },
}

_SHAPE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["label", "kind", "center", "rotation", "half_extents"],
            "properties": {
                "label": {"type": "string", "minLength": 1},
                "kind": {"const": "box"},
                "center": _VEC3,
                "rotation": _MAT3,
                "half_extents": _VEC3,
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["label", "kind", "center", "radius"],
            "properties": {
                "label": {"type": "string", "minLength": 1},
                "kind": {"const": "sphere"},
                "center": _VEC3,
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["label", "kind", "normal", "offset"],
            "properties": {
                "label": {"type": "string", "minLength": 1},
                "kind": {"const": "half_space"},
                "normal": _VEC3,
                "offset": {"type": "number"},
            },
        },
    ]
}

_BALL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mass", "radius", "center"],
    "properties": {
        "label": {"type": "string", "minLength": 1},
        "mass": {"type": "number", "exclusiveMinimum": 0},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "center": _VEC3,
        "damping": {"type": "number", "minimum": 0},
        "omega": _VEC3,
    },
}

_SIM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["duration"],
    "properties": {
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "integrator": {"enum": ["semi_implicit_euler", "rk23"]},
        "alpha": {"type": "number"},
        "conditioning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rank_enabled": {"type": "boolean"},
                "ruiz_enabled": {"type": "boolean"},
                "tikhonov_enabled": {"type": "boolean"},
                "eps_rank": {"type": "number"},
                "ruiz_iterations": {"type": "integer"},
                "eps_tikhonov": {"type": "number"},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iterations": {"type": "integer", "minimum": 0},
                "fb_tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

_SCHEDULE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["times", "values"],
    "properties": {
        "times": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "values": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
            "minItems": 1,
        },
    },
}

_CONTACT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mu": {"type": "number", "minimum": 0},
        "facet_count": {"type": "integer"},
        "activation_distance": {"type": "number"},
        "eps_sdf": {"type": "number"},
    },
}

_INITIAL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"l": _NUMBER_OR_LIST, "v": _NUMBER_OR_LIST},
}

_OUTPUT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"directory": {"type": "string", "minLength": 1}},
}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version", "name", "sim", "schedule"],
    "properties": {
        "format_version": {"const": FILE_FORMAT_VERSION},
        "name": {"type": "string", "minLength": 1},
        "robot": _ROBOT_SCHEMA,
        "shapes": {"type": "array", "items": _SHAPE_SCHEMA},
        "balls": {"type": "array", "items": _BALL_SCHEMA},
        "contact": _CONTACT_SCHEMA,
        "sim": _SIM_SCHEMA,
        "schedule": _SCHEDULE_SCHEMA,
        "initial": _INITIAL_SCHEMA,
        "output": _OUTPUT_SCHEMA,
    },
}

GRID_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version", "name", "physical"],
    "properties": {
        "format_version": {"const": FILE_FORMAT_VERSION},
        "name": {"type": "string", "minLength": 1},
        "physical": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["label", "face_angle_deg", "disks_per_section", "integrator"],
                "properties": {
                    "label": {"type": "string", "minLength": 1},
                    "face_angle_deg": {"type": "number"},
                    "disks_per_section": {"type": "integer", "minimum": 0},
                    "integrator": {"enum": ["semi_implicit_euler", "rk23"]},
                },
            },
        },
        "subsets": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "string", "minLength": 1},
        },
        "output": _OUTPUT_SCHEMA,
    },
}

TASK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["format_version", "name", "task", "ball"],
    "properties": {
        "format_version": {"const": FILE_FORMAT_VERSION},
        "name": {"type": "string", "minLength": 1},
        "task": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "angle_deg", "steps", "horizon_s"],
            "properties": {
                "axis": {"enum": ["x", "y", "z"]},
                "angle_deg": {"type": "number"},
                "steps": {"type": "integer", "minimum": 1},
                "horizon_s": {"type": "number", "exclusiveMinimum": 0},
                "mu": {"type": "number", "minimum": 0},
                "friction_directions": {"type": "integer", "minimum": 2},
                "scholtes_eps": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "ball": _BALL_SCHEMA,
        "robot": _ROBOT_SCHEMA,
        "initial": _INITIAL_SCHEMA,
        "output": _OUTPUT_SCHEMA,
    },
}


# ---------------------------------------------------------------------------
# Loading and validation


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc


def _validate(doc: dict, schema: dict, path) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=jsonschema.exceptions.relevance)
    if not errors:
        return
    best = jsonschema.exceptions.best_match(errors)
    where = ".".join(str(part) for part in best.absolute_path) or "top level"
    raise ConfigError(f"{path}: {where}: {best.message}")


def _broadcast(value, n, default):
    if value is None:
        return np.full(n, default, dtype=float)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n, arr[0])
    return arr


def _build_robot(table: dict | None) -> RobotParams:
    if not table:
        return RobotParams()
    kwargs = dict(table)
    for key in ("section_masses", "gravity"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return RobotParams(**kwargs)


def _build_shape(entry: dict) -> EnvShape:
    kind = entry["kind"]
    if kind == "box":
        shape = Box(
            center=np.asarray(entry["center"], dtype=float),
            rotation=np.asarray(entry["rotation"], dtype=float),
            half_extents=np.asarray(entry["half_extents"], dtype=float),
        )
    elif kind == "sphere":
        shape = Sphere(center=np.asarray(entry["center"], dtype=float), radius=entry["radius"])
    else:
        shape = HalfSpace(normal=np.asarray(entry["normal"], dtype=float), offset=entry["offset"])
    return EnvShape(entry["label"], shape)


def _build_ball(entry: dict) -> tuple[BallModel, BallState]:
    model = BallModel.homogeneous(
        mass=entry["mass"],
        radius=entry["radius"],
        center=np.asarray(entry["center"], dtype=float),
        damping=entry.get("damping", 0.0),
        label=entry.get("label", "ball"),
    )
    state = BallState(
        orientation=np.array([1.0, 0.0, 0.0, 0.0]),
        omega=np.asarray(entry.get("omega", (0.0, 0.0, 0.0)), dtype=float),
    )
    return model, state


def _build_sim_config(table: dict, schedule: ActuationSchedule) -> SimConfig:
    kwargs = {"duration": table["duration"], "schedule": schedule}
    for key in ("h", "integrator", "alpha"):
        if key in table:
            kwargs[key] = table[key]
    if "conditioning" in table:
        kwargs["conditioning"] = ConditioningConfig(**table["conditioning"])
    if "solver" in table:
        kwargs["solver"] = SolverConfig(**table["solver"])
    return SimConfig(**kwargs)


@dataclass(frozen=True)
class LoadedScenario:
    scenario: Scenario
    output_dir: str | None


@dataclass(frozen=True)
class LoadedGrid:
    name: str
    cells: tuple
    output_dir: str | None


@dataclass(frozen=True)
class TaskSpec:
    """A validated plan task: who rotates what, by how much, over how long."""

    name: str
    robot: RobotParams
    ball: BallModel
    axis: str
    angle_deg: float
    steps: int
    horizon: float
    mu: float
    friction_directions: int
    scholtes_eps: float
    l0: np.ndarray
    output_dir: str | None


def load_scenario(path) -> LoadedScenario:
    """Parse, validate, and build a scenario file."""
    doc = _read_toml(path)
    _validate(doc, SCENARIO_SCHEMA, path)
    try:
        robot = _build_robot(doc.get("robot"))
        shapes = tuple(_build_shape(entry) for entry in doc.get("shapes", ()))
        built_balls = [_build_ball(entry) for entry in doc.get("balls", ())]
        schedule = ActuationSchedule(
            times=np.asarray(doc["schedule"]["times"], dtype=float),
            values=np.asarray(doc["schedule"]["values"], dtype=float),
        )
        initial_doc = doc.get("initial", {})
        initial = SimState(
            robot=RobotState(
                l=_broadcast(initial_doc.get("l"), robot.dof, 0.0),
                v=_broadcast(initial_doc.get("v"), robot.dof, 0.0),
            ),
            balls=tuple(state for _, state in built_balls),
        )
        world_kwargs = {}
        if "contact" in doc:
            world_kwargs["contact"] = ContactParams(**doc["contact"])
        scenario = Scenario(
            name=doc["name"],
            world=SimWorld(
                robot=robot,
                shapes=shapes,
                balls=tuple(model for model, _ in built_balls),
                **world_kwargs,
            ),
            initial=initial,
            config=_build_sim_config(doc["sim"], schedule),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return LoadedScenario(scenario=scenario, output_dir=doc.get("output", {}).get("directory"))


def load_grid(path) -> LoadedGrid:
    """Parse, validate, and expand an ablation grid file into cells."""
    doc = _read_toml(path)
    _validate(doc, GRID_SCHEMA, path)
    subsets = conditioning_subsets()
    chosen = doc.get("subsets", list(subsets))
    unknown = [name for name in chosen if name not in subsets]
    if unknown:
        raise ConfigError(f"{path}: unknown conditioning subset {unknown[0]!r}")
    labels = [entry["label"] for entry in doc["physical"]]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{path}: duplicate physical cell labels")
    cells = []
    try:
        for entry in doc["physical"]:
            for subset_name in chosen:
                scenario = build_ablation_scenario(
                    entry["face_angle_deg"],
                    entry["disks_per_section"],
                    entry["integrator"],
                    subsets[subset_name],
                    name=f"{doc['name']}-{entry['label']}-{subset_name}",
                )
                cells.append(
                    AblationCell(
                        scenario=scenario, subset=subset_name, physical=entry["label"]
                    )
                )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return LoadedGrid(
        name=doc["name"],
        cells=tuple(cells),
        output_dir=doc.get("output", {}).get("directory"),
    )


def load_task(path) -> TaskSpec:
    """Parse and validate a plan task file."""
    doc = _read_toml(path)
    _validate(doc, TASK_SCHEMA, path)
    task = doc["task"]
    try:
        robot = _build_robot(doc.get("robot"))
        ball, _ = _build_ball(doc["ball"])
        return TaskSpec(
            name=doc["name"],
            robot=robot,
            ball=ball,
            axis=task["axis"],
            angle_deg=float(task["angle_deg"]),
            steps=int(task["steps"]),
            horizon=float(task["horizon_s"]),
            mu=float(task.get("mu", 0.6)),
            friction_directions=int(task.get("friction_directions", 10)),
            scholtes_eps=float(task.get("scholtes_eps", 1e-7)),
            l0=_broadcast(doc.get("initial", {}).get("l"), robot.dof, 0.0),
            output_dir=doc.get("output", {}).get("directory"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def packaged_file(name: str):
    """Path to a bundled data file, e.g. ``packaged_file("scenario_a.toml")``."""
    candidate = resources.files("cusp") / "data" / name
    if not candidate.is_file():
        raise ConfigError(f"no bundled file named {name!r}")
    return candidate


def packaged_names() -> list:
    return sorted(
        entry.name
        for entry in (resources.files("cusp") / "data").iterdir()
        if entry.name.endswith(".toml")
    )
