"""Command line entry points: ``cusp simulate``, ``cusp ablate``, ``cusp plan``.

Exit codes: 0 for a completed run, 1 for a config/file problem (the
offending key is named on stderr), 2 for a run that started but did not
finish (simulation abort, planner stall).  Verbosity comes from the
``CUSP_LOG_LEVEL`` environment variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import pathlib
import sys

from .config import ConfigError, load_grid, load_scenario, packaged_file, packaged_names
from .simulator import run_ablation, run_scenario

log = logging.getLogger("cusp")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INCOMPLETE = 2


def _init_logging():
    name = os.environ.get("CUSP_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _resolve_input(path_str: str) -> pathlib.Path:
    """A filesystem path, with bundled data files reachable by bare name."""
    path = pathlib.Path(path_str)
    if path.exists():
        return path
    if path_str in packaged_names():
        return packaged_file(path_str)
    raise ConfigError(f"no such file: {path_str}")


def cmd_simulate(args) -> int:
    loaded = load_scenario(_resolve_input(args.scenario))
    scenario = loaded.scenario
    overrides = {}
    for key in ("h", "integrator", "duration"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if overrides:
        try:
            scenario = dataclasses.replace(
                scenario, config=dataclasses.replace(scenario.config, **overrides)
            )
        except ValueError as exc:
            raise ConfigError(f"override rejected: {exc}") from exc
    extra = {}
    if overrides:
        extra["overrides"] = overrides
    if args.seed is not None:
        extra["seed"] = args.seed

    out_dir = args.out_dir or loaded.output_dir or f"runs/{scenario.name}"
    log.info("simulate %s: %.4g s at h=%.3g", scenario.name, scenario.config.duration, scenario.config.h)
    _, summary = run_scenario(scenario, out_dir, extra_summary=extra or None)
    print(
        "{name}: {done}/{planned} steps, convergence {conv:.1%}, "
        "max penetration {pen:.2e} m".format(
            name=scenario.name,
            done=summary["steps_completed"],
            planned=summary["planned_steps"],
            conv=summary["lcp_convergence_rate"],
            pen=summary["max_penetration_m"],
        )
    )
    print(f"wrote {out_dir}")
    if summary["aborted"]:
        print(f"aborted: {summary['abort_reason']}", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def cmd_ablate(args) -> int:
    loaded = load_grid(_resolve_input(args.grid))
    out_dir = pathlib.Path(args.out_dir or loaded.output_dir or f"runs/{loaded.name}")
    log.info("ablate %s: %d cells, %d worker(s)", loaded.name, len(loaded.cells), args.jobs)
    report = run_ablation(list(loaded.cells), jobs=args.jobs)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.csv").write_text(report.to_csv_text())
    (out_dir / "ablation.md").write_text(report.to_markdown_text())
    print(report.to_markdown_text(), end="")
    print(f"wrote {out_dir}")
    return EXIT_OK


def cmd_plan(args) -> int:
    # Imported lazily: the planner pulls in the transcription machinery,
    # which plain simulate/ablate runs never need.
    from .config import load_task
    from .planner import run_task

    spec = load_task(_resolve_input(args.task))
    out_dir = pathlib.Path(args.out_dir or spec.output_dir or f"runs/{spec.name}")
    log.info("plan %s: stage=%s", spec.name, args.stage)
    outcome = run_task(spec, stage=args.stage, out_dir=out_dir)
    print(
        "{name} [{stage}]: objective {obj:.6g}, terminal orientation cost {jq:.3e}".format(
            name=spec.name,
            stage=outcome.stage,
            obj=outcome.objective,
            jq=outcome.terminal_quat_cost,
        )
    )
    print(f"wrote {out_dir}")
    if not outcome.converged:
        print(f"stalled: {outcome.status}", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def _common_flags(sub) -> None:
    sub.add_argument("--out-dir", default=None, help="output directory (default: from the file)")
    sub.add_argument(
        "--seed",
        type=int,
        default=None,
        help="reserved; recorded in the summary but unused (runs are deterministic)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cusp",
        description="Contact simulation and contact-implicit planning for a pneumatic soft arm.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario file and write its logs")
    sim.add_argument("scenario", help="scenario TOML (path, or the name of a bundled file)")
    sim.add_argument("--h", type=float, default=None, help="override the step size [s]")
    sim.add_argument(
        "--integrator",
        choices=["semi_implicit_euler", "rk23"],
        default=None,
        help="override the integrator",
    )
    sim.add_argument("--duration", type=float, default=None, help="override the run length [s]")
    _common_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    abl = sub.add_parser("ablate", help="run a conditioning ablation grid")
    abl.add_argument("grid", help="grid TOML (path, or the name of a bundled file)")
    abl.add_argument("--jobs", type=int, default=1, help="worker processes for the grid")
    _common_flags(abl)
    abl.set_defaults(func=cmd_ablate)

    plan = sub.add_parser("plan", help="solve a ball-rotation task file")
    plan.add_argument("task", help="task TOML (path, or the name of a bundled file)")
    plan.add_argument(
        "--stage",
        choices=["kinematic", "dynamic", "both"],
        default="both",
        help="which stage(s) to run; 'both' warm-starts dynamic from kinematic",
    )
    _common_flags(plan)
    plan.set_defaults(func=cmd_plan)
    return parser


def main(argv=None) -> int:
    _init_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
