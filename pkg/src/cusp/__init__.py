"""Contact simulation and contact-implicit planning for a pneumatic soft arm.

The package is organised bottom-up:

``cusp.lcp``
    Dense linear complementarity problems and a damped semismooth Newton
    solver with a solution certificate.
``cusp.conditioning``
    Rank selection, equilibration, and regularization applied to assembled
    contact systems before they reach the solver.
``cusp.soft_robot``
    Piecewise-constant-curvature kinematics, body Jacobians, and lumped
    dynamics of a chamber-actuated arm.
``cusp.contact_geom``
    Shape primitives, gap functions, and contact frames.
``cusp.contact_assembly``
    Frictional contact candidates assembled into one global
    complementarity system.
``cusp.simulator``
    Time stepping, scenario runs, trajectory logging, and the conditioning
    ablation harness.
``cusp.scenarios``
    Bundled scenario builders and the 64-cell conditioning ablation grid.
``cusp.config``
    TOML scenario/grid/task files: schemas, validation, loaders.
``cusp.planner``
    Ball-rotation task model, direct transcription with complementarity
    constraints, and the two-stage solve pipeline.
``cusp.cli``
    The ``cusp`` command line: ``simulate``, ``ablate``, ``plan``.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
