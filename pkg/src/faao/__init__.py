"""Fractional all-at-once solver with bilateral sine-transform preconditioning."""

__version__ = "0.1.0"

from .problems import Grid, ProblemSpec, build_grid, example_spec, spec_from_json  # noqa: E402,F401
from .driver import solve_problem  # noqa: E402,F401
