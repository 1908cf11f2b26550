"""Problem definitions, uniform grids, and the built-in manufactured solutions.

Three benchmark problems are compiled in:

* example 1 -- 1D on (0, 1),  u = (t^(3+a) + t^2 + 1) x^2 (1-x)^2
* example 2 -- 1D on (-1, 1), u = (t^(3+a) + 1) (1+x)^2 (1-x)^2
* example 3 -- 2D on (0, 1)^2 with the half-sum fractional Laplacian,
               u = 200 (t^(2+a+b) + 1) x^2 (1-x)^2 y^2 (1-y)^2

All satisfy homogeneous Dirichlet boundary conditions exactly.  Custom
problems can bypass the compiled forms by passing tabulated source values to
the assembly layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import gamma


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable description of one solver run."""

    alpha: float
    beta: float
    kappa: float
    x_left: float
    x_right: float
    t_final: float
    M: int
    N: int
    dims: int = 1
    example_id: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie strictly in (0, 1), got {self.alpha}")
        if not 1.0 < self.beta < 2.0:
            raise ValueError(f"beta must lie strictly in (1, 2), got {self.beta}")
        if self.kappa <= 0:
            raise ValueError("diffusion coefficient kappa must be positive")
        if not self.x_left < self.x_right:
            raise ValueError("need x_left < x_right")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if self.dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")
        if self.example_id not in (1, 2, 3):
            raise ValueError(f"unknown example_id {self.example_id}")
        if (self.example_id == 3) != (self.dims == 2):
            raise ValueError("example 3 is the (only) 2D problem")

    @property
    def h(self) -> float:
        return (self.x_right - self.x_left) / self.N

    @property
    def tau_t(self) -> float:
        return self.t_final / self.M

    @property
    def n_interior(self) -> int:
        """Number of interior space unknowns per time level."""
        return (self.N - 1) ** self.dims


def example_spec(example_id: int, alpha: float, beta: float, M: int, N: int,
                 kappa: float = 1.0, t_final: float = 1.0) -> ProblemSpec:
    """ProblemSpec with the benchmark domain for the given example."""
    if example_id == 1:
        return ProblemSpec(alpha, beta, kappa, 0.0, 1.0, t_final, M, N,
                           dims=1, example_id=1)
    if example_id == 2:
        return ProblemSpec(alpha, beta, kappa, -1.0, 1.0, t_final, M, N,
                           dims=1, example_id=2)
    if example_id == 3:
        return ProblemSpec(alpha, beta, kappa, 0.0, 1.0, t_final, M, N,
                           dims=2, example_id=3)
    raise ValueError(f"unknown example_id {example_id}")


def spec_from_json(text_or_path) -> ProblemSpec:
    """Load a ProblemSpec from a JSON document; unknown keys are rejected."""
    text = str(text_or_path)
    if not text.lstrip().startswith("{"):
        with open(text_or_path) as fh:
            text = fh.read()
    data = json.loads(text)
    known = {f.name for f in fields(ProblemSpec)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown ProblemSpec keys: {sorted(unknown)}")
    return ProblemSpec(**data)


@dataclass(frozen=True)
class Grid:
    """Uniform space/time grid (2D runs reuse nodes_x along y)."""

    nodes_x: np.ndarray
    nodes_t: np.ndarray
    h: float
    tau_t: float


def build_grid(spec: ProblemSpec) -> Grid:
    nodes_x = np.linspace(spec.x_left, spec.x_right, spec.N + 1)
    nodes_t = np.linspace(0.0, spec.t_final, spec.M + 1)
    nodes_x.setflags(write=False)
    nodes_t.setflags(write=False)
    return Grid(nodes_x=nodes_x, nodes_t=nodes_t, h=spec.h, tau_t=spec.tau_t)


def _riesz_poly_bracket(x, beta):
    """{G3/G(3-b) [x^(2-b)+(1-x)^(2-b)] - 2 G4/G(4-b) [...] + G5/G(5-b) [...]}.

    Two-sided Riemann-Liouville image of x^2 (1-x)^2 on (0, 1).
    """
    x = np.asarray(x, dtype=float)
    xm = 1.0 - x
    return (
        gamma(3.0) / gamma(3.0 - beta) * (x ** (2.0 - beta) + xm ** (2.0 - beta))
        - 2.0 * gamma(4.0) / gamma(4.0 - beta) * (x ** (3.0 - beta) + xm ** (3.0 - beta))
        + gamma(5.0) / gamma(5.0 - beta) * (x ** (4.0 - beta) + xm ** (4.0 - beta))
    )


def eval_exact(spec: ProblemSpec, x, *rest):
    """Manufactured exact solution at (x[, y], t); vectorizes over arrays."""
    a, b = spec.alpha, spec.beta
    if spec.example_id == 1:
        (t,) = rest
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return (t ** (3.0 + a) + t**2 + 1.0) * x**2 * (1.0 - x) ** 2
    if spec.example_id == 2:
        (t,) = rest
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        return (t ** (3.0 + a) + 1.0) * (1.0 + x) ** 2 * (1.0 - x) ** 2
    # example 3 (2D)
    y, t = rest
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    return (
        200.0
        * (t ** (2.0 + a + b) + 1.0)
        * x**2 * (1.0 - x) ** 2 * y**2 * (1.0 - y) ** 2
    )


def eval_initial(spec: ProblemSpec, x, *rest):
    """Initial condition phi = u(., 0)."""
    return eval_exact(spec, x, *rest, 0.0)


def eval_source(spec: ProblemSpec, x, *rest):
    """Manufactured source term f at (x[, y], t); vectorizes over arrays."""
    a, b, kappa = spec.alpha, spec.beta, spec.kappa
    if spec.example_id == 1:
        (t,) = rest
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        time_part = (
            gamma(4.0 + a) / gamma(4.0) * t**3
            + gamma(3.0) / gamma(3.0 - a) * t ** (2.0 - a)
        )
        return time_part * x**2 * (1.0 - x) ** 2 + kappa * (
            t ** (3.0 + a) + t**2 + 1.0
        ) / (2.0 * np.cos(np.pi * b / 2.0)) * _riesz_poly_bracket(x, b)

    if spec.example_id == 2:
        (t,) = rest
        x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
        xp, xm = 1.0 + x, 1.0 - x
        bracket = (
            4.0 * gamma(3.0) / gamma(3.0 - b) * (xp ** (2.0 - b) + xm ** (2.0 - b))
            - 4.0 * gamma(4.0) / gamma(4.0 - b) * (xp ** (3.0 - b) + xm ** (3.0 - b))
            + gamma(5.0) / gamma(5.0 - b) * (xp ** (4.0 - b) + xm ** (4.0 - b))
        )
        return (
            gamma(4.0 + a) / gamma(4.0) * t**3 * xp**2 * xm**2
            + kappa * (t ** (3.0 + a) + 1.0) / (2.0 * np.cos(np.pi * b / 2.0)) * bracket
        )

    # example 3 (2D); spatial coefficient kappa/2 on each direction
    y, t = rest
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    time_hist = 50.0 * kappa * (t ** (2.0 + a + b) + 1.0) / np.cos(np.pi * b / 2.0)
    return (
        200.0 * gamma(3.0 + a + b) / gamma(3.0 + b) * t ** (2.0 + b)
        * x**2 * (1.0 - x) ** 2 * y**2 * (1.0 - y) ** 2
        + time_hist * _riesz_poly_bracket(x, b) * y**2 * (1.0 - y) ** 2
        + time_hist * _riesz_poly_bracket(y, b) * x**2 * (1.0 - x) ** 2
    )
