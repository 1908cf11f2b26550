"""End-to-end solve pipeline shared by the CLI and the experiment suites."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .analysis import ErrorReport, attach_orders, compute_errors
from .assembly import (
    SPACE_MAJOR, SolutionField, StarterSolution, assemble_system,
    extract_solution, solve_starter,
)
from .krylov import SolveReport, SolverConfig, bicgstab, direct_dense_solve
from .precond import apply_Pl_inv, apply_Pr_inv, build_preconditioner
from .problems import ProblemSpec, example_spec
from .weights import l2_weights

SOLVERS = ("dense", "bicgstab", "pbicgstab")


@dataclass
class SolveResult:
    spec: ProblemSpec
    field: SolutionField
    starter: StarterSolution
    report: SolveReport
    errors: ErrorReport
    setup_time: float

    @property
    def iter1_mean(self) -> float:
        return self.starter.mean_iterations

    @property
    def iter2(self) -> int:
        return self.report.iterations


def solve_problem(
    spec: ProblemSpec,
    solver: str = "pbicgstab",
    tol: float = 1e-9,
    max_iter: int = 1000,
) -> SolveResult:
    """Starter march, assembly, and the chosen all-at-once solve."""
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    t0 = time.perf_counter()
    weights = l2_weights(spec.alpha, spec.M)
    # the starter keeps the standard iteration cap; max_iter only governs
    # the all-at-once solve
    starter = solve_starter(spec, weights, tol=tol)
    sys = assemble_system(spec, weights, starter, ordering=SPACE_MAJOR)
    setup_time = time.perf_counter() - t0

    if solver == "dense":
        t1 = time.perf_counter()
        x = direct_dense_solve(sys)
        report = SolveReport(iterations=0, converged=True, final_relres=0.0,
                             wall_time=time.perf_counter() - t1)
    elif solver == "bicgstab":
        x, report = bicgstab(sys.matvec, sys.rhs,
                             SolverConfig(tol=tol, max_iter=max_iter))
    else:
        P = build_preconditioner(sys)
        x, report = bicgstab(
            sys.matvec, sys.rhs, SolverConfig(tol=tol, max_iter=max_iter),
            left_right=(lambda v: apply_Pl_inv(P, v), lambda v: apply_Pr_inv(P, v)),
        )

    field = extract_solution(sys, x)
    errors = compute_errors(field, spec)
    return SolveResult(spec=spec, field=field, starter=starter, report=report,
                       errors=errors, setup_time=setup_time)


def ladder_N(M: int, alpha: float) -> int:
    """Space resolution tied to the time ladder, N = ceil(M^((3-alpha)/2))."""
    return int(np.ceil(M ** ((3.0 - alpha) / 2.0)))


def time_ladder_specs(example_id: int, alpha: float, beta: float, M0: int,
                      levels: int, kappa: float = 1.0) -> list[ProblemSpec]:
    return [
        example_spec(example_id, alpha, beta, M0 * 2**k, ladder_N(M0 * 2**k, alpha),
                     kappa=kappa)
        for k in range(levels)
    ]


def space_ladder_specs(example_id: int, alpha: float, beta: float, M: int,
                       N0: int, levels: int, kappa: float = 1.0) -> list[ProblemSpec]:
    return [
        example_spec(example_id, alpha, beta, M, N0 * 2**k, kappa=kappa)
        for k in range(levels)
    ]


def convergence_study(specs: list[ProblemSpec], solver: str = "pbicgstab",
                      tol: float = 1e-9, max_iter: int = 1000):
    """Solve a refinement ladder and tabulate errors with observed orders.

    Returns (rows, results) where each row is
    (M, N, err_inf, order_inf, err_2, order_2) and orders are None on the
    coarsest level (or a single-level ladder).
    """
    results = [solve_problem(s, solver=solver, tol=tol, max_iter=max_iter)
               for s in specs]
    reports = [r.errors for r in results]
    if len(specs) > 1:
        time_ratios = [a.tau_t / b.tau_t for a, b in zip(specs, specs[1:])]
        if any(abs(r - 1.0) > 1e-12 for r in time_ratios):
            ratios = time_ratios
        else:
            ratios = [a.h / b.h for a, b in zip(specs, specs[1:])]
        reports = attach_orders(reports, ratios)
    rows = [
        (s.M, s.N, rep.err_inf, rep.order_inf, rep.err_2, rep.order_2)
        for s, rep in zip(specs, reports)
    ]
    return rows, results
