"""Error norms, convergence orders, condition numbers, spectra, and the dense
reference builders behind every oracle comparison.

Dense paths materialize the operators from their definitions (Kronecker
products of dense blocks, eigendecompositions for fractional powers) rather
than through the fast applies, so they stay independent of the code paths
they are used to check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh, svdvals

from .assembly import AllAtOnceSystem, SolutionField, assemble_operator
from .krylov import DENSE_GUARD, SolverConfig, cg
from .problems import ProblemSpec, build_grid, eval_exact
from .structured import hankel_correction

MATRIX_TAGS = (
    "Mtilde",
    "Pl_inv_Mtilde",
    "Mtilde_Pr_inv",
    "Pl_inv_Mtilde_Pr_inv",
    "At_plus_AtT",
    "Gtau_inv_Gbeta",
)


@dataclass(frozen=True)
class ErrorReport:
    """Max-norm and h-weighted-L2 errors, optionally with observed orders."""

    err_inf: float
    err_2: float
    order_inf: float | None = None
    order_2: float | None = None


def exact_field(spec: ProblemSpec, grid=None) -> np.ndarray:
    """Exact solution sampled on the full space-time grid."""
    grid = grid or build_grid(spec)
    if spec.dims == 1:
        T, X = np.meshgrid(grid.nodes_t, grid.nodes_x, indexing="ij")
        return eval_exact(spec, X, T)
    T, X, Y = np.meshgrid(grid.nodes_t, grid.nodes_x, grid.nodes_x, indexing="ij")
    return eval_exact(spec, X, Y, T)


def compute_errors(field: SolutionField, spec: ProblemSpec) -> ErrorReport:
    """Errors over all nodes and time levels 1..M (level 0 is data)."""
    if field.values.shape[0] != spec.M + 1:
        raise ValueError("field does not match the grid of spec")
    e = exact_field(spec, field.grid) - field.values
    e = e[1:]
    axes = tuple(range(1, e.ndim))
    err_inf = float(np.max(np.abs(e)))
    err_2 = float(np.max(np.sqrt(spec.h**spec.dims * np.sum(e**2, axis=axes))))
    return ErrorReport(err_inf=err_inf, err_2=err_2)


def observed_order(err_coarse: float, err_fine: float, ratio: float) -> float:
    """log_ratio(err_coarse / err_fine) for a step ratio > 1."""
    return float(np.log(err_coarse / err_fine) / np.log(ratio))


def attach_orders(reports: list[ErrorReport], ratios: list[float]) -> list[ErrorReport]:
    """Pairwise observed orders down a refinement ladder.

    ``ratios[k]`` is the step-size ratio between ladder entries k and k+1;
    the first entry keeps order None.
    """
    if len(ratios) != len(reports) - 1:
        raise ValueError("need one ratio per consecutive pair")
    out = [reports[0]]
    for k, ratio in enumerate(ratios):
        out.append(
            replace(
                reports[k + 1],
                order_inf=observed_order(reports[k].err_inf, reports[k + 1].err_inf, ratio),
                order_2=observed_order(reports[k].err_2, reports[k + 1].err_2, ratio),
            )
        )
    return out


@dataclass
class SpectrumReport:
    matrix_tag: str
    values: np.ndarray  # eigenvalues (complex) or singular values (real)
    kappa2: float


def dense_materialize(apply, n: int, guard: int = DENSE_GUARD) -> np.ndarray:
    """Column-by-column materialization of a linear operator."""
    if n > guard:
        raise ValueError(f"dense materialization guarded to {guard}, got {n}")
    cols = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        cols[:, j] = apply(e)
        e[j] = 0.0
    return cols


def _dense_tau_power(sys: AllAtOnceSystem, power: float) -> np.ndarray:
    """(scaled spatial tau operator)^power via a dense eigendecomposition."""
    Gd = sys.G.dense()
    Gtau = Gd - hankel_correction(sys.G.first_col).dense()
    if sys.spec.dims == 1:
        S = sys.kappa * Gtau
    else:
        eye = np.eye(Gtau.shape[0])
        S = 0.5 * sys.kappa * (np.kron(Gtau, eye) + np.kron(eye, Gtau))
    lam, Q = eigh(S)
    if np.any(lam <= 0):
        raise ValueError("non-positive sine-transform-algebra eigenvalue")
    return (Q * lam**power) @ Q.T


def dense_preconditioners(sys: AllAtOnceSystem):
    """Dense (P_left, P_right) built from their definitions."""
    nt = sys.spec.M - 1
    S_half = _dense_tau_power(sys, 0.5)
    S_mhalf = _dense_tau_power(sys, -0.5)
    At = sys.At.dense()
    Pl = np.kron(S_mhalf, At) + np.kron(S_half, np.eye(nt))
    Pr = np.kron(S_half, np.eye(nt))
    return Pl, Pr


def dense_operator(matrix_tag: str, spec: ProblemSpec,
                   guard: int = DENSE_GUARD) -> np.ndarray:
    """Dense realization of one of the study matrices."""
    if matrix_tag not in MATRIX_TAGS:
        raise ValueError(f"unknown matrix tag {matrix_tag!r}; known: {MATRIX_TAGS}")
    sys = assemble_operator(spec)

    if matrix_tag == "At_plus_AtT":
        At = sys.At.dense()
        return At + At.T
    if matrix_tag == "Gtau_inv_Gbeta":
        Gd = sys.G.dense()
        Gtau = Gd - hankel_correction(sys.G.first_col).dense()
        return np.linalg.solve(Gtau, Gd)

    if sys.size > guard:
        raise ValueError(
            f"dense path guarded to (M-1)*n_interior <= {guard}, got {sys.size}"
        )
    Mt = sys.dense()
    if matrix_tag == "Mtilde":
        return Mt
    Pl, Pr = dense_preconditioners(sys)
    if matrix_tag == "Pl_inv_Mtilde":
        return np.linalg.solve(Pl, Mt)
    if matrix_tag == "Mtilde_Pr_inv":
        return np.linalg.solve(Pr.T, Mt.T).T
    return np.linalg.solve(Pl, np.linalg.solve(Pr.T, Mt.T).T)


def condition_number(matrix_tag: str, spec: ProblemSpec,
                     method: str = "dense") -> SpectrumReport:
    """kappa_2 as the ratio of extreme singular values."""
    if method == "dense":
        A = dense_operator(matrix_tag, spec)
        sv = svdvals(A)
        return SpectrumReport(matrix_tag=matrix_tag, values=sv,
                              kappa2=float(sv[0] / sv[-1]))
    if method != "iterative":
        raise ValueError("method must be 'dense' or 'iterative'")
    op, opT, n = _fast_operator(matrix_tag, spec)
    kappa2, smax, smin = kappa2_iterative(op, opT, n)
    return SpectrumReport(matrix_tag=matrix_tag,
                          values=np.array([smax, smin]), kappa2=kappa2)


def _fast_operator(matrix_tag: str, spec: ProblemSpec):
    """Fast apply/transpose-apply pair for the iterative estimator."""
    from .precond import (
        apply_Pl_inv, apply_Pl_invT, apply_Pr_inv, build_preconditioner,
    )

    sys = assemble_operator(spec)
    if matrix_tag == "Mtilde":
        return sys.matvec, sys.matvecT, sys.size
    if matrix_tag == "Pl_inv_Mtilde_Pr_inv":
        P = build_preconditioner(sys)

        def op(v):
            return apply_Pl_inv(P, sys.matvec(apply_Pr_inv(P, v)))

        def opT(v):
            return apply_Pr_inv(P, sys.matvecT(apply_Pl_invT(P, v)))

        return op, opT, sys.size
    raise ValueError(f"iterative path not available for tag {matrix_tag!r}")


def kappa2_iterative(op, opT, n: int, tol: float = 1e-6,
                     max_iter: int = 2000, seed: int = 0):
    """Extreme singular values by (inverse) power iteration on A^T A.

    Inverse iterations solve the normal equations by CG through the fast
    applies; suitable beyond the dense guard.
    """
    rng = np.random.default_rng(seed)
    normal = lambda v: opT(op(v))

    z = rng.standard_normal(n)
    z /= np.linalg.norm(z)
    smax2 = 0.0
    for _ in range(max_iter):
        w = normal(z)
        est = float(z @ w)
        w_norm = np.linalg.norm(w)
        z = w / w_norm
        if abs(est - smax2) <= tol * abs(est):
            smax2 = est
            break
        smax2 = est

    z = rng.standard_normal(n)
    z /= np.linalg.norm(z)
    smin2 = np.inf
    cg_cfg = SolverConfig(tol=1e-10, max_iter=100000)
    for _ in range(max_iter):
        y, rep = cg(normal, z, cg_cfg)
        if not rep.converged:
            raise RuntimeError("inverse power iteration stagnated (inner CG)")
        est = float(z @ y)  # Rayleigh quotient of (A^T A)^{-1}
        y_norm = np.linalg.norm(y)
        z = y / y_norm
        if np.isfinite(smin2) and abs(1.0 / est - smin2) <= tol * abs(1.0 / est):
            smin2 = 1.0 / est
            break
        smin2 = 1.0 / est

    smax, smin = np.sqrt(smax2), np.sqrt(smin2)
    return float(smax / smin), float(smax), float(smin)


def spectrum_dump(matrix_tag: str, spec: ProblemSpec,
                  out_path=None) -> SpectrumReport:
    """Full dense eigenvalue set, optionally written as (re, im) CSV rows."""
    A = dense_operator(matrix_tag, spec)
    values = np.linalg.eigvals(A)
    values = values[np.argsort(values.real)]
    sv = svdvals(A)
    report = SpectrumReport(matrix_tag=matrix_tag, values=values,
                            kappa2=float(sv[0] / sv[-1]))
    if out_path is not None:
        write_spectrum_csv(report, out_path)
    return report


def write_spectrum_csv(report: SpectrumReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im"])
        for v in report.values:
            writer.writerow([repr(float(np.real(v))), repr(float(np.imag(v)))])
