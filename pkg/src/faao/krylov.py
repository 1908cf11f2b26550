"""Krylov solvers: (preconditioned) CG and BiCGSTAB, plus a dense LU path
used as ground truth at desk scale.

Operators are plain callables ``v -> A v``.  The stopping rule follows the
experiment protocol: Euclidean relative residual ||r_k|| / ||r_0|| <= tol,
iteration cap 1000, zero initial guess unless one is supplied.  A run that
hits the cap is returned with ``flagged_dag`` set rather than raised, so
experiment batches can tabulate non-convergence.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 1000
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    final_relres: float
    wall_time: float
    flagged_dag: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _finish(x, relres, iters, cfg, t0, breakdown=False) -> SolveReport:
    converged = bool(relres <= cfg.tol) and not breakdown
    return SolveReport(
        iterations=iters,
        converged=converged,
        final_relres=float(relres),
        wall_time=time.perf_counter() - t0,
        flagged_dag=not converged,
    )


def cg(apply, rhs, cfg: SolverConfig | None = None, precond=None):
    """(Preconditioned) conjugate gradients for SPD operators.

    Returns ``(x, SolveReport)``.  A zero-curvature breakdown is reported as
    non-convergence with the best iterate so far.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    t0 = time.perf_counter()
    r = b - apply(x) if cfg.x0 is not None else b.copy()
    norm_r0 = np.linalg.norm(r)
    if norm_r0 == 0.0:
        return x, _finish(x, 0.0, 0, cfg, t0)
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, cfg.max_iter + 1):
        ap = apply(p)
        curv = float(p @ ap)
        if curv <= 0.0:
            return x, _finish(x, np.linalg.norm(r) / norm_r0, k - 1, cfg, t0,
                              breakdown=True)
        alpha = rz / curv
        x = x + alpha * p
        r = r - alpha * ap
        relres = np.linalg.norm(r) / norm_r0
        if relres <= cfg.tol:
            return x, _finish(x, relres, k, cfg, t0)
        z = precond(r) if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, _finish(x, np.linalg.norm(r) / norm_r0, cfg.max_iter, cfg, t0)


def bicgstab(apply, rhs, cfg: SolverConfig | None = None, left_right=None):
    """BiCGSTAB, optionally wrapped in a left/right preconditioner pair.

    With ``left_right = (apply_left_inv, apply_right_inv)`` the method runs
    on the two-sided system  L^-1 A R^-1 xhat = L^-1 b  and returns
    x = R^-1 xhat.  The iteration count is the number of full steps (two
    operator applications each); convergence is also checked at the half
    step.  rho/omega breakdowns return the best iterate, flagged.
    """
    cfg = cfg or SolverConfig()
    b = np.asarray(rhs, dtype=float)
    if left_right is not None:
        left_inv, right_inv = left_right
        op = lambda v: left_inv(apply(right_inv(v)))
        b = left_inv(b)
    else:
        right_inv = None
        op = apply

    x = np.zeros_like(b) if cfg.x0 is None else np.array(cfg.x0, dtype=float)
    t0 = time.perf_counter()
    r = b - op(x) if cfg.x0 is not None else b.copy()
    norm_r0 = np.linalg.norm(r)
    if norm_r0 == 0.0:
        return x, _finish(x, 0.0, 0, cfg, t0)
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)

    def unwrap(xh):
        return right_inv(xh) if right_inv is not None else xh

    for k in range(1, cfg.max_iter + 1):
        rho_new = float(r0 @ r)
        if rho_new == 0.0 or (k > 1 and omega == 0.0):
            return unwrap(x), _finish(x, np.linalg.norm(r) / norm_r0, k - 1,
                                      cfg, t0, breakdown=True)
        if k == 1:
            p = r.copy()
        else:
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
        rho = rho_new
        v = op(p)
        denom = float(r0 @ v)
        if denom == 0.0:
            return unwrap(x), _finish(x, np.linalg.norm(r) / norm_r0, k - 1,
                                      cfg, t0, breakdown=True)
        alpha = rho / denom
        s = r - alpha * v
        relres = np.linalg.norm(s) / norm_r0
        if relres <= cfg.tol:
            x = x + alpha * p
            return unwrap(x), _finish(x, relres, k, cfg, t0)
        t = op(s)
        tt = float(t @ t)
        if tt == 0.0:
            x = x + alpha * p
            return unwrap(x), _finish(x, relres, k, cfg, t0, breakdown=True)
        omega = float(t @ s) / tt
        x = x + alpha * p + omega * s
        r = s - omega * t
        relres = np.linalg.norm(r) / norm_r0
        if relres <= cfg.tol:
            return unwrap(x), _finish(x, relres, k, cfg, t0)
    return unwrap(x), _finish(x, np.linalg.norm(r) / norm_r0, cfg.max_iter, cfg, t0)


DENSE_GUARD = 20000


def dense_lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense LU with partial pivoting; surfaces singularity as LinAlgError."""
    from scipy.linalg import lu_factor, lu_solve

    lu, piv = lu_factor(A)
    if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0.0):
        raise np.linalg.LinAlgError("singular matrix in dense solve")
    return lu_solve((lu, piv), b)


def direct_dense_solve(sys, guard: int = DENSE_GUARD) -> np.ndarray:
    """Ground-truth dense solve of an assembled all-at-once system."""
    n = sys.size
    if n > guard:
        raise ValueError(f"dense solve guarded to size {guard}, got {n}")
    return dense_lu_solve(sys.dense(), sys.rhs)
