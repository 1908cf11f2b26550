"""Assembly of the all-at-once space-time system.

The implicit convolution scheme couples all time levels ``u^2 .. u^M`` into
one linear system.  Two equivalent block orderings are supported:

* time-major  -- unknowns grouped by time level,
                 operator  A_t (x) I_x  +  I_t (x) (kappa G),
* space-major -- unknowns grouped by space node,
                 operator  (kappa G) (x) I_t  +  I_x (x) A_t,

where ``G`` is the Riesz stencil Toeplitz matrix and ``A_t`` the lower
block-triangular time operator scaled by h^beta tau^(-alpha)/Gamma(2-alpha).
The first time level ``u^1`` is produced by a fast-L1 starter march with
exponentially compressed history on a finer step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .krylov import DENSE_GUARD, SolverConfig, cg
from .problems import (
    Grid, ProblemSpec, build_grid, eval_initial, eval_source,
)
from .structured import (
    LowerTriToeplitzOp, ToeplitzOp, dst1_apply, tau_from_toeplitz,
)
from .weights import (
    L2Weights, SoeKernel, build_soe, direct_l1_weights, l2_weights,
    riesz_stencil, soe_eps_for_starter,
)

TIME_MAJOR = "time-major"
SPACE_MAJOR = "space-major"


@dataclass(frozen=True)
class TimeBlockMatrix:
    """Lower block-triangular time operator [[A11, 0], [A12, A22]].

    ``A11`` is the scalar first diagonal entry, ``A12`` the first column
    below it, and ``A22`` a lower-triangular Toeplitz block of order M-2.
    All entries carry the common factor h^beta tau^(-alpha)/Gamma(2-alpha).
    """

    scale: float
    A11: float
    A12: np.ndarray
    A22: LowerTriToeplitzOp

    @property
    def n(self) -> int:
        return len(self.A12) + 1

    def apply(self, v, axis: int = -1) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        moved = np.moveaxis(v, axis, -1)
        out = np.empty_like(moved)
        out[..., 0] = self.A11 * moved[..., 0]
        out[..., 1:] = self.A12 * moved[..., :1] + self.A22.apply(
            moved[..., 1:], axis=-1
        )
        return np.moveaxis(out, -1, axis)

    def applyT(self, v, axis: int = -1) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        moved = np.moveaxis(v, axis, -1)
        out = np.empty_like(moved)
        out[..., 0] = self.A11 * moved[..., 0] + moved[..., 1:] @ self.A12
        out[..., 1:] = self.A22.applyT(moved[..., 1:], axis=-1)
        return np.moveaxis(out, -1, axis)

    def dense(self) -> np.ndarray:
        n = self.n
        At = np.zeros((n, n))
        At[0, 0] = self.A11
        At[1:, 0] = self.A12
        At[1:, 1:] = self.A22.dense()
        return At


def assemble_At(weights: L2Weights, spec: ProblemSpec) -> TimeBlockMatrix:
    """Time-block operator from the L2 weight families."""
    M = spec.M
    if M < 3:
        raise ValueError("the block split needs M >= 3 time intervals")
    scale = spec.h**spec.beta * spec.tau_t ** (-spec.alpha) / gamma(2.0 - spec.alpha)
    A11 = scale * weights.c_tilde[0]
    A12 = scale * (weights.c_tilde[1 : M - 1] - weights.c_plain[: M - 2])
    col = np.empty(M - 2)
    col[0] = weights.c_plain[0]
    col[1:] = np.diff(weights.c_plain[: M - 2])
    A12.setflags(write=False)
    return TimeBlockMatrix(scale=scale, A11=A11, A12=A12,
                           A22=LowerTriToeplitzOp(scale * col))


def permute(v: np.ndarray, M: int, N: int, direction: str, dims: int = 1) -> np.ndarray:
    """Reorder an all-at-once vector between the two block layouts."""
    nd = (N - 1) ** dims
    nt = M - 1
    v = np.asarray(v)
    if v.shape != (nt * nd,):
        raise ValueError(f"expected length {nt * nd}, got {v.shape}")
    if direction == "to_space_major":
        return v.reshape(nt, nd).T.ravel()
    if direction == "to_time_major":
        return v.reshape(nd, nt).T.ravel()
    raise ValueError(f"unknown direction {direction!r}")


def _interior_points(spec: ProblemSpec, grid: Grid):
    """Interior node coordinates, flattened row-major (x outer, y inner)."""
    xi = grid.nodes_x[1:-1]
    if spec.dims == 1:
        return (xi,)
    X, Y = np.meshgrid(xi, xi, indexing="ij")
    return X.ravel(), Y.ravel()


@dataclass
class StarterSolution:
    """First-level solution from the fast-L1 march on [0, t_1]."""

    u1: np.ndarray
    iterations: list[int]
    tau_hat: float
    M_hat: int

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations)) if self.iterations else 0.0


class _SpatialOperator:
    """kappa-scaled Riesz operator on interior nodes (Kronecker sum in 2D)."""

    def __init__(self, G: ToeplitzOp, kappa: float, dims: int):
        self.G = G
        self.kappa = kappa
        self.dims = dims
        self.n = G.n**dims

    def apply(self, v, axis: int = 0) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        moved = np.moveaxis(v, axis, 0)
        if self.dims == 1:
            out = self.kappa * self.G.apply(moved, axis=0)
            return np.moveaxis(out, 0, axis)
        m = self.G.n
        shaped = moved.reshape(m, m, *moved.shape[1:])
        out = 0.5 * self.kappa * (
            self.G.apply(shaped, axis=0) + self.G.apply(shaped, axis=1)
        )
        return np.moveaxis(out.reshape(moved.shape), 0, axis)

    def dense(self) -> np.ndarray:
        Gd = self.G.dense()
        if self.dims == 1:
            return self.kappa * Gd
        eye = np.eye(self.G.n)
        return 0.5 * self.kappa * (np.kron(Gd, eye) + np.kron(eye, Gd))


def _tau_inverse_factory(G: ToeplitzOp, shift: float, coeff: float, dims: int):
    """Preconditioner r -> (shift I + coeff * KroneckerSum(G_tau))^{-1} r."""
    tau = tau_from_toeplitz(G)
    lam = tau.eigvals
    if np.any(lam <= 0):
        return None
    if dims == 1:
        diag = 1.0 / (shift + coeff * lam)

        def apply1(r):
            return dst1_apply(diag * dst1_apply(r))

        return apply1

    m = len(lam)
    diag = 1.0 / (shift + 0.5 * coeff * (lam[:, None] + lam[None, :]))

    def apply2(r):
        z = r.reshape(m, m)
        z = dst1_apply(dst1_apply(z, axis=0), axis=1)
        z = dst1_apply(dst1_apply(diag * z, axis=0), axis=1)
        return z.ravel()

    return apply2


def _starter_steps(spec: ProblemSpec):
    """Fine-step count and size for the starter march.

    The raw step tau_t^((3-alpha)/(2-alpha)) generally does not divide t_1,
    so after M_hat = floor(t_1 / tau_hat) the step is rescaled to t_1 / M_hat
    and the march lands exactly on t_1.
    """
    t1 = spec.tau_t
    tau_raw = spec.tau_t ** ((3.0 - spec.alpha) / (2.0 - spec.alpha))
    M_hat = max(1, int(np.floor(t1 / tau_raw)))
    return t1 / M_hat, M_hat


def solve_starter(
    spec: ProblemSpec,
    weights: L2Weights | None = None,
    soe: SoeKernel | None = None,
    tol: float = 1e-9,
    max_iter: int = 1000,
    method: str = "pcg",
) -> StarterSolution:
    """March the fast-L1 scheme to t_1 and return the first-level solution.

    Every step solves the same SPD system (identity shift plus the scaled
    Riesz operator); the history sum is maintained per exponential term in
    O(count) per step.  ``method`` selects the per-step solver: "pcg"
    (tau-preconditioned CG, default), "cg" (unpreconditioned), or "gsf"
    (direct inverse applies through the Gohberg-Semencul representation;
    1D only, since that representation has no block-Toeplitz analogue).
    """
    if method not in ("pcg", "cg", "gsf"):
        raise ValueError(f"unknown starter method {method!r}")
    if method == "gsf" and spec.dims != 1:
        raise ValueError("the Gohberg-Semencul starter path is 1D only")
    grid = build_grid(spec)
    tau_hat, M_hat = _starter_steps(spec)
    alpha, kappa = spec.alpha, spec.kappa
    if soe is None and M_hat > 1:
        soe = build_soe(alpha, tau_hat, spec.tau_t,
                        soe_eps_for_starter(alpha, tau_hat))

    stencil = riesz_stencil(spec.beta, spec.N)
    G = ToeplitzOp(stencil.g)
    spat = _SpatialOperator(G, kappa, spec.dims)
    coeff = grid.h ** (-spec.beta)
    shift = tau_hat ** (-alpha) / gamma(2.0 - alpha)  # = b_local / Gamma(1-alpha)

    def operator(v):
        return shift * v + coeff * spat.apply(v)

    gsf = None
    precond = None
    if method == "gsf":
        from .structured import GsfInverse

        step_col = kappa * coeff * stencil.g.copy()
        step_col[0] += shift
        gsf = GsfInverse(ToeplitzOp(step_col))
    elif method == "pcg":
        precond = _tau_inverse_factory(G, shift, kappa * coeff, spec.dims)

    pts = _interior_points(spec, grid)
    u_prev = eval_initial(spec, *pts)
    inv_g1a = 1.0 / gamma(1.0 - alpha)

    hist = None
    decay = cell = None
    if M_hat > 1:
        s = soe.exponents
        cell = np.ones_like(s)
        pos = s > 0
        cell[pos] = -np.expm1(-tau_hat * s[pos]) / (tau_hat * s[pos])
        decay = np.exp(-tau_hat * s)
        hist = np.zeros((len(s), spec.n_interior))

    iters = []
    u_prev2 = None
    for j in range(1, M_hat + 1):
        if j >= 2:
            hist = decay[:, None] * (hist + np.outer(cell, u_prev - u_prev2))
        rhs = eval_source(spec, *pts, j * tau_hat) + shift * u_prev
        if j >= 2:
            rhs = rhs - inv_g1a * (soe.weights @ hist)
        if gsf is not None:
            u_new = gsf.apply(rhs)
            iters.append(0)  # direct apply, no inner iteration
        else:
            u_new, report = cg(operator, rhs,
                               SolverConfig(tol=tol, max_iter=max_iter),
                               precond=precond)
            if not report.converged:
                raise RuntimeError(
                    f"starter CG did not converge at step {j}/{M_hat} "
                    f"(relres={report.final_relres:.2e})"
                )
            iters.append(report.iterations)
        u_prev2, u_prev = u_prev, u_new

    return StarterSolution(u1=u_prev, iterations=iters, tau_hat=tau_hat, M_hat=M_hat)


def solve_starter_direct(
    spec: ProblemSpec, tol: float = 1e-12, max_iter: int = 2000
) -> StarterSolution:
    """Starter march with exact (uncompressed) history weights.

    O(M_hat^2) oracle used to bound the error introduced by the exponential
    compression; identical stepping otherwise.
    """
    grid = build_grid(spec)
    tau_hat, M_hat = _starter_steps(spec)
    alpha, kappa = spec.alpha, spec.kappa

    stencil = riesz_stencil(spec.beta, spec.N)
    G = ToeplitzOp(stencil.g)
    spat = _SpatialOperator(G, kappa, spec.dims)
    coeff = grid.h ** (-spec.beta)
    shift = tau_hat ** (-alpha) / gamma(2.0 - alpha)

    def operator(v):
        return shift * v + coeff * spat.apply(v)

    precond = _tau_inverse_factory(G, shift, kappa * coeff, spec.dims)
    pts = _interior_points(spec, grid)
    levels = [eval_initial(spec, *pts)]
    inv_g1a = 1.0 / gamma(1.0 - alpha)
    iters = []
    for j in range(1, M_hat + 1):
        b = direct_l1_weights(alpha, tau_hat, j)
        rhs = eval_source(spec, *pts, j * tau_hat) + inv_g1a * b[0] * levels[0]
        if j >= 2:
            hist = np.stack(levels[1:j], axis=0)
            rhs = rhs + inv_g1a * ((b[1:] - b[:-1]) @ hist)
        u_new, report = cg(operator, rhs, SolverConfig(tol=tol, max_iter=max_iter),
                           precond=precond)
        if not report.converged:
            raise RuntimeError(f"direct starter CG stalled at step {j}")
        iters.append(report.iterations)
        levels.append(u_new)

    return StarterSolution(u1=levels[-1], iterations=iters,
                           tau_hat=tau_hat, M_hat=M_hat)


@dataclass
class AllAtOnceSystem:
    """Assembled space-time system in one of the two block orderings."""

    spec: ProblemSpec
    grid: Grid
    At: TimeBlockMatrix
    G: ToeplitzOp
    kappa: float
    eta: np.ndarray
    rhs: np.ndarray
    ordering: str
    u0: np.ndarray
    u1: np.ndarray

    @property
    def size(self) -> int:
        return (self.spec.M - 1) * self.spec.n_interior

    @property
    def spatial(self) -> _SpatialOperator:
        return _SpatialOperator(self.G, self.kappa, self.spec.dims)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ValueError(f"expected length {self.size}, got {v.shape}")
        nd, nt = self.spec.n_interior, self.spec.M - 1
        spat = self.spatial
        if self.ordering == SPACE_MAJOR:
            X = v.reshape(nd, nt)
            out = spat.apply(X, axis=0) + self.At.apply(X, axis=1)
        else:
            X = v.reshape(nt, nd)
            out = spat.apply(X, axis=1) + self.At.apply(X, axis=0)
        return out.ravel()

    def matvecT(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        nd, nt = self.spec.n_interior, self.spec.M - 1
        spat = self.spatial
        if self.ordering == SPACE_MAJOR:
            X = v.reshape(nd, nt)
            out = spat.apply(X, axis=0) + self.At.applyT(X, axis=1)
        else:
            X = v.reshape(nt, nd)
            out = spat.apply(X, axis=1) + self.At.applyT(X, axis=0)
        return out.ravel()

    def dense(self, guard: int = DENSE_GUARD) -> np.ndarray:
        if self.size > guard:
            raise ValueError(f"dense materialization guarded to {guard}")
        spat_d = self.spatial.dense()
        At_d = self.At.dense()
        nd, nt = self.spec.n_interior, self.spec.M - 1
        if self.ordering == SPACE_MAJOR:
            return np.kron(spat_d, np.eye(nt)) + np.kron(np.eye(nd), At_d)
        return np.kron(At_d, np.eye(nd)) + np.kron(np.eye(nt), spat_d)


def system_matvec(sys: AllAtOnceSystem, v: np.ndarray) -> np.ndarray:
    return sys.matvec(v)


def assemble_system(
    spec: ProblemSpec,
    weights: L2Weights,
    starter: StarterSolution,
    ordering: str = SPACE_MAJOR,
    source_values: np.ndarray | None = None,
) -> AllAtOnceSystem:
    """Build the all-at-once system for time levels 2..M.

    ``source_values``, when given, replaces the compiled source term; it must
    hold f at the interior nodes for t_2..t_M in time-major layout,
    shape (M-1, n_interior).
    """
    if ordering not in (TIME_MAJOR, SPACE_MAJOR):
        raise ValueError(f"unknown ordering {ordering!r}")
    grid = build_grid(spec)
    M, nd = spec.M, spec.n_interior
    At = assemble_At(weights, spec)

    pts = _interior_points(spec, grid)
    u0 = np.asarray(eval_initial(spec, *pts), dtype=float)
    u1 = np.asarray(starter.u1, dtype=float)
    if u1.shape != (nd,):
        raise ValueError("starter solution does not match the grid")

    eta = At.scale * (
        np.outer(weights.c_hat[1:M], u1 - u0) - np.outer(weights.c_tilde[: M - 1], u1)
    )

    if source_values is not None:
        f = np.asarray(source_values, dtype=float)
        if f.shape != (M - 1, nd):
            raise ValueError(f"source_values must have shape {(M - 1, nd)}")
    else:
        t_col = grid.nodes_t[2:]
        f = np.empty((M - 1, nd))
        for row, t in enumerate(t_col):
            f[row] = eval_source(spec, *pts, t)

    rhs = (-eta + grid.h**spec.beta * f).ravel()
    eta = eta.ravel()
    if ordering == SPACE_MAJOR:
        rhs = permute(rhs, M, spec.N, "to_space_major", spec.dims)
        eta = permute(eta, M, spec.N, "to_space_major", spec.dims)

    stencil = riesz_stencil(spec.beta, spec.N)
    return AllAtOnceSystem(
        spec=spec, grid=grid, At=At, G=ToeplitzOp(stencil.g), kappa=spec.kappa,
        eta=eta, rhs=rhs, ordering=ordering, u0=u0, u1=u1,
    )


def assemble_operator(spec: ProblemSpec, ordering: str = SPACE_MAJOR) -> AllAtOnceSystem:
    """System with the operator only (zero data); enough for spectral study."""
    weights = l2_weights(spec.alpha, spec.M)
    grid = build_grid(spec)
    nd = spec.n_interior
    zeros = np.zeros(nd)
    stencil = riesz_stencil(spec.beta, spec.N)
    return AllAtOnceSystem(
        spec=spec, grid=grid, At=assemble_At(weights, spec),
        G=ToeplitzOp(stencil.g), kappa=spec.kappa,
        eta=np.zeros((spec.M - 1) * nd), rhs=np.zeros((spec.M - 1) * nd),
        ordering=ordering, u0=zeros, u1=zeros,
    )


@dataclass
class SolutionField:
    """Full space-time field including boundary nodes and t_0, t_1 levels.

    ``values`` has shape (M+1, N+1) in 1D and (M+1, N+1, N+1) in 2D, indexed
    time level first.
    """

    spec: ProblemSpec
    grid: Grid
    values: np.ndarray


def extract_solution(sys: AllAtOnceSystem, x: np.ndarray) -> SolutionField:
    """Reshape a solution vector into the full field table."""
    spec = sys.spec
    M, N = spec.M, spec.N
    x = np.asarray(x, dtype=float)
    if sys.ordering == SPACE_MAJOR:
        x = permute(x, M, N, "to_time_major", spec.dims)
    inner = (N - 1,) * spec.dims
    levels = x.reshape(M - 1, *inner)

    shape = (M + 1,) + (N + 1,) * spec.dims
    vals = np.zeros(shape)
    interior = (slice(None),) + (slice(1, -1),) * spec.dims
    vals[interior][0] = sys.u0.reshape(inner)
    vals[interior][1] = sys.u1.reshape(inner)
    vals[interior][2:] = levels
    return SolutionField(spec=spec, grid=sys.grid, values=vals)


def export_solution_csv(field: SolutionField, path) -> None:
    """Write the field as (x[, y], t, value) rows."""
    spec = field.spec
    xs, ts = field.grid.nodes_x, field.grid.nodes_t
    with open(path, "w", newline="") as fh:
        if spec.dims == 1:
            fh.write("x,t,value\n")
            for j, t in enumerate(ts):
                for i, x in enumerate(xs):
                    fh.write(f"{x!r},{t!r},{field.values[j, i]!r}\n")
        else:
            fh.write("x,y,t,value\n")
            for j, t in enumerate(ts):
                for i, x in enumerate(xs):
                    for k, y in enumerate(xs):
                        fh.write(f"{x!r},{y!r},{t!r},{field.values[j, i, k]!r}\n")


def export_solution_binary(field: SolutionField, path) -> None:
    """Row-major float64 dump plus a JSON sidecar describing the shape."""
    path = str(path)
    data = np.ascontiguousarray(field.values, dtype=np.float64)
    data.tofile(path)
    sidecar = {
        "dtype": "float64",
        "order": "C",
        "shape": list(data.shape),
        "axes": ["t", "x"] if field.spec.dims == 1 else ["t", "x", "y"],
        "data_file": path.rsplit("/", 1)[-1],
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
