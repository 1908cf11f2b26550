"""Structured matrix algebra: Toeplitz/Hankel fast products, the sine-transform
(tau) algebra, fast triangular-Toeplitz inversion, and the Gohberg-Semencul
inverse representation for symmetric positive definite Toeplitz matrices.

All fast applies accept 1D vectors or stacked batches; the operator always
acts along ``axis`` (default 0) and the remaining axes are carried along.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


def _pow2_at_least(m: int) -> int:
    return 1 if m <= 1 else 1 << (m - 1).bit_length()


def _along_axis(x: np.ndarray, axis: int):
    """Move ``axis`` last; return (view, restore) where restore undoes it."""
    moved = np.moveaxis(x, axis, -1)
    return moved, lambda y: np.moveaxis(y, -1, axis)


class ToeplitzOp:
    """Dense-free Toeplitz operator with an FFT circulant-embedding apply.

    ``first_col`` and ``first_row`` determine the matrix; omitting
    ``first_row`` builds the symmetric operator.  The circulant embedding is
    padded to the next power of two at least 2n-1 and its transform cached.
    """

    def __init__(self, first_col, first_row=None):
        self.first_col = np.asarray(first_col, dtype=float)
        if self.first_col.ndim != 1 or len(self.first_col) == 0:
            raise ValueError("first_col must be a nonempty 1D array")
        if first_row is None:
            self.first_row = self.first_col
        else:
            self.first_row = np.asarray(first_row, dtype=float)
            if self.first_row.shape != self.first_col.shape:
                raise ValueError("first_row/first_col length mismatch")
            if self.first_row[0] != self.first_col[0]:
                raise ValueError("first_row[0] must equal first_col[0]")
        n = self.n
        L = _pow2_at_least(2 * n - 1)
        circ = np.zeros(L)
        circ[:n] = self.first_col
        if n > 1:
            circ[L - n + 1 :] = self.first_row[n - 1 : 0 : -1]
        self._L = L
        self._fft = sfft.rfft(circ)

    @property
    def n(self) -> int:
        return len(self.first_col)

    @property
    def is_symmetric(self) -> bool:
        return self.first_row is self.first_col or np.array_equal(
            self.first_row, self.first_col
        )

    def apply(self, v, axis: int = 0) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[axis] != self.n:
            raise ValueError(f"length mismatch: expected {self.n}, got {v.shape[axis]}")
        moved, restore = _along_axis(v, axis)
        out = sfft.irfft(sfft.rfft(moved, n=self._L) * self._fft, n=self._L)
        return restore(out[..., : self.n])

    def transpose(self) -> "ToeplitzOp":
        if self.is_symmetric:
            return self
        return ToeplitzOp(self.first_row, self.first_col)

    def dense(self) -> np.ndarray:
        from scipy.linalg import toeplitz

        return toeplitz(self.first_col, self.first_row)


class LowerTriToeplitzOp:
    """Lower-triangular Toeplitz operator (a causal convolution)."""

    def __init__(self, first_col):
        self.first_col = np.asarray(first_col, dtype=float)
        if self.first_col.ndim != 1 or len(self.first_col) == 0:
            raise ValueError("first_col must be a nonempty 1D array")
        self._L = _pow2_at_least(2 * self.n - 1)
        pad = np.zeros(self._L)
        pad[: self.n] = self.first_col
        self._fft = sfft.rfft(pad)

    @property
    def n(self) -> int:
        return len(self.first_col)

    def apply(self, v, axis: int = 0) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[axis] != self.n:
            raise ValueError(f"length mismatch: expected {self.n}, got {v.shape[axis]}")
        moved, restore = _along_axis(v, axis)
        out = sfft.irfft(sfft.rfft(moved, n=self._L) * self._fft, n=self._L)
        return restore(out[..., : self.n])

    def applyT(self, v, axis: int = 0) -> np.ndarray:
        """Apply the (upper-triangular) transpose: a causal correlation."""
        v = np.asarray(v, dtype=float)
        if v.shape[axis] != self.n:
            raise ValueError(f"length mismatch: expected {self.n}, got {v.shape[axis]}")
        moved, restore = _along_axis(v, axis)
        out = sfft.irfft(np.conj(self._fft) * sfft.rfft(moved, n=self._L), n=self._L)
        return restore(out[..., : self.n])

    def invert(self) -> "LowerTriToeplitzOp":
        return tri_toeplitz_invert(self)

    def dense(self) -> np.ndarray:
        from scipy.linalg import toeplitz

        return toeplitz(self.first_col, np.zeros(self.n))


def causal_conv_rows(cols_fft: np.ndarray, x: np.ndarray, m: int, L: int) -> np.ndarray:
    """Row-wise lower-triangular Toeplitz products.

    ``cols_fft`` holds rfft(first columns) of shape (B, L//2+1); ``x`` is
    (B, m).  Row b of the result is the triangular Toeplitz matrix of row b's
    column applied to x[b].  Each row is an independent block solve target;
    batching them is the vectorized form of a parallel loop over blocks.
    """
    out = sfft.irfft(sfft.rfft(x, n=L, axis=-1) * cols_fft, n=L, axis=-1)
    return out[..., :m]


def rows_fft(cols: np.ndarray, L: int) -> np.ndarray:
    return sfft.rfft(cols, n=L, axis=-1)


def bini_invert_columns(cols: np.ndarray) -> np.ndarray:
    """First columns of the inverses of lower-triangular Toeplitz matrices.

    Batched over rows of ``cols``.  Evaluates the reciprocal power series on
    a scaled root-of-unity grid (an epsilon-circulant with corner weight
    eps = macheps**0.5, i.e. evaluation radius eps**(1/K)) and polishes with
    one Newton step of the truncated-series iteration  x <- 2x - x*(a*x).
    """
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    B, m = cols.shape
    diag = cols[:, :1]
    if np.any(diag == 0.0):
        raise ValueError("singular triangular Toeplitz matrix (zero diagonal)")
    if m == 1:
        return 1.0 / cols
    a = cols / diag
    K = _pow2_at_least(2 * m)
    radius = np.sqrt(np.finfo(float).eps) ** (1.0 / K)
    d = radius ** np.arange(m)
    ahat = sfft.fft(a * d, n=K, axis=-1)
    x = (sfft.ifft(1.0 / ahat, axis=-1)[:, :m] / d).real

    # one Newton refinement in the truncated-series algebra
    af = sfft.rfft(a, n=K, axis=-1)
    ax = sfft.irfft(af * sfft.rfft(x, n=K, axis=-1), n=K, axis=-1)[:, :m]
    xax = sfft.irfft(
        sfft.rfft(x, n=K, axis=-1) * sfft.rfft(ax, n=K, axis=-1), n=K, axis=-1
    )[:, :m]
    x = 2.0 * x - xax
    return x / diag


def tri_toeplitz_invert(L: LowerTriToeplitzOp) -> LowerTriToeplitzOp:
    """Inverse of an invertible lower-triangular Toeplitz operator."""
    inv_col = bini_invert_columns(L.first_col[None, :])[0]
    return LowerTriToeplitzOp(inv_col)


def dst1_apply(v, axis: int = 0) -> np.ndarray:
    """Orthogonal DST-I: the symmetric involutive sine-transform matrix
    Q = sqrt(2/N) sin(i j pi / N) applied along ``axis`` (length N-1)."""
    return sfft.dst(np.asarray(v, dtype=float), type=1, norm="ortho", axis=axis)


@dataclass(frozen=True)
class HankelOp:
    """Hankel operator stored by its 2n-1 antidiagonal values."""

    antidiag: np.ndarray

    @property
    def n(self) -> int:
        return (len(self.antidiag) + 1) // 2

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.convolve(self.antidiag, v[::-1])[self.n - 1 : 2 * self.n - 1]

    def dense(self) -> np.ndarray:
        n = self.n
        i, j = np.indices((n, n))
        return self.antidiag[i + j]


def hankel_correction(first_col: np.ndarray) -> HankelOp:
    """Hankel part split off a symmetric Toeplitz matrix to leave its
    sine-transform-algebra projection.

    For a first column (t_0, ..., t_{n-1}) the antidiagonals are
    [t_2, ..., t_{n-1}, 0, 0, 0, t_{n-1}, ..., t_2].
    """
    col = np.asarray(first_col, dtype=float)
    n = len(col)
    anti = np.zeros(2 * n - 1)
    if n >= 3:
        anti[: n - 2] = col[2:]
        anti[n + 1 :] = col[2:][::-1]
    return HankelOp(antidiag=anti)


@dataclass(frozen=True)
class TauOp:
    """Member of the DST-I matrix algebra, G = Q diag(eigvals) Q."""

    gen_col: np.ndarray
    eigvals: np.ndarray

    @property
    def n(self) -> int:
        return len(self.gen_col)

    def apply_power(self, power: float, v, axis: int = 0) -> np.ndarray:
        if power != round(power) and np.any(self.eigvals <= 0):
            raise ValueError("fractional power requires positive eigenvalues")
        if power < 0 and np.any(self.eigvals == 0):
            raise ValueError("singular operator (zero eigenvalue)")
        w = dst1_apply(v, axis=axis)
        shape = [1] * w.ndim
        shape[axis] = self.n
        w = w * (self.eigvals**power).reshape(shape)
        return dst1_apply(w, axis=axis)

    def dense(self) -> np.ndarray:
        q = dst1_apply(np.eye(self.n), axis=0)
        return q @ np.diag(self.eigvals) @ q


def tau_from_toeplitz(T: ToeplitzOp) -> TauOp:
    """Sine-transform-algebra projection of a symmetric Toeplitz operator.

    Subtracts the Hankel correction from the first column and reads the
    eigenvalues off the transformed generator:  Q (G e_1) = D (Q e_1), whose
    denominator entries are proportional to sin(k pi / N) and never vanish.
    """
    if not T.is_symmetric:
        raise ValueError("tau projection requires a symmetric Toeplitz operator")
    n = T.n
    hank = hankel_correction(T.first_col)
    gen_col = T.first_col - hank.antidiag[:n]
    e1 = np.zeros(n)
    e1[0] = 1.0
    eigvals = dst1_apply(gen_col) / dst1_apply(e1)
    gen = np.array(gen_col)
    gen.setflags(write=False)
    eigvals.setflags(write=False)
    return TauOp(gen_col=gen, eigvals=eigvals)


def tau_solve(T: TauOp, power: float, v) -> np.ndarray:
    """Q diag(eigvals)^power Q applied to ``v`` (power in {-1, +-1/2} typical)."""
    if np.any(T.eigvals <= 0):
        raise ValueError("non-positive eigenvalue encountered")
    return T.apply_power(power, v)


class GsfInverse:
    """Inverse of a symmetric positive definite Toeplitz matrix in
    Gohberg-Semencul form.

    One solve T x = e_1 yields the generator; afterwards each inverse apply
    costs four triangular Toeplitz products:

        T^{-1} v = (L(x) L(x)^T v - L(y) L(y)^T v) / x_0,
        y = (0, x_{n-1}, ..., x_1).
    """

    def __init__(self, T: ToeplitzOp, tol: float = 1e-13, max_iter: int = 2000):
        from .krylov import SolverConfig, cg

        if not T.is_symmetric:
            raise ValueError("Gohberg-Semencul path requires a symmetric operator")
        n = T.n
        e1 = np.zeros(n)
        e1[0] = 1.0
        tau = tau_from_toeplitz(T)
        precond = None
        if np.all(tau.eigvals > 0):
            precond = lambda r: tau.apply_power(-1.0, r)
        x, report = cg(T.apply, e1, SolverConfig(tol=tol, max_iter=max_iter),
                       precond=precond)
        if not report.converged:
            raise RuntimeError(
                f"generator solve did not converge (relres={report.final_relres:.2e})"
            )
        if x[0] == 0.0:
            raise RuntimeError("generator has zero leading entry")
        self.x0 = x[0]
        self._Lx = LowerTriToeplitzOp(x)
        y = np.zeros(n)
        y[1:] = x[:0:-1]
        self._Ly = LowerTriToeplitzOp(y)

    def apply(self, v, axis: int = 0) -> np.ndarray:
        ux = self._Lx.apply(self._Lx.applyT(v, axis=axis), axis=axis)
        uy = self._Ly.apply(self._Ly.applyT(v, axis=axis), axis=axis)
        return (ux - uy) / self.x0


def gsf_inverse_apply(T: ToeplitzOp, v, tol: float = 1e-13) -> np.ndarray:
    """One-shot T^{-1} v through the Gohberg-Semencul representation."""
    return GsfInverse(T, tol=tol).apply(np.asarray(v, dtype=float))


def export_first_columns_csv(path, operators: dict) -> None:
    """Debug dump of operator generator columns as (name, index, value)."""
    from .weights import export_weights_csv

    tables = {}
    for name, op in operators.items():
        col = getattr(op, "first_col", None)
        if col is None:
            col = getattr(op, "gen_col", None)
        if col is None:
            raise TypeError(f"{name}: no first_col/gen_col to dump")
        tables[name] = col
    export_weights_csv(path, tables)
