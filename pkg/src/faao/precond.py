"""Bilateral preconditioner pair for the space-major all-at-once system.

With S the sine-transform-algebra projection of the scaled spatial operator
(eigenvalues mu_n > 0), the pair is

    P_left  = S^(-1/2) (x) A_t  +  S^(1/2) (x) I_t
    P_right = S^(1/2) (x) I_t.

Applying P_right^{-1} is a sine transform and a diagonal scaling; applying
P_left^{-1} splits, after the sine transform, into independent block solves

    Sigma_n = mu_n^(1/2) I_t + mu_n^(-1/2) A_t,   n = 1..n_space,

each a 2x2 block-triangular matrix whose Toeplitz corner is inverted once at
setup.  The block solves share no state; they are executed as one batched
convolution, the vectorized equivalent of a parallel loop over blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import SPACE_MAJOR, AllAtOnceSystem, TimeBlockMatrix
from .structured import (
    _pow2_at_least, bini_invert_columns, causal_conv_rows, dst1_apply,
    rows_fft, tau_from_toeplitz,
)

CACHE_LIMIT_BYTES = 4 << 30


@dataclass
class BilateralPreconditioner:
    At: TimeBlockMatrix
    mu: np.ndarray            # spatial eigenvalues, length n_space
    dims: int
    n_per_axis: int           # N-1
    nt: int                   # M-1
    sigma11_inv: np.ndarray   # 1 / (mu^1/2 + mu^-1/2 A11)
    inv_cols_fft: np.ndarray | None   # rfft of Sigma22^{-1} first columns
    conv_len: int
    chunk: int | None = None  # rows per on-the-fly chunk when not cached

    @property
    def n_space(self) -> int:
        return len(self.mu)


def _sigma22_inv_fft(P: BilateralPreconditioner, rows: slice | None = None):
    """rfft of the Sigma22 inverse first columns (cached or recomputed)."""
    if P.inv_cols_fft is not None:
        return P.inv_cols_fft if rows is None else P.inv_cols_fft[rows]
    mu = P.mu if rows is None else P.mu[rows]
    a22 = P.At.A22.first_col
    cols = mu[:, None] ** (-0.5) * a22[None, :]
    cols[:, 0] += np.sqrt(mu)
    return rows_fft(bini_invert_columns(cols), P.conv_len)


def build_preconditioner(
    sys: AllAtOnceSystem, cache_limit_bytes: int = CACHE_LIMIT_BYTES
) -> BilateralPreconditioner:
    """Set up the pair for a space-major system.

    All Sigma22 inverses are precomputed and their transforms cached unless
    the cache would exceed ``cache_limit_bytes``; past the limit they are
    regenerated chunkwise at each apply.
    """
    if sys.ordering != SPACE_MAJOR:
        raise ValueError("preconditioner requires the space-major ordering")
    spec = sys.spec
    tau = tau_from_toeplitz(sys.G)
    lam = tau.eigvals
    if np.any(lam <= 0):
        raise ValueError("non-positive sine-transform eigenvalue")
    if spec.dims == 1:
        mu = sys.kappa * lam
    else:
        mu = 0.5 * sys.kappa * (lam[:, None] + lam[None, :]).ravel()

    At = sys.At
    nt = spec.M - 1
    m22 = nt - 1
    conv_len = _pow2_at_least(2 * m22 - 1)
    sigma11_inv = 1.0 / (np.sqrt(mu) + At.A11 / np.sqrt(mu))

    n_space = len(mu)
    cache_bytes = n_space * (conv_len // 2 + 1) * 16 + n_space * m22 * 8
    P = BilateralPreconditioner(
        At=At, mu=mu, dims=spec.dims, n_per_axis=spec.N - 1, nt=nt,
        sigma11_inv=sigma11_inv, inv_cols_fft=None, conv_len=conv_len,
    )
    if cache_bytes <= cache_limit_bytes:
        P.inv_cols_fft = _sigma22_inv_fft(P)
    else:
        per_row = m22 * 8 * 6  # working set of the batched inversion
        P.chunk = max(1, int(cache_limit_bytes // max(per_row, 1) // 4))
    return P


def _space_transform(P: BilateralPreconditioner, X: np.ndarray) -> np.ndarray:
    """Orthogonal sine transform over the space axes of an (n_space, nt) block."""
    if P.dims == 1:
        return dst1_apply(X, axis=0)
    m = P.n_per_axis
    Z = X.reshape(m, m, P.nt)
    Z = dst1_apply(dst1_apply(Z, axis=0), axis=1)
    return Z.reshape(P.n_space, P.nt)


def _as_block(P: BilateralPreconditioner, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (P.n_space * P.nt,):
        raise ValueError(f"expected length {P.n_space * P.nt}, got {v.shape}")
    return v.reshape(P.n_space, P.nt)


def apply_Pr_inv(P: BilateralPreconditioner, v: np.ndarray) -> np.ndarray:
    Z = _space_transform(P, _as_block(P, v))
    Z = Z / np.sqrt(P.mu)[:, None]
    return _space_transform(P, Z).ravel()


def apply_Pr(P: BilateralPreconditioner, v: np.ndarray) -> np.ndarray:
    Z = _space_transform(P, _as_block(P, v))
    Z = Z * np.sqrt(P.mu)[:, None]
    return _space_transform(P, Z).ravel()


def apply_Pl(P: BilateralPreconditioner, v: np.ndarray) -> np.ndarray:
    Z = _space_transform(P, _as_block(P, v))
    out = np.sqrt(P.mu)[:, None] * Z + P.At.apply(Z, axis=1) / np.sqrt(P.mu)[:, None]
    return _space_transform(P, out).ravel()


def _solve_sigma_rows(P: BilateralPreconditioner, Z: np.ndarray,
                      rows: slice, out: np.ndarray) -> None:
    """Independent per-eigenvalue block solves  Sigma_n out_n = Z_n.

    Block-triangular inverse applied as three products: the scalar head, the
    coupling column, and the Toeplitz-corner inverse convolution.
    """
    mu = P.mu[rows]
    head = Z[rows, 0] * P.sigma11_inv[rows]
    rest = Z[rows, 1:] - np.outer(head / np.sqrt(mu), P.At.A12)
    out[rows, 0] = head
    out[rows, 1:] = causal_conv_rows(
        _sigma22_inv_fft(P, rows), rest, P.nt - 1, P.conv_len
    )


def apply_Pl_inv(P: BilateralPreconditioner, v: np.ndarray) -> np.ndarray:
    Z = _space_transform(P, _as_block(P, v))
    out = np.empty_like(Z)
    if P.inv_cols_fft is not None or P.chunk is None:
        _solve_sigma_rows(P, Z, slice(None), out)
    else:
        for start in range(0, P.n_space, P.chunk):
            _solve_sigma_rows(P, Z, slice(start, start + P.chunk), out)
    return _space_transform(P, out).ravel()


def apply_Pl_invT(P: BilateralPreconditioner, v: np.ndarray) -> np.ndarray:
    """Transpose-inverse of the left factor (for normal-operator iterations)."""
    import scipy.fft as sfft

    Z = _space_transform(P, _as_block(P, v))
    out = np.empty_like(Z)
    fftc = _sigma22_inv_fft(P)
    rest = sfft.irfft(
        np.conj(fftc) * sfft.rfft(Z[:, 1:], n=P.conv_len, axis=-1),
        n=P.conv_len, axis=-1,
    )[:, : P.nt - 1]
    out[:, 1:] = rest
    out[:, 0] = P.sigma11_inv * (
        Z[:, 0] - (rest @ P.At.A12) / np.sqrt(P.mu)
    )
    return _space_transform(P, out).ravel()


def apply_preconditioned_operator(
    P: BilateralPreconditioner, sys: AllAtOnceSystem, v: np.ndarray
) -> np.ndarray:
    """z = P_left^{-1} (system matvec) P_right^{-1} v, the solver-side operator."""
    return apply_Pl_inv(P, sys.matvec(apply_Pr_inv(P, v)))
