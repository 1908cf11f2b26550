"""Discrete coefficient families for the fractional-derivative discretizations.

Three families live here:

* the L2 time weights ``a``, ``b`` and the derived ``c`` rows used by the
  implicit time-stepping operator,
* the Riesz fractional centered-difference stencil ``g_k``,
* the sum-of-exponentials (SOE) compression of the power-law history kernel
  ``t**(-alpha)`` together with the fast-L1 starter weights built on top of it.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

# Below this time-fractional order the sign patterns of the c-families are
# guaranteed; above it violations are expected and only warned about.
ALPHA_SIGN_THRESHOLD = 0.3624


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly in (0, 1), got {alpha}")


def _check_beta(beta: float) -> None:
    if not 1.0 < beta < 2.0:
        raise ValueError(f"beta must lie strictly in (1, 2), got {beta}")


@dataclass(frozen=True)
class L2Weights:
    """Time-weight families of the L2 convolution formula.

    ``a`` and ``b`` are the elementary families

        a_l = (l+1)^(1-alpha) - l^(1-alpha)
        b_l = [(l+1)^(2-alpha) - l^(2-alpha)]/(2-alpha)
              - [(l+1)^(1-alpha) + l^(1-alpha)]/2

    from which three derived rows are formed:

        c_plain[0] = a_0 + b_0,  c_plain[s] = a_s + b_s - b_{s-1}      (s >= 1)
        c_tilde[0] = a_0 + b_0 + b_1
        c_tilde[k] = a_k + b_k + b_{k+1} - b_{k-1}                     (k >= 1)
        c_hat[k]   = a_k - b_k - b_{k-1}                               (k >= 1)

    ``c_row(j)`` assembles the full convolution row for time level ``j``.
    """

    alpha: float
    a: np.ndarray
    b: np.ndarray
    c_plain: np.ndarray
    c_tilde: np.ndarray
    c_hat: np.ndarray

    def c_row(self, j: int) -> np.ndarray:
        """Convolution row {c_s}_{s=0..j} for time level ``j`` (j >= 1).

        The leading entry (s=0) and the two trailing entries (s=j-1, j)
        deviate from the plain family; for j = 1 and j = 2 the row is short
        enough that the special entries overlap.
        """
        if j < 1:
            raise ValueError("time level j must be >= 1")
        if j == 1:
            return np.array([self.c_tilde[0], self.c_hat[1]])
        row = np.empty(j + 1)
        row[: j - 1] = self.c_plain[: j - 1]
        row[j - 1] = self.c_tilde[j - 1]
        row[j] = self.c_hat[j]
        return row


def l2_weights(alpha: float, M: int) -> L2Weights:
    """Build all L2 weight families with indices up to ``M``.

    For alpha below ``ALPHA_SIGN_THRESHOLD`` the positivity/monotonicity sign
    patterns are asserted; above the threshold violations are reported as a
    RuntimeWarning only, since the method remains usable there in practice.
    """
    _check_alpha(alpha)
    if M < 2:
        raise ValueError("need M >= 2 time intervals")
    ell = np.arange(M + 1, dtype=float)
    a = (ell + 1.0) ** (1.0 - alpha) - ell ** (1.0 - alpha)
    b = ((ell + 1.0) ** (2.0 - alpha) - ell ** (2.0 - alpha)) / (2.0 - alpha) - (
        (ell + 1.0) ** (1.0 - alpha) + ell ** (1.0 - alpha)
    ) / 2.0

    c_plain = np.empty(M)
    c_plain[0] = a[0] + b[0]
    c_plain[1:] = a[1:M] + b[1:M] - b[: M - 1]

    c_tilde = np.empty(M)
    c_tilde[0] = a[0] + b[0] + b[1]
    c_tilde[1:] = a[1:M] + b[1:M] + b[2 : M + 1] - b[: M - 1]

    c_hat = np.empty(M)
    c_hat[0] = np.nan  # index 0 is never used
    c_hat[1:] = a[1:M] - b[1:M] - b[: M - 1]

    for arr in (a, b, c_plain, c_tilde, c_hat):
        arr.setflags(write=False)
    w = L2Weights(alpha=alpha, a=a, b=b, c_plain=c_plain, c_tilde=c_tilde, c_hat=c_hat)
    _check_sign_patterns(w)
    return w


def _check_sign_patterns(w: L2Weights) -> None:
    """Enforce (or warn about) the coefficient sign patterns.

    a and b are positive and strictly decreasing for every alpha in (0,1);
    the c-family patterns (positivity and one-step decrease) only hold below
    the alpha threshold.
    """
    problems = []
    if not (np.all(w.a > 0) and np.all(np.diff(w.a) < 0)):
        problems.append("a-family not positive strictly decreasing")
    if not (np.all(w.b > 0) and np.all(np.diff(w.b) < 0)):
        problems.append("b-family not positive strictly decreasing")
    if problems:
        # These hold analytically for all alpha in (0,1); failure means a bug.
        raise AssertionError("; ".join(problems))

    ok = (
        np.all(w.c_plain > 0)
        and np.all(np.diff(w.c_plain) < 0)
        and np.all(w.c_tilde > 0)
        and np.all(w.c_tilde[1:] - w.c_plain[:-1] < 0)
    )
    if not ok:
        if w.alpha < ALPHA_SIGN_THRESHOLD:
            raise AssertionError(
                f"c-family sign pattern violated for alpha={w.alpha} < {ALPHA_SIGN_THRESHOLD}"
            )
        warnings.warn(
            f"c-family sign patterns do not hold for alpha={w.alpha} >= "
            f"{ALPHA_SIGN_THRESHOLD}; diagonal-dominance guarantees are void",
            RuntimeWarning,
        )


@dataclass(frozen=True)
class RieszStencil:
    """Fractional centered-difference weights g_0..g_{N-2} (g_{-k} = g_k)."""

    beta: float
    g: np.ndarray


def riesz_stencil(beta: float, N: int) -> RieszStencil:
    """Centered-difference weights for the Riesz derivative of order ``beta``.

    g_0 is evaluated through log-Gamma; the remaining weights follow the
    cancellation-free ratio recurrence

        g_{k+1} = g_k * (k - beta/2) / (k + beta/2 + 1).
    """
    _check_beta(beta)
    if N < 3:
        raise ValueError("need N >= 3 space intervals")
    g = np.empty(N - 1)
    g[0] = np.exp(gammaln(1.0 + beta) - 2.0 * gammaln(beta / 2.0 + 1.0))
    k = np.arange(N - 2, dtype=float)
    ratios = (k - beta / 2.0) / (k + beta / 2.0 + 1.0)
    g[1:] = g[0] * np.cumprod(ratios)
    g.setflags(write=False)
    return RieszStencil(beta=beta, g=g)


@dataclass(frozen=True)
class SoeKernel:
    """Sum-of-exponentials fit  t^(-alpha) ~ sum_l w_l exp(-s_l t).

    Valid on ``[t_min, t_max]`` with absolute error at most ``eps`` (checked
    on a 1000-point logarithmic sample at construction).
    """

    alpha: float
    weights: np.ndarray
    exponents: np.ndarray
    t_min: float
    t_max: float
    eps: float

    @property
    def count(self) -> int:
        return len(self.weights)

    def eval(self, t: np.ndarray | float) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        return np.exp(-np.outer(t, self.exponents)) @ self.weights


class SoeConstructionError(RuntimeError):
    """Raised when the exponential fit cannot reach the target accuracy."""


def build_soe(
    alpha: float,
    tau_hat: float,
    t_window: float,
    eps: float,
    max_terms: int = 256,
) -> SoeKernel:
    """Compress ``t**(-alpha)`` into exponentials on ``[tau_hat, t_window]``.

    Uses the integral representation

        t^(-alpha) = 1/Gamma(alpha) * int_0^inf exp(-t s) s^(alpha-1) ds

    discretized by a Gauss-Jacobi rule on the leading panel [0, 1/t_window]
    (absorbing the s^(alpha-1) singularity) and Gauss-Legendre rules on
    dyadically growing panels up to the decay cutoff set by ``tau_hat``.
    Node counts are increased until the sampled absolute error meets ``eps``.
    """
    _check_alpha(alpha)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 < tau_hat <= t_window:
        raise ValueError("need 0 < tau_hat <= t_window")

    t_samples = np.geomspace(tau_hat, t_window, 1000)
    target = t_samples ** (-alpha)
    inv_gamma = np.exp(-gammaln(alpha))

    # Upper integration cutoff: beyond s_max the integrand is below eps for
    # every t >= tau_hat.  Two fixed-point sweeps pin the log factor down.
    s_max = np.log(3.0 / (eps * tau_hat)) / tau_hat
    for _ in range(2):
        s_max = (
            np.log(3.0 * max(s_max, 1.0) ** max(alpha - 1.0, 0.0) / (eps * tau_hat))
            / tau_hat
        )
    s0 = 1.0 / t_window
    n_panels = max(1, int(np.ceil(np.log2(max(s_max / s0, 2.0)))))

    for n_leg, n_jac in ((6, 12), (8, 16), (12, 24), (16, 32), (24, 48)):
        nodes, wts = [], []
        xj, wj = roots_jacobi(n_jac, 0.0, alpha - 1.0)
        u = (xj + 1.0) / 2.0
        nodes.append(s0 * u)
        wts.append(wj * (2.0 ** (-alpha)) * s0**alpha * inv_gamma)

        xl, wl = roots_legendre(n_leg)
        lo = s0
        for _ in range(n_panels):
            hi = 2.0 * lo
            s = 0.5 * (hi - lo) * xl + 0.5 * (hi + lo)
            nodes.append(s)
            wts.append(0.5 * (hi - lo) * wl * s ** (alpha - 1.0) * inv_gamma)
            lo = hi

        s = np.concatenate(nodes)
        w = np.concatenate(wts)
        # Terms whose peak contribution on the window is negligible can go.
        keep = w * np.exp(-s * tau_hat) > eps / (10.0 * len(w))
        s, w = s[keep], w[keep]
        if len(w) > max_terms:
            continue
        err = np.max(np.abs(np.exp(-np.outer(t_samples, s)) @ w - target))
        if err <= eps:
            s.setflags(write=False)
            w.setflags(write=False)
            return SoeKernel(
                alpha=alpha, weights=w, exponents=s,
                t_min=tau_hat, t_max=t_window, eps=eps,
            )

    raise SoeConstructionError(
        f"could not reach eps={eps:g} within {max_terms} exponential terms "
        f"(alpha={alpha}, window=[{tau_hat:g}, {t_window:g}])"
    )


def soe_eps_for_starter(alpha: float, tau_hat: float, eps: float = 1e-12) -> float:
    """Absolute SOE tolerance usable for the starter scheme.

    The kernel peaks at tau_hat^(-alpha); below roughly 1e-13 of that peak,
    float64 summation noise dominates, so the requested absolute tolerance is
    floored accordingly.
    """
    return max(eps, 1e-13 * tau_hat ** (-alpha))


def fast_l1_weights(
    alpha: float, tau_hat: float, soe: SoeKernel, j: int
) -> np.ndarray:
    """History weights {b_k}_{k=1..j} of the fast L1 step at level ``j``.

    The local weight is exact, b_j = tau_hat^(-alpha)/(1-alpha); the history
    weights integrate the compressed kernel over one grid cell in closed form,

        b_k = sum_l w_l (1 - exp(-tau_hat s_l)) exp(-tau_hat s_l (j-k))
              / (tau_hat s_l),

    with the s_l = 0 limit of the cell integral equal to 1.
    """
    if j < 1:
        raise ValueError("level j must be >= 1")
    b = np.empty(j)
    b[j - 1] = tau_hat ** (-alpha) / (1.0 - alpha)
    if j > 1:
        s = soe.exponents
        cell = np.ones_like(s)
        pos = s > 0
        cell[pos] = -np.expm1(-tau_hat * s[pos]) / (tau_hat * s[pos])
        lags = np.arange(j - 1, 0, -1, dtype=float)  # j-k for k=1..j-1
        b[: j - 1] = np.exp(-tau_hat * np.outer(lags, s)) @ (soe.weights * cell)
    return b


def direct_l1_weights(alpha: float, tau_hat: float, j: int) -> np.ndarray:
    """Exact (uncompressed) L1 history weights, b_k = tau^(-a) a_{j-k}/(1-a)."""
    if j < 1:
        raise ValueError("level j must be >= 1")
    m = np.arange(j - 1, -1, -1, dtype=float)  # j-k for k=1..j
    a_m = (m + 1.0) ** (1.0 - alpha) - m ** (1.0 - alpha)
    return tau_hat ** (-alpha) / (1.0 - alpha) * a_m


def export_weights_csv(path, tables: dict[str, np.ndarray]) -> None:
    """Dump one or more weight tables as (name, index, value) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "index", "value"])
        for name, values in tables.items():
            for idx, val in enumerate(np.asarray(values)):
                writer.writerow([name, idx, repr(float(val))])
