"""Unbiased MMD estimation, the ratio statistic, and parameter gradients.

The squared-MMD U-statistic is computed from the three Gram blocks and is
deliberately left unclamped: its sign carries information (the penalized
selection criterion relies on negative values staying negative).

For centered univariate Gaussians the population MMD under a Gaussian kernel
has a closed form, exposed here as an oracle for estimator checks and for
the finite-grid selection experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import (ContractViolationError, InsufficientSampleError,
                     UnsupportedConfigurationError)
from .features import MlpGradient, MlpMap
from .kernels import CONSTANT, GAUSSIAN_UNIT, CompositeKernel, base_gram
from .validation import check_two_samples


@dataclass(frozen=True)
class PooledSample:
    """A two-sample dataset with the pooled quantities the bounds consume."""

    X: np.ndarray
    Y: np.ndarray

    @classmethod
    def from_arrays(cls, X, Y) -> "PooledSample":
        X, Y = check_two_samples(X, Y)
        return cls(X, Y)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def total(self) -> int:
        return self.m + self.n

    @property
    def rho_star(self) -> float:
        """Sample-size imbalance ratio max(N/m, N/n); 2 iff balanced."""
        N = self.total
        return max(N / self.m, N / self.n)

    @cached_property
    def frobenius_d(self) -> float:
        """Frobenius norm of the pooled data matrix."""
        return float(np.sqrt(np.sum(self.X ** 2) + np.sum(self.Y ** 2)))

    def pooled(self) -> np.ndarray:
        return np.vstack([self.X, self.Y])


def mmd_unbiased(k_xx: np.ndarray, k_yy: np.ndarray, k_xy: np.ndarray) -> float:
    """Unbiased squared-MMD U-statistic from Gram blocks. May be negative."""
    m, n = k_xx.shape[0], k_yy.shape[0]
    if k_xx.shape != (m, m) or k_yy.shape != (n, n) or k_xy.shape != (m, n):
        raise ContractViolationError("gram blocks have inconsistent shapes")
    if m < 2 or n < 2:
        raise InsufficientSampleError(f"need m >= 2 and n >= 2, got m={m}, n={n}")
    term_x = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    term_y = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    term_xy = 2.0 * k_xy.sum() / (m * n)
    return float(term_x + term_y - term_xy)


def mmd_from_pooled_gram(G: np.ndarray, idx_x: np.ndarray, idx_y: np.ndarray) -> float:
    """Unbiased MMD for one relabeling of a precomputed pooled Gram matrix."""
    m, n = len(idx_x), len(idx_y)
    if m < 2 or n < 2:
        raise InsufficientSampleError(f"need m >= 2 and n >= 2, got m={m}, n={n}")
    k_xx = G[np.ix_(idx_x, idx_x)]
    k_yy = G[np.ix_(idx_y, idx_y)]
    k_xy = G[np.ix_(idx_x, idx_y)]
    return mmd_unbiased(k_xx, k_yy, k_xy)


def population_mmd_gaussian_oracle(sigma: float, s_p: float, s_q: float) -> float:
    """Population squared MMD between centered univariate Gaussians.

    P = N(0, s_p^2), Q = N(0, s_q^2) under the Gaussian kernel of bandwidth
    ``sigma``; each expectation is (1 + var/sigma^2)^(-1/2) with var the
    variance of the pair difference.
    """
    if sigma <= 0 or s_p <= 0 or s_q <= 0:
        raise ContractViolationError("sigma, s_p, s_q must be positive")
    s2 = sigma * sigma
    e_pp = (1.0 + 2.0 * s_p * s_p / s2) ** -0.5
    e_qq = (1.0 + 2.0 * s_q * s_q / s2) ** -0.5
    e_pq = (1.0 + (s_p * s_p + s_q * s_q) / s2) ** -0.5
    return float(e_pp + e_qq - 2.0 * e_pq)


class LiuRatio(NamedTuple):
    j_liu: float
    mmd: float
    tau: float


def _paired_h_matrix(k_xx, k_yy, k_xy) -> np.ndarray:
    # H_ij = k(x_i,x_j) + k(y_i,y_j) - k(x_i,y_j) - k(x_j,y_i); symmetric
    return k_xx + k_yy - k_xy - k_xy.T


def _h1_variance(H: np.ndarray) -> float:
    # (4/m^3) sum_i (sum_j H_ij)^2 - (4/m^4) (sum_ij H_ij)^2, diagonal included
    m = H.shape[0]
    row = H.sum(axis=1)
    total = row.sum()
    return float(4.0 * (row @ row) / m ** 3 - 4.0 * total ** 2 / m ** 4)


def liu_ratio(k_xx: np.ndarray, k_yy: np.ndarray, k_xy: np.ndarray,
              lambda_reg: float = 1e-8) -> LiuRatio:
    """Plug-in z-statistic sqrt(n) * mmd / tau on the paired representation.

    Requires balanced samples (m = n). tau is the square root of the clamped
    H1-variance estimator plus ``lambda_reg``; the regularizer keeps the
    ratio finite when the variance estimate collapses, and its size controls
    how violently the ratio explodes at degenerate kernels.
    """
    if lambda_reg <= 0:
        raise ContractViolationError("lambda_reg must be positive")
    m, n = k_xx.shape[0], k_yy.shape[0]
    if m != n:
        raise UnsupportedConfigurationError(
            f"the paired ratio statistic requires m = n, got m={m}, n={n}")
    value = mmd_unbiased(k_xx, k_yy, k_xy)
    var = _h1_variance(_paired_h_matrix(k_xx, k_yy, k_xy))
    tau = float(np.sqrt(max(var, 0.0) + lambda_reg))
    return LiuRatio(j_liu=float(np.sqrt(n) * value / tau), mmd=value, tau=tau)


# ---------------------------------------------------------------------------
# gradients through the Gram blocks (deep regime)


def _require_differentiable(kernel: CompositeKernel) -> MlpMap:
    if not isinstance(kernel.feature, MlpMap):
        raise UnsupportedConfigurationError(
            "parameter gradients require an MLP feature map")
    if kernel.base.family not in (GAUSSIAN_UNIT, CONSTANT):
        raise UnsupportedConfigurationError(
            f"parameter gradients unsupported for base {kernel.base.family!r}")
    return kernel.feature


def _feature_gradient_gaussian(U, V, k_xx, k_yy, k_xy, a_xx, a_yy, a_xy):
    """Gradient of sum_blocks <A, K> w.r.t. the feature matrices U, V.

    Uses dK_ij/du_i = -(u_i - u_j) K_ij for the unit-bandwidth Gaussian.
    """
    sym_x = (a_xx + a_xx.T) * k_xx
    grad_u = -(sym_x.sum(axis=1)[:, None] * U - sym_x @ U)
    sym_y = (a_yy + a_yy.T) * k_yy
    grad_v = -(sym_y.sum(axis=1)[:, None] * V - sym_y @ V)
    cross = a_xy * k_xy
    grad_u += -(cross.sum(axis=1)[:, None] * U - cross @ V)
    grad_v += cross.T @ U - cross.sum(axis=0)[:, None] * V
    return grad_u, grad_v


def _mmd_weight_blocks(m: int, n: int):
    a_xx = np.full((m, m), 1.0 / (m * (m - 1)))
    np.fill_diagonal(a_xx, 0.0)
    a_yy = np.full((n, n), 1.0 / (n * (n - 1)))
    np.fill_diagonal(a_yy, 0.0)
    a_xy = np.full((m, n), -2.0 / (m * n))
    return a_xx, a_yy, a_xy


def _backprop_blocks(X, Y, kernel: CompositeKernel, a_xx, a_yy, a_xy,
                     k_xx, k_yy, k_xy, cache) -> MlpGradient:
    mlp = kernel.feature
    if kernel.base.family == CONSTANT:
        return MlpGradient.zeros_like(mlp)
    m = X.shape[0]
    F = cache[0][-1]
    grad_u, grad_v = _feature_gradient_gaussian(
        F[:m], F[m:], k_xx, k_yy, k_xy, a_xx, a_yy, a_xy)
    return mlp.backward(cache, np.vstack([grad_u, grad_v]))


def mmd_with_gradient(X: np.ndarray, Y: np.ndarray,
                      kernel: CompositeKernel) -> tuple[float, MlpGradient]:
    """Unbiased MMD and its exact gradient w.r.t. the MLP parameters."""
    mlp = _require_differentiable(kernel)
    X, Y = check_two_samples(X, Y, min_rows=2)
    m = X.shape[0]
    F, cache = mlp.forward_with_cache(np.vstack([X, Y]))
    G = _gram_on_features(kernel, F)
    k_xx, k_yy, k_xy = G[:m, :m], G[m:, m:], G[:m, m:]
    value = mmd_unbiased(k_xx, k_yy, k_xy)
    a_xx, a_yy, a_xy = _mmd_weight_blocks(m, Y.shape[0])
    grad = _backprop_blocks(X, Y, kernel, a_xx, a_yy, a_xy,
                            k_xx, k_yy, k_xy, cache)
    return value, grad


def mmd_gradient_wrt_features(X, Y, kernel: CompositeKernel) -> MlpGradient:
    """Gradient-only variant of :func:`mmd_with_gradient`."""
    return mmd_with_gradient(X, Y, kernel)[1]


def liu_with_gradient(X: np.ndarray, Y: np.ndarray, kernel: CompositeKernel,
                      lambda_reg: float = 1e-8) -> tuple[LiuRatio, MlpGradient]:
    """Ratio statistic and its gradient w.r.t. the MLP parameters.

    The variance term is differentiated through the paired H matrix; at the
    negative-variance clamp the variance subgradient is zero, so only the
    MMD term moves.
    """
    if lambda_reg <= 0:
        raise ContractViolationError("lambda_reg must be positive")
    mlp = _require_differentiable(kernel)
    X, Y = check_two_samples(X, Y, min_rows=2)
    m, n = X.shape[0], Y.shape[0]
    if m != n:
        raise UnsupportedConfigurationError("the ratio statistic requires m = n")
    F, cache = mlp.forward_with_cache(np.vstack([X, Y]))
    G = _gram_on_features(kernel, F)
    k_xx, k_yy, k_xy = G[:m, :m], G[m:, m:], G[:m, m:]

    value = mmd_unbiased(k_xx, k_yy, k_xy)
    H = _paired_h_matrix(k_xx, k_yy, k_xy)
    var = _h1_variance(H)
    tau = float(np.sqrt(max(var, 0.0) + lambda_reg))
    stat = LiuRatio(j_liu=float(np.sqrt(n) * value / tau), mmd=value, tau=tau)

    # dJ/dK = sqrt(n) [ (1/tau) dmmd/dK - (mmd/tau^2) dtau/dK ]
    a_xx, a_yy, a_xy = _mmd_weight_blocks(m, n)
    scale_mmd = np.sqrt(n) / tau
    a_xx = a_xx * scale_mmd
    a_yy = a_yy * scale_mmd
    a_xy = a_xy * scale_mmd
    if var > 0.0:
        row = H.sum(axis=1)
        total = row.sum()
        # dvar/dH_ab = (8/m^3) row_a - (8/m^4) total
        g_h = (8.0 / m ** 3) * row[:, None] - (8.0 / m ** 4) * total
        g_h = np.broadcast_to(g_h, H.shape)
        dtau_scale = np.sqrt(n) * value / tau ** 2 / (2.0 * tau)
        a_xx = a_xx - dtau_scale * g_h
        a_yy = a_yy - dtau_scale * g_h
        a_xy = a_xy + dtau_scale * (g_h + g_h.T)
    grad = _backprop_blocks(X, Y, kernel, a_xx, a_yy, a_xy,
                            k_xx, k_yy, k_xy, cache)
    return stat, grad


def _gram_on_features(kernel: CompositeKernel, F: np.ndarray) -> np.ndarray:
    return base_gram(kernel.base, F, F)
