"""Base kernels and composite kernels.

A base kernel is a bounded, Lipschitz positive-semidefinite function on the
feature space, evaluated at unit bandwidth; bandwidths and representations
live in the feature map. A composite kernel applies the base kernel to
feature-mapped inputs: ``k_h(x, x') = k(h(x), h(x'))``.

Each :class:`KernelSpec` records the boundedness constant ``nu`` and a valid
Lipschitz upper bound ``lip`` (per unit distance in feature space); these feed
the worst-case constants of the concentration machinery in
:mod:`cpmmd.criterion`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InsufficientSampleError
from .validation import check_two_samples, check_vector

GAUSSIAN_UNIT = "gaussian_unit"
LAPLACIAN_UNIT = "laplacian_unit"
CONSTANT = "constant"

_FAMILIES = (GAUSSIAN_UNIT, LAPLACIAN_UNIT, CONSTANT)


@dataclass(frozen=True)
class KernelSpec:
    """A unit-bandwidth base kernel with its regularity constants.

    ``gaussian_unit``:  k(u, v) = exp(-||u - v||^2 / 2), nu = 1, lip = 1
                        (lip = 1 is a valid upper bound; the tight constant
                        is exp(-1/2), and the slack is absorbed downstream
                        by calibration).
    ``laplacian_unit``: k(u, v) = exp(-||u - v||), nu = 1, lip = 1.
    ``constant``:       k(u, v) = c with c in [0, nu]; exists for tests only.
    """

    family: str
    nu: float = 1.0
    lip: float = 1.0
    value: float = 0.0  # only used by the constant family

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ContractViolationError(f"unknown kernel family {self.family!r}")
        if not self.nu > 0:
            raise ContractViolationError("nu must be positive")
        if self.lip < 0:
            raise ContractViolationError("lip must be nonnegative")
        if self.family == CONSTANT and not 0 <= self.value <= self.nu:
            raise ContractViolationError("constant kernel value must lie in [0, nu]")


def gaussian_unit() -> KernelSpec:
    return KernelSpec(GAUSSIAN_UNIT, nu=1.0, lip=1.0)


def laplacian_unit() -> KernelSpec:
    return KernelSpec(LAPLACIAN_UNIT, nu=1.0, lip=1.0)


def constant(value: float, nu: float = 1.0) -> KernelSpec:
    return KernelSpec(CONSTANT, nu=nu, lip=0.0, value=value)


def squared_distances(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clamped at 0 against round-off."""
    uu = np.einsum("ij,ij->i", U, U)[:, None]
    vv = np.einsum("ij,ij->i", V, V)[None, :]
    d2 = uu + vv - 2.0 * (U @ V.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def gram_from_sq_distances(spec: KernelSpec, d2: np.ndarray) -> np.ndarray:
    """Base-kernel Gram matrix from precomputed squared distances."""
    if spec.family == GAUSSIAN_UNIT:
        return np.exp(-0.5 * d2)
    if spec.family == LAPLACIAN_UNIT:
        return np.exp(-np.sqrt(d2))
    return np.full(d2.shape, spec.value)


def base_gram(spec: KernelSpec, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Evaluate the base kernel on every pair of rows of U and V."""
    if U.shape[1] != V.shape[1]:
        raise ContractViolationError(
            f"feature dimension mismatch: {U.shape[1]} vs {V.shape[1]}")
    return gram_from_sq_distances(spec, squared_distances(U, V))


def eval_base(spec: KernelSpec, u, v) -> float:
    """Evaluate the base kernel at a single pair of feature vectors."""
    u = check_vector(u, "u")
    v = check_vector(v, "v")
    if u.shape != v.shape:
        raise ContractViolationError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(base_gram(spec, u[None, :], v[None, :])[0, 0])


@dataclass(frozen=True)
class CompositeKernel:
    """Base kernel composed with a feature map: k_h(x, x') = k(h(x), h(x'))."""

    base: KernelSpec
    feature: object  # any FeatureMap from cpmmd.features

    def __call__(self, x, y) -> float:
        x = check_vector(x, "x")
        y = check_vector(y, "y")
        U = self.feature.transform(x[None, :])
        V = self.feature.transform(y[None, :])
        return float(base_gram(self.base, U, V)[0, 0])

    def gram_pooled(self, Z: np.ndarray) -> np.ndarray:
        """Gram matrix of the composite kernel on one pooled sample."""
        F = self.feature.transform(Z)
        return base_gram(self.base, F, F)

    def gram_blocks(self, X: np.ndarray, Y: np.ndarray):
        """The three Gram blocks (K_XX, K_YY, K_XY) the MMD estimator needs.

        Computed through one pooled feature pass so the diagonal blocks are
        exactly symmetric.
        """
        X, Y = check_two_samples(X, Y)
        m, n = X.shape[0], Y.shape[0]
        if m < 2 or n < 2:
            raise InsufficientSampleError(
                f"gram_blocks needs m >= 2 and n >= 2, got m={m}, n={n}")
        G = self.gram_pooled(np.vstack([X, Y]))
        return G[:m, :m], G[m:, m:], G[:m, m:]

    def describe(self) -> str:
        return f"{self.base.family}∘{self.feature.describe()}"

    def fingerprint(self) -> str:
        """Stable digest of the kernel's full parameterization."""
        h = hashlib.sha256()
        h.update(self.base.family.encode())
        h.update(np.float64(self.base.value).tobytes())
        for arr in self.feature.parameter_arrays():
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]
