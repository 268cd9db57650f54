"""Feature maps: the three kernel-selection regimes.

Every feature map exposes the same informal interface:

* ``transform(X)``            -- map an (n, d) batch to (n, d_out) features
* ``lipschitz_constant()``    -- an evaluable upper bound L(h) on the map's
                                 Lipschitz constant
* ``describe()`` / ``parameter_arrays()`` -- reporting plumbing

``LinearMap`` rescales inputs by a bandwidth (L = 1/sigma). ``PolynomialMap``
lifts to all monomials of total degree 1..p, then rescales (L = L_psi/sigma,
with L_psi a data-dependent Jacobian bound). ``MlpMap`` is a small LeakyReLU
network with an affine output layer (L = product of layer spectral norms);
it additionally supports exact reverse-mode parameter gradients, which the
deep-regime optimizer consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .validation import check_matrix

# ---------------------------------------------------------------------------
# linear regime


@dataclass(frozen=True)
class LinearMap:
    """h(x) = x / sigma."""

    sigma: float
    dim: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractViolationError("sigma must be positive")

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.dim:
            raise ContractViolationError(
                f"expected inputs of dimension {self.dim}, got {X.shape[1]}")
        return X / self.sigma

    def lipschitz_constant(self) -> float:
        return 1.0 / self.sigma

    def describe(self) -> str:
        return f"linear(sigma={self.sigma:.6g})"

    def parameter_arrays(self):
        return [np.array([self.sigma])]


def identity_map(dim: int) -> LinearMap:
    return LinearMap(sigma=1.0, dim=dim)


# ---------------------------------------------------------------------------
# polynomial regime


def multi_indices(dim: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples alpha with 1 <= |alpha| <= degree.

    Ordered by total degree, then lexicographically with the first coordinate
    most significant (so for d=2, p=2: x1, x2, x1^2, x1*x2, x2^2). The order
    is a fixed convention; the Laplacian base kernel only sees the feature
    norm, so any fixed order yields the same kernel.
    """
    if degree < 1:
        raise ContractViolationError("degree must be >= 1")

    def compositions(total: int, parts: int):
        if parts == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for tail in compositions(total - head, parts - 1):
                yield (head,) + tail

    out: list[tuple[int, ...]] = []
    for t in range(1, degree + 1):
        out.extend(compositions(t, dim))
    return out


def poly_dimension(dim: int, degree: int) -> int:
    """Number of monomials of total degree 1..p in d variables."""
    return math.comb(dim + degree, degree) - 1


def _power_table(X: np.ndarray, degree: int) -> list[list[np.ndarray]]:
    # pows[j][e] = X[:, j] ** e, shared across monomials
    n = X.shape[0]
    table = []
    for j in range(X.shape[1]):
        col = [np.ones(n)]
        for _ in range(degree):
            col.append(col[-1] * X[:, j])
        table.append(col)
    return table


@dataclass(frozen=True)
class PolynomialMap:
    """h(x) = Psi_p(x) / sigma with Psi_p the degree-p monomial lift.

    ``psi_lipschitz`` is a data-dependent upper bound on the Lipschitz
    constant of Psi_p over the region of interest; see
    :func:`psi_lipschitz_bound`. It must be supplied because the lift is not
    globally Lipschitz.
    """

    degree: int
    sigma: float
    dim: int
    psi_lipschitz: float
    index_table: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        if not self.sigma > 0:
            raise ContractViolationError("sigma must be positive")
        if self.degree < 1:
            raise ContractViolationError("degree must be >= 1")
        if not self.index_table:
            object.__setattr__(
                self, "index_table", tuple(multi_indices(self.dim, self.degree)))
        if len(self.index_table) != poly_dimension(self.dim, self.degree):
            raise ContractViolationError("index table size does not match D_p")

    @property
    def output_dim(self) -> int:
        return len(self.index_table)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.dim:
            raise ContractViolationError(
                f"expected inputs of dimension {self.dim}, got {X.shape[1]}")
        return poly_features_batch(X, self.index_table) / self.sigma

    def lipschitz_constant(self) -> float:
        return self.psi_lipschitz / self.sigma

    def describe(self) -> str:
        return f"poly(p={self.degree}, sigma={self.sigma:.6g})"

    def parameter_arrays(self):
        return [np.array([float(self.degree), self.sigma, self.psi_lipschitz])]


def poly_features_batch(X: np.ndarray, index_table) -> np.ndarray:
    """Unscaled monomial features for a batch, columns in index-table order."""
    pows = _power_table(X, max(sum(a) for a in index_table))
    out = np.empty((X.shape[0], len(index_table)))
    for col, alpha in enumerate(index_table):
        acc = np.ones(X.shape[0])
        for j, e in enumerate(alpha):
            if e:
                acc = acc * pows[j][e]
        out[:, col] = acc
    return out


def poly_features(pmap: PolynomialMap, x) -> np.ndarray:
    """Unscaled monomial vector Psi_p(x) under the map's fixed ordering."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != pmap.dim:
        raise ContractViolationError(
            f"expected a vector of dimension {pmap.dim}")
    return poly_features_batch(x[None, :], pmap.index_table)[0]


def psi_lipschitz_bound(points: np.ndarray, degree: int) -> float:
    """Data-dependent Lipschitz bound for the degree-p monomial lift.

    Returns max over the given points of the Frobenius norm of the analytic
    Jacobian of Psi_p (an upper bound on its operator norm). Conservative by
    construction; downstream calibration absorbs the slack.
    """
    points = check_matrix(points, "points")
    table = multi_indices(points.shape[1], degree)
    pows = _power_table(points, degree)
    frob_sq = np.zeros(points.shape[0])
    for alpha in table:
        for j, e in enumerate(alpha):
            if e == 0:
                continue
            term = np.full(points.shape[0], float(e))
            for i, a in enumerate(alpha):
                term = term * pows[i][a - 1 if i == j else a]
            frob_sq += term ** 2
    return float(np.sqrt(frob_sq.max()))


# ---------------------------------------------------------------------------
# deep regime


def spectral_norm(W: np.ndarray, iters: int = 5000, tol: float = 1e-10) -> float:
    """Largest singular value of W by power iteration (value only)."""
    return spectral_norm_triplet(W, iters=iters, tol=tol)[0]


def spectral_norm_triplet(W: np.ndarray, iters: int = 5000, tol: float = 1e-10):
    """Power iteration returning (sigma, u, v) with sigma ~ ||W||_2, W v ~ sigma u.

    Deterministic start (normalized all-ones vector, with canonical-basis
    fallback if that lands in the kernel of W). Stops after ``iters``
    iterations or once the value's relative change drops below ``tol``;
    the residual error is of order change/(spectral gap), so the tight
    default tolerance keeps the value accurate even for nearly degenerate
    top singular pairs while gapped matrices stop in a few dozen rounds.
    A zero matrix yields sigma = 0.
    """
    W = np.asarray(W, dtype=np.float64)
    if iters < 1:
        raise ContractViolationError("iters must be >= 1")
    rows, cols = W.shape
    if not np.any(W):
        return 0.0, np.zeros(rows), np.zeros(cols)

    v = np.ones(cols) / math.sqrt(cols)
    if not np.any(W @ v):
        for j in range(cols):  # all-ones start annihilated; pick a basis vector
            if np.any(W[:, j]):
                v = np.zeros(cols)
                v[j] = 1.0
                break

    sigma_prev = 0.0
    u = np.zeros(rows)
    for _ in range(iters):
        u = W @ v
        norm_u = float(np.linalg.norm(u))
        if norm_u == 0.0:
            return 0.0, np.zeros(rows), v
        u /= norm_u
        w = W.T @ u
        sigma = float(np.linalg.norm(w))
        if sigma == 0.0:
            return 0.0, u, np.zeros(cols)
        v = w / sigma
        if abs(sigma - sigma_prev) <= tol * sigma:
            return sigma, u, v
        sigma_prev = sigma
    return sigma_prev, u, v


@dataclass
class MlpGradient:
    """Parameter gradients mirroring an MlpMap's weight/bias shapes."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for dW, db in zip(self.d_weights, self.d_biases):
            out.extend((dW, db))
        return out

    @classmethod
    def zeros_like(cls, mlp: "MlpMap") -> "MlpGradient":
        return cls([np.zeros_like(W) for W in mlp.weights],
                   [np.zeros_like(b) for b in mlp.biases])

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "MlpGradient":
        return cls(list(arrays[0::2]), list(arrays[1::2]))


@dataclass
class MlpMap:
    """Feed-forward feature map with LeakyReLU hidden layers.

    The final layer is affine (no trailing activation); hidden activations
    are LeakyReLU with the given negative slope. Instances are treated as
    immutable: optimizer updates build new instances via ``with_parameters``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slope: float = 0.01

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ContractViolationError("weights/biases must align and be nonempty")
        for j, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ContractViolationError(f"layer {j} has inconsistent shapes")
            if j and W.shape[1] != self.weights[j - 1].shape[0]:
                raise ContractViolationError(f"layer {j} width mismatch")

    @classmethod
    def initialize(cls, layer_widths: list[int], rng: np.random.Generator,
                   slope: float = 0.01) -> "MlpMap":
        """Glorot-uniform weights, zero biases; keeps the initial spectral
        product at order one."""
        if len(layer_widths) < 2:
            raise ContractViolationError("need at least input and output widths")
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_widths[:-1], layer_widths[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, slope=slope)

    @property
    def layer_widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def dim(self) -> int:
        return self.weights[0].shape[1]

    def with_parameters(self, arrays: list[np.ndarray]) -> "MlpMap":
        return MlpMap(list(arrays[0::2]), list(arrays[1::2]), slope=self.slope)

    def parameter_arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> "MlpMap":
        return MlpMap([W.copy() for W in self.weights],
                      [b.copy() for b in self.biases], slope=self.slope)

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ContractViolationError(
                f"expected a batch of dimension {self.dim}")
        return X

    def transform(self, X: np.ndarray) -> np.ndarray:
        return self.forward_with_cache(self._check_input(X))[0]

    def forward_with_cache(self, X: np.ndarray):
        """Forward pass keeping layer inputs and pre-activations for backward."""
        X = self._check_input(X)
        inputs = [X]
        pre_acts = []
        h = X
        last = len(self.weights) - 1
        for j, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W.T + b
            pre_acts.append(z)
            h = z if j == last else np.where(z > 0, z, self.slope * z)
            inputs.append(h)
        return h, (inputs, pre_acts)

    def backward(self, cache, upstream: np.ndarray) -> MlpGradient:
        """Exact reverse-mode gradients of sum(upstream * output) w.r.t. params."""
        inputs, pre_acts = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != inputs[-1].shape:
            raise ContractViolationError(
                f"upstream shape {upstream.shape} does not match output "
                f"shape {inputs[-1].shape}")
        grad = MlpGradient.zeros_like(self)
        g = upstream
        last = len(self.weights) - 1
        for j in range(last, -1, -1):
            if j != last:
                g = g * np.where(pre_acts[j] > 0, 1.0, self.slope)
            grad.d_weights[j] = g.T @ inputs[j]
            grad.d_biases[j] = g.sum(axis=0)
            if j:
                g = g @ self.weights[j]
        return grad

    # the reduced iteration budget is the optimizer's speed/accuracy
    # trade-off; standalone spectral_norm keeps the high-accuracy default
    def spectral_norms(self, iters: int = 64, tol: float = 1e-9) -> list[float]:
        return [spectral_norm(W, iters=iters, tol=tol) for W in self.weights]

    def spectral_product(self, iters: int = 64, tol: float = 1e-9) -> float:
        return float(np.prod(self.spectral_norms(iters=iters, tol=tol)))

    def lipschitz_constant(self) -> float:
        return self.spectral_product()

    def describe(self) -> str:
        widths = "-".join(str(w) for w in self.layer_widths)
        return f"mlp({widths}, Pi={self.spectral_product():.4g})"


def mlp_forward(mlp: MlpMap, X: np.ndarray) -> np.ndarray:
    return mlp.transform(X)


def mlp_backward(mlp: MlpMap, cache, upstream: np.ndarray) -> MlpGradient:
    return mlp.backward(cache, upstream)


def lipschitz_constant(h) -> float:
    """L(h) for any feature map: 1/sigma, L_psi/sigma, or the spectral product."""
    return float(h.lipschitz_constant())
