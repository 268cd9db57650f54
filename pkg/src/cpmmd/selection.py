"""Kernel selection per regime, with full trajectory recording.

Scalar regimes (bandwidth of a Gaussian kernel on raw inputs, or of a
Laplacian kernel on polynomial features) are searched by a 33-point
log-spaced grid scan followed by a bounded Brent refinement in log-sigma on
the best grid bracket. The deep regime runs Adam ascent with global-norm
gradient clipping on the penalized criterion; the penalized run returns the
trajectory argmax, while the plain and ratio baselines return the final
iterate, matching how those baselines are used in practice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import pdist

from .errors import (ContractViolationError, DegenerateDataError,
                     NumericalAbortError, UnsupportedConfigurationError)
from .features import (MlpMap, PolynomialMap, LinearMap, poly_features_batch,
                       multi_indices, psi_lipschitz_bound, spectral_norm_triplet)
from .kernels import (CompositeKernel, KernelSpec, gaussian_unit,
                      laplacian_unit, squared_distances)
from .mmd import (PooledSample, liu_with_gradient, mmd_unbiased,
                  mmd_with_gradient)

CRITERION_CP = "cp"
CRITERION_PLAIN = "plain"
CRITERION_LIU = "liu"

GRID_SIZE = 33
REFINE_LOG_TOL = 1e-3  # ~ relative tolerance in sigma
SIGMA_RANGE_FACTORS = (0.05, 20.0)  # default range, in units of the median distance


# ---------------------------------------------------------------------------
# regimes and configuration


@dataclass(frozen=True)
class LinearRegime:
    """Gaussian kernel with a continuously selected bandwidth."""

    sigma_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class PolynomialRegime:
    """Laplacian kernel on degree-p monomial features, bandwidth selected."""

    degree: int = 4
    sigma_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class DeepRegime:
    """MLP feature map under a unit-bandwidth Gaussian kernel."""

    hidden_width: int = 200
    n_hidden: int = 2
    feature_dim: int = 10
    slope: float = 0.01

    def layer_widths(self, dim: int) -> list[int]:
        return [dim] + [self.hidden_width] * self.n_hidden + [self.feature_dim]


Regime = LinearRegime | PolynomialRegime | DeepRegime


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam ascent settings for the deep regime."""

    steps: int = 100
    learning_rate: float = 0.005
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.steps < 0:
            raise ContractViolationError("steps must be >= 0")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ContractViolationError("learning_rate and clip_norm must be positive")


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    criterion: float
    mmd: float
    proxy: float
    lipschitz: float
    param: float | None = None       # sigma, for scalar searches
    tau: float | None = None         # ratio-criterion denominator
    grad_norm: float | None = None   # post-clip global norm (deep updates only)


@dataclass
class Trajectory:
    """Everything the optimizer saw, plus which iterate was selected."""

    criterion_name: str
    records: list[TrajectoryRecord] = field(default_factory=list)
    selected_index: int = 0

    def append(self, record: TrajectoryRecord) -> None:
        self.records.append(record)

    @property
    def selected(self) -> TrajectoryRecord:
        return self.records[self.selected_index]

    @property
    def final(self) -> TrajectoryRecord:
        return self.records[-1]

    def max_proxy(self) -> float:
        return max(r.proxy for r in self.records)

    def argmax_criterion(self) -> int:
        values = [r.criterion for r in self.records]
        best = 0
        for i, v in enumerate(values):
            if v > values[best]:
                best = i
        return best


# ---------------------------------------------------------------------------
# median heuristic


def median_heuristic(data: PooledSample | np.ndarray) -> float:
    """Median of all pairwise Euclidean distances of the pooled points."""
    pts = data.pooled() if isinstance(data, PooledSample) else np.asarray(data, float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ContractViolationError("median heuristic needs >= 2 points")
    med = float(np.median(pdist(pts)))
    if med <= 0.0:
        raise DegenerateDataError("all points identical: degenerate bandwidth")
    return med


# ---------------------------------------------------------------------------
# scalar bandwidth selection (linear / polynomial regimes)


class _ScalarObjective:
    """J(sigma) with the pooled Gram expressed through fixed distances.

    For the precomputed feature distances D the kernels are
    exp(-D^2/(2 sigma^2)) (Gaussian on raw inputs) and exp(-D/sigma)
    (Laplacian on polynomial features), so a bandwidth evaluation costs one
    elementwise exp; this matches the composite-kernel path entrywise.
    """

    def __init__(self, train: PooledSample, regime: LinearRegime | PolynomialRegime,
                 c1_hat: float):
        self.c1_hat = c1_hat
        self.m = train.m
        self.df_over_n = train.frobenius_d / train.total
        Z = train.pooled()
        if isinstance(regime, LinearRegime):
            self.gaussian = True
            self.lip_numerator = 1.0
            self.sq_dist = squared_distances(Z, Z)
        else:
            self.gaussian = False
            self.lip_numerator = psi_lipschitz_bound(Z, regime.degree)
            feats = poly_features_batch(Z, multi_indices(Z.shape[1], regime.degree))
            self.dist = np.sqrt(squared_distances(feats, feats))

    def evaluate(self, sigma: float) -> TrajectoryRecord:
        if self.gaussian:
            G = np.exp(self.sq_dist / (-2.0 * sigma * sigma))
        else:
            G = np.exp(self.dist / -sigma)
        m = self.m
        value = mmd_unbiased(G[:m, :m], G[m:, m:], G[:m, m:])
        lip = self.lip_numerator / sigma
        proxy = lip * self.df_over_n
        crit = value - self.c1_hat * proxy
        if not math.isfinite(crit):
            raise NumericalAbortError(f"non-finite criterion at sigma={sigma}")
        return TrajectoryRecord(step=0, criterion=crit, mmd=value, proxy=proxy,
                                lipschitz=lip, param=sigma)


def default_sigma_range(train: PooledSample) -> tuple[float, float]:
    med = median_heuristic(train)
    return (SIGMA_RANGE_FACTORS[0] * med, SIGMA_RANGE_FACTORS[1] * med)


def select_scalar_bandwidth(train: PooledSample,
                            regime: LinearRegime | PolynomialRegime,
                            criterion: str = CRITERION_CP,
                            c1_hat: float = 0.0,
                            grid_size: int = GRID_SIZE,
                            ) -> tuple[CompositeKernel, Trajectory]:
    """Maximize the criterion over the bandwidth range.

    Grid scan on a log-spaced grid (ties broken toward the smallest sigma),
    then a Brent refinement on the best bracket; the refined point is taken
    only when it strictly improves on the grid.
    """
    if criterion == CRITERION_PLAIN:
        c1_hat = 0.0
    elif criterion != CRITERION_CP:
        raise UnsupportedConfigurationError(
            f"scalar selection supports 'cp' or 'plain', got {criterion!r}")
    if c1_hat < 0:
        raise ContractViolationError("c1_hat must be nonnegative")
    sigma_range = regime.sigma_range or default_sigma_range(train)
    lo, hi = float(sigma_range[0]), float(sigma_range[1])
    if not 0 < lo < hi:
        raise ContractViolationError(f"invalid sigma range ({lo}, {hi})")

    objective = _ScalarObjective(train, regime, c1_hat)
    grid = np.geomspace(lo, hi, grid_size)
    traj = Trajectory(criterion_name=criterion)
    best = 0
    for i, sigma in enumerate(grid):
        rec = replace(objective.evaluate(float(sigma)), step=i)
        traj.append(rec)
        if rec.criterion > traj.records[best].criterion:
            best = i

    bracket_lo = grid[max(best - 1, 0)]
    bracket_hi = grid[min(best + 1, grid_size - 1)]
    if bracket_lo < bracket_hi:
        res = minimize_scalar(
            lambda t: -objective.evaluate(float(math.exp(t))).criterion,
            bounds=(math.log(bracket_lo), math.log(bracket_hi)),
            method="bounded", options={"xatol": REFINE_LOG_TOL})
        refined = replace(objective.evaluate(float(math.exp(res.x))), step=len(traj.records))
        if refined.criterion > traj.records[best].criterion:
            traj.append(refined)
            best = len(traj.records) - 1
    traj.selected_index = best

    sigma_star = traj.records[best].param
    if isinstance(regime, LinearRegime):
        kernel = CompositeKernel(gaussian_unit(), LinearMap(sigma_star, train.dim))
    else:
        kernel = CompositeKernel(
            laplacian_unit(),
            PolynomialMap(regime.degree, sigma_star, train.dim,
                          psi_lipschitz=objective.lip_numerator))
    return kernel, traj


# ---------------------------------------------------------------------------
# deep selection (Adam ascent with clipping)


def clip_global_norm(arrays: list[np.ndarray], clip: float) -> tuple[list[np.ndarray], float]:
    total = math.sqrt(sum(float(np.sum(a * a)) for a in arrays))
    if total > clip:
        scale = clip / total
        return [a * scale for a in arrays], clip
    return arrays, total


class _AdamState:
    def __init__(self, templates: list[np.ndarray], cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(a) for a in templates]
        self.v = [np.zeros_like(a) for a in templates]

    def ascend(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        cfg = self.cfg
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = cfg.beta1 * self.m[i] + (1 - cfg.beta1) * g
            self.v[i] = cfg.beta2 * self.v[i] + (1 - cfg.beta2) * g * g
            m_hat = self.m[i] / (1 - cfg.beta1 ** self.t)
            v_hat = self.v[i] / (1 - cfg.beta2 ** self.t)
            out.append(p + cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps))
        return out


def _spectral_state(mlp: MlpMap):
    """Per-layer (sigma, u, v) plus the product of layer spectral norms.

    Uses the optimizer's reduced power-iteration budget; the proxy feeds a
    penalty, not a certificate, so sub-1e-6 accuracy is not needed here.
    """
    triplets = [spectral_norm_triplet(W, iters=64, tol=1e-9)
                for W in mlp.weights]
    product = float(np.prod([t[0] for t in triplets]))
    return product, triplets


def _proxy_gradient(mlp: MlpMap, product: float, triplets, scale: float) -> list[np.ndarray]:
    """Gradient arrays of scale * Pi w.r.t. [W1, b1, W2, b2, ...]."""
    grads = []
    for (sigma, u, v), W, b in zip(triplets, mlp.weights, mlp.biases):
        if sigma > 0.0:
            grads.append(scale * (product / sigma) * np.outer(u, v))
        else:
            grads.append(np.zeros_like(W))
        grads.append(np.zeros_like(b))
    return grads


def select_deep(train: PooledSample, mlp0: MlpMap, cfg: OptimizerConfig,
                criterion: str = CRITERION_CP, c1_hat: float = 0.0,
                base: KernelSpec | None = None, lambda_reg: float = 1e-8,
                ) -> tuple[MlpMap, Trajectory]:
    """Adam ascent on the chosen criterion over the MLP parameters.

    Records (criterion, mmd, proxy, spectral product, post-clip grad norm)
    at every iterate 0..T. The penalized run returns the argmax iterate;
    plain and ratio runs return the final iterate. A non-finite criterion
    aborts with the trajectory collected so far.
    """
    if criterion not in (CRITERION_CP, CRITERION_PLAIN, CRITERION_LIU):
        raise UnsupportedConfigurationError(f"unknown criterion {criterion!r}")
    if criterion == CRITERION_LIU and train.m != train.n:
        raise UnsupportedConfigurationError("ratio criterion requires m = n")
    if c1_hat < 0:
        raise ContractViolationError("c1_hat must be nonnegative")
    base = base or gaussian_unit()
    df_over_n = train.frobenius_d / train.total

    mlp = mlp0
    params = mlp.parameter_arrays()
    adam = _AdamState(params, cfg)
    traj = Trajectory(criterion_name=criterion)
    best_index = 0
    best_mlp = mlp

    for t in range(cfg.steps + 1):
        kernel = CompositeKernel(base, mlp)
        product, triplets = _spectral_state(mlp)
        proxy = product * df_over_n
        tau = None
        if criterion == CRITERION_LIU:
            stat, grad = liu_with_gradient(train.X, train.Y, kernel,
                                           lambda_reg=lambda_reg)
            value, crit, tau = stat.mmd, stat.j_liu, stat.tau
            grad_arrays = grad.arrays()
        else:
            value, grad = mmd_with_gradient(train.X, train.Y, kernel)
            grad_arrays = grad.arrays()
            if criterion == CRITERION_CP:
                crit = value - c1_hat * proxy
                if c1_hat > 0.0:
                    penalty = _proxy_gradient(mlp, product, triplets,
                                              scale=c1_hat * df_over_n)
                    grad_arrays = [g - p for g, p in zip(grad_arrays, penalty)]
            else:
                crit = value

        if not (math.isfinite(crit) and math.isfinite(value)):
            raise NumericalAbortError(
                f"non-finite criterion at step {t}", trajectory=traj)

        grad_norm = None
        if t < cfg.steps:
            grad_arrays, grad_norm = clip_global_norm(grad_arrays, cfg.clip_norm)
        traj.append(TrajectoryRecord(step=t, criterion=crit, mmd=value,
                                     proxy=proxy, lipschitz=product, tau=tau,
                                     grad_norm=grad_norm))
        if crit > traj.records[best_index].criterion:
            best_index = t
            best_mlp = mlp
        if t < cfg.steps:
            params = adam.ascend(params, grad_arrays)
            mlp = mlp.with_parameters(params)

    if criterion == CRITERION_CP:
        traj.selected_index = best_index
        return best_mlp, traj
    traj.selected_index = len(traj.records) - 1
    return mlp, traj


# ---------------------------------------------------------------------------
# finite-grid argmax baseline


@dataclass(frozen=True)
class GridArgmaxResult:
    index: int
    regret_bound: float
    mmds: tuple[float, ...]


def grid_argmax_selector(kernels: list[CompositeKernel], train: PooledSample,
                         delta: float = 0.05) -> GridArgmaxResult:
    """Pick the empirical-MMD argmax over a finite kernel grid.

    Ties break toward the smallest index. The reported regret bound is
    2 * (4 * nu * rho) * sqrt(ln(2B/delta) / N) with nu the largest
    boundedness constant on the grid.
    """
    if not kernels:
        raise ContractViolationError("need at least one kernel")
    if not 0.0 < delta < 1.0:
        raise ContractViolationError("delta must lie in (0, 1)")
    values = []
    for kernel in kernels:
        blocks = kernel.gram_blocks(train.X, train.Y)
        values.append(mmd_unbiased(*blocks))
    index = int(np.argmax(values))  # first maximum: smallest index on ties
    nu = max(k.base.nu for k in kernels)
    c2 = 4.0 * nu * train.rho_star
    bound = 2.0 * c2 * math.sqrt(math.log(2.0 * len(kernels) / delta) / train.total)
    return GridArgmaxResult(index=index, regret_bound=float(bound),
                            mmds=tuple(float(v) for v in values))


def bandwidth_grid_kernels(train: PooledSample, size: int = 10,
                           families: tuple[str, ...] = ("gaussian",),
                           span: tuple[float, float] = (0.25, 4.0),
                           ) -> list[CompositeKernel]:
    """Median-anchored bandwidth grid used by the finite-grid baseline."""
    med = median_heuristic(train)
    n_band = size // len(families)
    sigmas = np.geomspace(span[0] * med, span[1] * med, n_band)
    kernels = []
    for family in families:
        base = gaussian_unit() if family == "gaussian" else laplacian_unit()
        for sigma in sigmas:
            kernels.append(CompositeKernel(base, LinearMap(float(sigma), train.dim)))
    return kernels


# ---------------------------------------------------------------------------
# dispatcher


def select_kernel(train: PooledSample, regime: Regime, criterion: str,
                  c1_hat: float, optimizer_config: OptimizerConfig | None,
                  rng: np.random.Generator | None = None,
                  ) -> tuple[CompositeKernel, Trajectory]:
    """Regime-dispatching selection entry point used by the pipeline."""
    if isinstance(regime, (LinearRegime, PolynomialRegime)):
        return select_scalar_bandwidth(train, regime, criterion=criterion,
                                       c1_hat=c1_hat)
    if isinstance(regime, DeepRegime):
        if rng is None:
            raise ContractViolationError("deep selection needs an rng for init")
        mlp0 = MlpMap.initialize(regime.layer_widths(train.dim), rng,
                                 slope=regime.slope)
        cfg = optimizer_config or OptimizerConfig()
        mlp, traj = select_deep(train, mlp0, cfg, criterion=criterion,
                                c1_hat=c1_hat)
        return CompositeKernel(gaussian_unit(), mlp), traj
    raise ContractViolationError(f"unknown regime {regime!r}")
