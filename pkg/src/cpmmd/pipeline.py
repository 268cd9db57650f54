"""The deployment protocol, end to end.

Split the data per class into a training half and a held-out half; calibrate
the penalty coefficient on the training half (unless one is injected); run
penalized selection on the training half; then run the level-alpha
permutation test with the selected (now data-independent) kernel on the
held-out half. Exactness of the test follows from the split: selection never
sees the held-out half.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationResult, calibrate_c1
from .criterion import PowerCertificate, power_certificate
from .datagen import derive_rng
from .errors import ContractViolationError, CpmmdError, InsufficientSampleError
from .kernels import CompositeKernel
from .mmd import PooledSample, mmd_from_pooled_gram
from .selection import (CRITERION_CP, OptimizerConfig, Regime, Trajectory,
                        select_kernel)
from .validation import check_two_samples


@dataclass(frozen=True)
class TestConfig:
    """Knobs of the deployed test."""

    __test__ = False  # not a pytest class, despite the name

    alpha: float = 0.05
    n_perm: int = 200
    n_cal: int = 10
    split_fraction: float = 0.5
    seed: int | None = None
    delta: float = 0.05        # certificate confidence (held-out side)
    delta_prime: float = 0.05  # certificate confidence (training side)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ContractViolationError("alpha must lie in (0, 1)")
        if self.n_perm < 1:
            raise ContractViolationError("n_perm must be >= 1")
        if not 0.0 < self.split_fraction < 1.0:
            raise ContractViolationError("split_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class TestReport:
    """Everything the deployed test decided and measured."""

    __test__ = False  # not a pytest class, despite the name

    reject: bool
    p_value: float
    statistic: float
    c_alpha: float
    selected_kernel: str
    kernel_fingerprint: str
    c1_hat: float
    certificate: PowerCertificate
    trajectory: Trajectory
    calibration: CalibrationResult | None = None
    train_total: int = 0
    test_total: int = 0

    def summary(self) -> dict:
        rec = self.trajectory.selected
        return {
            "reject": self.reject,
            "p_value": self.p_value,
            "statistic": self.statistic,
            "c_alpha": self.c_alpha,
            "c1_hat": self.c1_hat,
            "selected_kernel": self.selected_kernel,
            "selected_step": rec.step,
            "selected_mmd": rec.mmd,
            "selected_proxy": rec.proxy,
            "certificate_lhs": self.certificate.lhs,
            "certificate_rhs": self.certificate.rhs,
            "certificate_satisfied": self.certificate.satisfied,
        }


@contextmanager
def _stage(name: str):
    """Label any escaping package error with the pipeline stage it came from."""
    try:
        yield
    except CpmmdError as exc:
        if exc.stage is None:
            exc.stage = name
            if exc.args and isinstance(exc.args[0], str):
                exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


def stratified_split(X, Y, fraction: float = 0.5,
                     rng: np.random.Generator | None = None,
                     ) -> tuple[PooledSample, PooledSample]:
    """Per-class uniform split; train gets floor(size * fraction) per class."""
    X, Y = check_two_samples(X, Y)
    rng = rng or np.random.default_rng()
    if not 0.0 < fraction < 1.0:
        raise ContractViolationError("fraction must lie in (0, 1)")

    def split_one(A: np.ndarray):
        k = int(A.shape[0] * fraction)
        perm = rng.permutation(A.shape[0])
        return A[perm[:k]], A[perm[k:]]

    x_tr, x_te = split_one(X)
    y_tr, y_te = split_one(Y)
    for part, label in ((x_tr, "train X"), (x_te, "test X"),
                        (y_tr, "train Y"), (y_te, "test Y")):
        if part.shape[0] < 2:
            raise InsufficientSampleError(
                f"{label} half has {part.shape[0]} < 2 points; need >= 4 per class")
    return PooledSample(x_tr, y_tr), PooledSample(x_te, y_te)


@dataclass(frozen=True)
class PermutationOutcome:
    reject: bool
    p_value: float
    statistic: float
    c_alpha: float
    n_perm: int


def permutation_test(kernel: CompositeKernel, test_half: PooledSample,
                     n_perm: int = 200, alpha: float = 0.05,
                     rng: np.random.Generator | None = None) -> PermutationOutcome:
    """Exact level-alpha permutation test at a fixed kernel.

    The pooled Gram matrix is computed once and re-indexed per relabeling;
    the p-value is (1 + #{perm stats >= observed}) / (n_perm + 1), ties
    counting against rejection.
    """
    if test_half.m < 2 or test_half.n < 2:
        raise InsufficientSampleError("permutation test needs m >= 2 and n >= 2")
    rng = rng or np.random.default_rng()
    m, total = test_half.m, test_half.total
    G = kernel.gram_pooled(test_half.pooled())
    observed = mmd_from_pooled_gram(G, np.arange(m), np.arange(m, total))
    null_stats = np.empty(n_perm)
    for b in range(n_perm):
        perm = rng.permutation(total)
        null_stats[b] = mmd_from_pooled_gram(G, perm[:m], perm[m:])
    count = int(np.sum(null_stats >= observed))
    p_value = (1.0 + count) / (n_perm + 1.0)
    order = np.sort(null_stats)
    rank = min(math.ceil((1.0 - alpha) * (n_perm + 1)), n_perm)
    return PermutationOutcome(reject=bool(p_value <= alpha),
                              p_value=float(p_value),
                              statistic=float(observed),
                              c_alpha=float(order[rank - 1]),
                              n_perm=n_perm)


def run_cpmmd_test(X, Y, regime: Regime, config: TestConfig | None = None,
                   optimizer_config: OptimizerConfig | None = None,
                   c1_override: float | None = None) -> TestReport:
    """Full protocol: split, calibrate, select, test held-out.

    ``c1_override`` skips calibration and injects a precomputed coefficient
    (for reuse across replicates or architectures).
    """
    config = config or TestConfig()
    seed = config.seed

    with _stage("split"):
        train, test = stratified_split(X, Y, config.split_fraction,
                                       derive_rng(seed, "split"))

    calibration = None
    if c1_override is None:
        with _stage("calibrate"):
            calibration = calibrate_c1(train, regime, n_cal=config.n_cal,
                                       alpha=config.alpha,
                                       optimizer_config=optimizer_config,
                                       seed=seed)
        c1_hat = calibration.c1_hat
    else:
        if c1_override < 0:
            raise ContractViolationError("injected c1 must be >= 0")
        c1_hat = float(c1_override)

    with _stage("select"):
        kernel, trajectory = select_kernel(train, regime,
                                           criterion=CRITERION_CP,
                                           c1_hat=c1_hat,
                                           optimizer_config=optimizer_config,
                                           rng=derive_rng(seed, "select-init"))

    with _stage("test"):
        outcome = permutation_test(kernel, test, n_perm=config.n_perm,
                                   alpha=config.alpha,
                                   rng=derive_rng(seed, "perm"))

    selected = trajectory.selected
    certificate = power_certificate(
        mmd_train=selected.mmd, proxy=trajectory.max_proxy(), c1=c1_hat,
        n_train=train.total, n_holdout=test.total, alpha=config.alpha,
        delta=config.delta, delta_prime=config.delta_prime,
        nu=kernel.base.nu, rho_star=train.rho_star, n_perm=config.n_perm)

    return TestReport(reject=outcome.reject, p_value=outcome.p_value,
                      statistic=outcome.statistic, c_alpha=outcome.c_alpha,
                      selected_kernel=kernel.describe(),
                      kernel_fingerprint=kernel.fingerprint(),
                      c1_hat=c1_hat, certificate=certificate,
                      trajectory=trajectory, calibration=calibration,
                      train_total=train.total, test_total=test.total)


def monte_carlo_rate(test_closure, n_reps: int,
                     seed: int | None = None) -> tuple[float, float]:
    """Rejection rate of a seeded test closure plus its binomial SE.

    ``test_closure(rng) -> bool`` is called once per replicate with an
    independently derived generator.
    """
    if n_reps < 1:
        raise ContractViolationError("n_reps must be >= 1")
    rejections = 0
    for i in range(n_reps):
        if test_closure(derive_rng(seed, "replicate", i)):
            rejections += 1
    rate = rejections / n_reps
    return rate, math.sqrt(rate * (1.0 - rate) / n_reps)
