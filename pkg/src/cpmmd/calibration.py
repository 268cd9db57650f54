"""Null-permutation calibration of the penalty coefficient.

Under the null, the ratio of the plain-maximized MMD to the complexity proxy
at the maximizer measures how much empirical signal pure optimization noise
can buy per unit of complexity. The penalty coefficient is the (1 - alpha)
quantile of that ratio over permuted relabelings of the training half,
formally the r-th order statistic with r = ceil((1 - alpha) (n_cal + 1));
when r exceeds n_cal (the default alpha = 0.05, n_cal = 10 case) the maximum
is used as the conservative stand-in.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .datagen import derive_rng
from .errors import DegenerateDataError, InsufficientSampleError
from .mmd import PooledSample
from .selection import (CRITERION_PLAIN, OptimizerConfig, Regime,
                        select_kernel)

DEGENERATE_RATIO_FLOOR = 1e-6


@dataclass(frozen=True)
class CalibrationResult:
    """Calibrated coefficient plus the ratio samples that produced it."""

    c1_hat: float
    ratios: tuple[float, ...]
    n_cal: int
    alpha: float
    convention_used: str          # "quantile" or "max"
    degenerate: bool = False      # wide-architecture breakdown flag
    note: str = ""

    def __post_init__(self):
        if self.c1_hat < 0:
            raise DegenerateDataError("calibrated coefficient must be >= 0")


def quantile_order_statistic(values: list[float], alpha: float) -> tuple[float, str]:
    """(1 - alpha)-quantile by order statistic, max convention when r > n."""
    n = len(values)
    ordered = sorted(values)
    r = math.ceil((1.0 - alpha) * (n + 1))
    if r > n:
        return ordered[-1], "max"
    return ordered[r - 1], "quantile"


def permute_resplit(train: PooledSample, rng: np.random.Generator) -> PooledSample:
    """Uniformly relabel the pooled training half at the original m:n ratio."""
    pooled = train.pooled()
    perm = rng.permutation(train.total)
    return PooledSample(pooled[perm[:train.m]], pooled[perm[train.m:]])


def calibrate_c1(train: PooledSample, regime: Regime,
                 n_cal: int = 10, alpha: float = 0.05,
                 optimizer_config: OptimizerConfig | None = None,
                 seed: int | None = None) -> CalibrationResult:
    """Estimate the penalty coefficient from null permutations of the train half.

    Each permutation is re-split at the original ratio, plain-MMD maximized
    with the same optimizer settings as deployment (zero penalty), and the
    ratio mmd/proxy at the maximizer recorded. Negative ratios are retained;
    the max convention keeps them harmless unless every run is negative, in
    which case the coefficient is floored at 0 with a warning.
    """
    if n_cal < 1:
        raise InsufficientSampleError("n_cal must be >= 1")
    if train.m < 2 or train.n < 2:
        raise InsufficientSampleError("calibration needs m >= 2 and n >= 2")

    ratios: list[float] = []
    for pi in range(n_cal):
        null_sample = permute_resplit(train, derive_rng(seed, "calibration-perm", pi))
        _, traj = select_kernel(
            null_sample, regime, criterion=CRITERION_PLAIN, c1_hat=0.0,
            optimizer_config=optimizer_config,
            rng=derive_rng(seed, "calibration-init", pi))
        rec = traj.selected
        if rec.proxy <= 0.0:
            raise DegenerateDataError(
                f"degenerate proxy at calibration permutation {pi}: cannot form ratio")
        ratios.append(rec.mmd / rec.proxy)

    c1_hat, convention = quantile_order_statistic(ratios, alpha)
    degenerate = False
    note = ""
    # breakdown indicator: ratios collapsed to ~0 in magnitude (proxy blowup);
    # honestly negative ratios are a different, harmless phenomenon
    small = sum(1 for r in ratios if abs(r) < DEGENERATE_RATIO_FLOOR)
    if small > n_cal / 2:
        degenerate = True
        note = ("more than half the calibration ratios are below "
                f"{DEGENERATE_RATIO_FLOOR:g}; calibrate at the largest "
                "well-behaved width and reuse that coefficient")
        warnings.warn("degenerate calibration: " + note, RuntimeWarning,
                      stacklevel=2)
    if c1_hat < 0.0:
        note = (note + "; " if note else "") + \
            "all calibration ratios negative; coefficient floored at 0"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
        c1_hat = 0.0
    return CalibrationResult(c1_hat=float(c1_hat), ratios=tuple(ratios),
                             n_cal=n_cal, alpha=alpha,
                             convention_used=convention,
                             degenerate=degenerate, note=note)
