"""Scikit-learn-style facade over the two-sample test pipeline.

The estimator follows sklearn conventions (constructor stores parameters
verbatim, ``fit`` does the work, learned quantities get trailing
underscores, ``get_params``/``set_params`` come from ``BaseEstimator``), so
the test composes with the wider ecosystem: grid searches over its options,
cloning, pipelines that prepare the two samples.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .errors import ContractViolationError
from .pipeline import TestConfig, run_cpmmd_test
from .selection import (DeepRegime, LinearRegime, OptimizerConfig,
                        PolynomialRegime)
from .validation import check_two_samples


def parse_regime(token: str, degree: int = 4, hidden_width: int = 200,
                 feature_dim: int = 10, sigma_range=None):
    """Map a regime token ('linear', 'poly:p', 'deep') to a regime object."""
    if token == "linear":
        return LinearRegime(sigma_range=sigma_range)
    if token == "deep":
        return DeepRegime(hidden_width=hidden_width, feature_dim=feature_dim)
    if token.startswith("poly"):
        if ":" in token:
            try:
                degree = int(token.split(":", 1)[1])
            except ValueError as exc:
                raise ContractViolationError(f"bad polynomial degree in {token!r}") from exc
        return PolynomialRegime(degree=degree, sigma_range=sigma_range)
    raise ContractViolationError(f"unknown regime {token!r}")


class CPMMDTest(BaseEstimator):
    """Two-sample test with complexity-penalized kernel selection.

    Parameters mirror the pipeline configuration; ``fit(X, Y)`` runs the
    full protocol (stratified split, penalty calibration, penalized kernel
    selection, held-out permutation test) and exposes the outcome as fitted
    attributes (``reject_``, ``p_value_``, ``statistic_``, ``c1_hat_``,
    ``report_``).

    Parameters
    ----------
    regime : 'linear' | 'poly' | 'poly:p' | 'deep'
        Kernel-selection class.
    degree : polynomial degree when regime='poly' without an explicit ':p'.
    hidden_width, feature_dim : MLP architecture for the deep regime
        (two hidden layers of ``hidden_width``, output ``feature_dim``).
    alpha, n_perm, n_cal, split_fraction : test configuration.
    steps, learning_rate, clip_norm : deep-regime optimizer settings.
    sigma_range : optional (low, high) bandwidth bounds for scalar regimes;
        defaults to a median-distance-anchored range.
    c1 : optional precomputed penalty coefficient; skips calibration.
    seed : master seed; every internal stream derives from it.
    """

    def __init__(self, regime: str = "linear", degree: int = 4,
                 hidden_width: int = 200, feature_dim: int = 10,
                 alpha: float = 0.05, n_perm: int = 200, n_cal: int = 10,
                 split_fraction: float = 0.5, steps: int = 100,
                 learning_rate: float = 0.005, clip_norm: float = 5.0,
                 sigma_range=None, c1: float | None = None,
                 seed: int | None = None):
        self.regime = regime
        self.degree = degree
        self.hidden_width = hidden_width
        self.feature_dim = feature_dim
        self.alpha = alpha
        self.n_perm = n_perm
        self.n_cal = n_cal
        self.split_fraction = split_fraction
        self.steps = steps
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.sigma_range = sigma_range
        self.c1 = c1
        self.seed = seed

    def fit(self, X, Y):
        """Run the two-sample test on samples X ~ P and Y ~ Q."""
        X, Y = check_two_samples(X, Y, min_rows=4)
        regime = parse_regime(self.regime, degree=self.degree,
                              hidden_width=self.hidden_width,
                              feature_dim=self.feature_dim,
                              sigma_range=self.sigma_range)
        config = TestConfig(alpha=self.alpha, n_perm=self.n_perm,
                            n_cal=self.n_cal,
                            split_fraction=self.split_fraction,
                            seed=self.seed)
        optimizer = OptimizerConfig(steps=self.steps,
                                    learning_rate=self.learning_rate,
                                    clip_norm=self.clip_norm)
        report = run_cpmmd_test(X, Y, regime, config,
                                optimizer_config=optimizer,
                                c1_override=self.c1)
        self.n_features_in_ = X.shape[1]
        self.report_ = report
        self.reject_ = report.reject
        self.p_value_ = report.p_value
        self.statistic_ = report.statistic
        self.c_alpha_ = report.c_alpha
        self.c1_hat_ = report.c1_hat
        self.selected_kernel_ = report.selected_kernel
        return self
