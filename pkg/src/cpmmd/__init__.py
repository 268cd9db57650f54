"""Two-sample testing with complexity-penalized kernel selection.

Selection maximizes the unbiased MMD minus a calibrated complexity penalty
over a kernel class (bandwidths, polynomial-feature bandwidths, or deep MLP
features); the selected kernel is then tested on a held-out half with an
exact permutation test.
"""

from .calibration import CalibrationResult, calibrate_c1
from .criterion import (Certificate, PowerCertificate, UciConstants,
                        complexity_proxy, j_cp, power_certificate,
                        trajectory_certificate, uci_bound)
from .datagen import (DistributionSpec, derive_rng, experiment_pair,
                      load_csv_pair, sample, sample_pair, save_csv)
from .errors import (ContractViolationError, CpmmdError, CsvParseError,
                     DegenerateDataError, InsufficientSampleError,
                     NumericalAbortError, UnsupportedConfigurationError)
from .estimator import CPMMDTest, parse_regime
from .features import (LinearMap, MlpGradient, MlpMap, PolynomialMap,
                       lipschitz_constant, poly_dimension, spectral_norm)
from .kernels import (CompositeKernel, KernelSpec, constant, eval_base,
                      gaussian_unit, laplacian_unit)
from .mmd import (LiuRatio, PooledSample, liu_ratio, liu_with_gradient,
                  mmd_unbiased, mmd_with_gradient,
                  population_mmd_gaussian_oracle)
from .pipeline import (TestConfig, TestReport, monte_carlo_rate,
                       permutation_test, run_cpmmd_test, stratified_split)
from .selection import (DeepRegime, GridArgmaxResult, LinearRegime,
                        OptimizerConfig, PolynomialRegime, Trajectory,
                        bandwidth_grid_kernels, grid_argmax_selector,
                        median_heuristic, select_deep,
                        select_scalar_bandwidth)

__version__ = "0.1.0"

__all__ = [
    "CPMMDTest",
    "CalibrationResult",
    "Certificate",
    "CompositeKernel",
    "ContractViolationError",
    "CpmmdError",
    "CsvParseError",
    "DeepRegime",
    "DegenerateDataError",
    "DistributionSpec",
    "GridArgmaxResult",
    "InsufficientSampleError",
    "KernelSpec",
    "LinearMap",
    "LinearRegime",
    "LiuRatio",
    "MlpGradient",
    "MlpMap",
    "NumericalAbortError",
    "OptimizerConfig",
    "PolynomialMap",
    "PolynomialRegime",
    "PooledSample",
    "PowerCertificate",
    "TestConfig",
    "TestReport",
    "Trajectory",
    "UciConstants",
    "UnsupportedConfigurationError",
    "bandwidth_grid_kernels",
    "calibrate_c1",
    "complexity_proxy",
    "constant",
    "derive_rng",
    "eval_base",
    "experiment_pair",
    "gaussian_unit",
    "grid_argmax_selector",
    "j_cp",
    "laplacian_unit",
    "lipschitz_constant",
    "liu_ratio",
    "liu_with_gradient",
    "load_csv_pair",
    "median_heuristic",
    "mmd_unbiased",
    "mmd_with_gradient",
    "monte_carlo_rate",
    "parse_regime",
    "permutation_test",
    "poly_dimension",
    "population_mmd_gaussian_oracle",
    "power_certificate",
    "run_cpmmd_test",
    "sample",
    "sample_pair",
    "save_csv",
    "select_deep",
    "select_scalar_bandwidth",
    "spectral_norm",
    "stratified_split",
    "trajectory_certificate",
    "uci_bound",
]
