"""Seeded synthetic generators and CSV ingestion.

Reproducibility rule: every random stream is derived as

    SeedSequence((master_seed, key_1, key_2, ...))

where string keys are mapped through crc32. Replicates, permutations and
initializations each get their own key tuple, so runs are reproducible and
order-independent under any parallel schedule.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, CsvParseError
from .mmd import PooledSample

GAUSSIAN_MEAN_SHIFT = "gaussian_mean_shift"
MULTISCALE_MIXTURE_2D = "multiscale_mixture_2d"
SCALED_STUDENT_T = "scaled_student_t"
GAUSSIAN_SCALE = "gaussian_scale"


def _key_to_int(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    raise ContractViolationError(f"rng keys must be int or str, got {type(key)!r}")


def derive_rng(master_seed: int | None, *keys) -> np.random.Generator:
    """Independent generator for (master_seed, *keys); None master = fresh entropy."""
    if master_seed is None:
        return np.random.default_rng()
    entropy = (int(master_seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(
        _key_to_int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class DistributionSpec:
    """One side of a synthetic two-sample experiment."""

    family: str
    role: str = "p"          # "p" or "q"; metadata only
    dim: int = 1
    delta: float = 0.0       # mean shift (per family's convention)
    df: float = 0.0          # Student-t degrees of freedom
    scale: float = 1.0       # Gaussian scale
    mode_var: float = 0.01   # mixture per-mode variance


def gaussian_mean_shift(dim: int, delta: float, role: str = "q") -> DistributionSpec:
    return DistributionSpec(GAUSSIAN_MEAN_SHIFT, role=role, dim=dim, delta=delta)


def multiscale_mixture(delta: float, role: str = "q",
                       mode_var: float = 0.01) -> DistributionSpec:
    return DistributionSpec(MULTISCALE_MIXTURE_2D, role=role, dim=2,
                            delta=delta, mode_var=mode_var)


def scaled_student_t(dim: int, df: float, role: str = "q") -> DistributionSpec:
    if df <= 2:
        raise ContractViolationError("scaled Student-t requires df > 2")
    return DistributionSpec(SCALED_STUDENT_T, role=role, dim=dim, df=df)


def gaussian_scale(scale: float, dim: int = 1, role: str = "p") -> DistributionSpec:
    return DistributionSpec(GAUSSIAN_SCALE, role=role, dim=dim, scale=scale)


def sample(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points from the spec; deterministic given the generator state."""
    if n < 1:
        raise ContractViolationError("n must be >= 1")
    if spec.family == GAUSSIAN_MEAN_SHIFT:
        return rng.standard_normal((n, spec.dim)) + spec.delta
    if spec.family == GAUSSIAN_SCALE:
        return spec.scale * rng.standard_normal((n, spec.dim))
    if spec.family == MULTISCALE_MIXTURE_2D:
        pts = np.sqrt(spec.mode_var) * rng.standard_normal((n, 2))
        right_mode = rng.random(n) < 0.5
        pts[right_mode, 0] += 3.0
        pts[:, 0] += spec.delta
        return pts
    if spec.family == SCALED_STUDENT_T:
        if spec.df <= 2:
            raise ContractViolationError("scaled Student-t requires df > 2")
        g = rng.standard_normal((n, spec.dim))
        chi2 = rng.chisquare(spec.df, size=n)
        t = g / np.sqrt(chi2 / spec.df)[:, None]  # shared denominator per point
        return np.sqrt((spec.df - 2.0) / spec.df) * t
    raise ContractViolationError(f"unknown family {spec.family!r}")


def experiment_pair(name: str, **params) -> tuple[DistributionSpec, DistributionSpec]:
    """The (P, Q) spec pairs behind the benchmark experiments.

    multiscale: 2D two-mode mixture vs. the same mixture shifted by delta
    kurtosis:   standard Gaussian vs. covariance-matched Student-t (df)
    hdgm:       standard Gaussian vs. mean shift delta in d dimensions
    gaussian_scale: centered univariate Gaussians with scales s_p, s_q
    """
    if name == "multiscale":
        return (multiscale_mixture(0.0, role="p", mode_var=params.get("mode_var", 0.01)),
                multiscale_mixture(params["delta"], role="q",
                                   mode_var=params.get("mode_var", 0.01)))
    if name == "kurtosis":
        dim = params.get("dim", 10)
        return (gaussian_mean_shift(dim, 0.0, role="p"),
                scaled_student_t(dim, params["df"], role="q"))
    if name == "hdgm":
        return (gaussian_mean_shift(params["dim"], 0.0, role="p"),
                gaussian_mean_shift(params["dim"], params["delta"], role="q"))
    if name == "gaussian_scale":
        return (gaussian_scale(params.get("s_p", 1.0), role="p"),
                gaussian_scale(params.get("s_q", 2.0), role="q"))
    if name == "h0":
        dim = params.get("dim", 10)
        return (gaussian_mean_shift(dim, 0.0, role="p"),
                gaussian_mean_shift(dim, 0.0, role="q"))
    raise ContractViolationError(f"unknown experiment {name!r}")


def sample_pair(spec_p: DistributionSpec, spec_q: DistributionSpec,
                n_p: int, n_q: int, master_seed: int | None,
                *keys) -> PooledSample:
    """Draw both sides under distinct derived streams."""
    X = sample(spec_p, n_p, derive_rng(master_seed, *keys, "stream-p"))
    Y = sample(spec_q, n_q, derive_rng(master_seed, *keys, "stream-q"))
    return PooledSample.from_arrays(X, Y)


# ---------------------------------------------------------------------------
# CSV ingestion (comma-separated, period decimal, UTF-8, optional header)


def _parse_csv_matrix(path: str) -> np.ndarray:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise CsvParseError(f"cannot open file: {exc}", path=path) from exc
    with fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise CsvParseError("file contains no data rows", path=path)

    def try_parse(row):
        out = []
        for j, cell in enumerate(row):
            try:
                out.append(float(cell))
            except ValueError:
                return None, j
        return out, None

    first, bad_col = try_parse(rows[0])
    start = 0
    if first is None:
        start = 1  # non-numeric first row: header
        if len(rows) == 1:
            raise CsvParseError("only a header row present", path=path, row=0)
    width = len(rows[start])
    data = []
    for i in range(start, len(rows)):
        if len(rows[i]) != width:
            raise CsvParseError(
                f"ragged row: expected {width} columns, got {len(rows[i])}",
                path=path, row=i)
        parsed, bad_col = try_parse(rows[i])
        if parsed is None:
            raise CsvParseError(
                f"non-numeric cell {rows[i][bad_col]!r}", path=path, row=i,
                column=bad_col)
        data.append(parsed)
    return np.asarray(data, dtype=np.float64)


def load_csv_pair(path_x: str, path_y: str) -> PooledSample:
    """Read the two sample files; rows are points, columns features."""
    X = _parse_csv_matrix(path_x)
    Y = _parse_csv_matrix(path_y)
    if X.shape[1] != Y.shape[1]:
        raise CsvParseError(
            f"column count mismatch between files: {X.shape[1]} vs {Y.shape[1]}",
            path=path_y)
    return PooledSample.from_arrays(X, Y)


def save_csv(path: str, matrix: np.ndarray, header: list[str] | None = None) -> None:
    """Write a matrix in the package dialect at full (round-trip) precision."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in np.atleast_2d(matrix):
            writer.writerow([repr(float(v)) for v in row])
