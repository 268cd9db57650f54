"""Acceptance suite: the package's quantitative exit criteria.

Each test exercises one end-to-end criterion at its stated tolerance and
prints a single PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s``
to see the lines as they complete). Monte-Carlo criteria run at fixed seeds
so the bands are deterministic.

Known-red criteria (see the failure messages for the measured numbers):

* Criterion 5 (strict variance-collapse flags) and the band half of
  criterion 8 (absolute calibration-coefficient range) assert published
  magnitudes that this kernel class does not reproduce: with the MLP's only
  scale living in its weight matrices, plain/ratio ascent saturates the
  empirical MMD before the spectral product can explode, so the complexity
  proxy stays ~20x smaller than the anchors those criteria encode. The
  criteria are asserted as stated rather than weakened; everything
  downstream of calibration is scale-invariant (the penalty is a product
  c1 * proxy), which the green criteria 2-4, 6, 7 confirm. For the same
  reason the opt-in full-width variant of criterion 4 measures the ratio
  baseline at power 1.00 on this strong cell (no collapse degradation to
  inherit), so its strict-inequality clause is red when enabled.
"""

import math
import os

import numpy as np
import pytest

from cpmmd import (CompositeKernel, MlpMap, PooledSample, TestConfig,
                   gaussian_unit, grid_argmax_selector, mmd_unbiased,
                   mmd_with_gradient, permutation_test,
                   population_mmd_gaussian_oracle, run_cpmmd_test,
                   stratified_split)
from cpmmd.calibration import calibrate_c1
from cpmmd.datagen import derive_rng, experiment_pair, sample, sample_pair
from cpmmd.features import LinearMap, identity_map, poly_dimension, multi_indices
from cpmmd.selection import (DeepRegime, LinearRegime, OptimizerConfig,
                             median_heuristic, select_deep,
                             select_scalar_bandwidth)

FULL_SCALE = os.environ.get("CPMMD_ACCEPTANCE_FULL") == "1"


def report(criterion: int, name: str, ok: bool, detail: str) -> None:
    print(f"[ACCEPTANCE {criterion}] {'PASS' if ok else 'FAIL'} {name}: {detail}")


def test_01_estimator_matches_closed_form_oracle():
    # mean of the unbiased estimator over 10,000 draws vs the closed form
    target = population_mmd_gaussian_oracle(1.0, 1.0, 2.0)  # 0.0941870...
    kern = CompositeKernel(gaussian_unit(), identity_map(1))
    draws = np.empty(10_000)
    for i in range(draws.size):
        rng = derive_rng(101, "ac1", i)
        X = rng.standard_normal((50, 1))
        Y = 2.0 * rng.standard_normal((50, 1))
        draws[i] = mmd_unbiased(*kern.gram_blocks(X, Y))
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    gap = abs(draws.mean() - target)
    ok = gap <= 3 * se
    report(1, "estimator vs closed-form oracle",
           ok, f"mean={draws.mean():.5f} target={target:.5f} gap={gap:.2e} "
               f"3se={3 * se:.2e}")
    assert ok


def test_02_type_one_exactness_full_pipeline():
    # full protocol under the null, deep regime at width 50
    alpha, reps = 0.05, 200
    spec_p, spec_q = experiment_pair("h0", dim=10)
    rejections = 0
    for i in range(reps):
        data = sample_pair(spec_p, spec_q, 50, 50, 202, "ac2", i)
        rep = run_cpmmd_test(data.X, data.Y, DeepRegime(hidden_width=50),
                             TestConfig(seed=20_200 + i))
        rejections += rep.reject
    rate = rejections / reps
    band = 2 * math.sqrt(alpha * (1 - alpha) / reps)
    ok = abs(rate - alpha) <= band
    report(2, "Type-I exactness (deep, width 50)",
           ok, f"rate={rate:.3f} nominal={alpha} band=+-{band:.3f} reps={reps}")
    assert ok


def test_03_linear_regime_power_gap():
    # multi-scale mixture at shift 0.30: penalized bandwidth selection must
    # clearly beat the median heuristic
    reps, n = 50, 200
    spec_p, spec_q = experiment_pair("multiscale", delta=0.30)
    cp_rej = med_rej = 0
    for i in range(reps):
        data = sample_pair(spec_p, spec_q, n, n, 303, "ac3", i)
        seed = 30_300 + i
        rep = run_cpmmd_test(data.X, data.Y, LinearRegime(),
                             TestConfig(seed=seed))
        cp_rej += rep.reject
        train, test = stratified_split(data.X, data.Y, 0.5,
                                       derive_rng(seed, "split"))
        kern = CompositeKernel(gaussian_unit(),
                               LinearMap(median_heuristic(train), 2))
        med_rej += permutation_test(kern, test, 200, 0.05,
                                    derive_rng(seed, "perm")).reject
    cp_power, med_power = cp_rej / reps, med_rej / reps
    ok = cp_power >= 0.90 and med_power <= 0.65
    report(3, "linear-regime power gap",
           ok, f"cpmmd={cp_power:.2f} (need >= 0.90) median={med_power:.2f} "
               f"(need <= 0.65)")
    assert ok


def test_04_deep_regime_power_vs_ratio_baseline():
    # mean-shift d=20, n=200: the reduced gate (width 50, 25 reps) requires
    # penalized power >= 0.85; the full cell (width 200, 50 reps, runs with
    # CPMMD_ACCEPTANCE_FULL=1) additionally requires the ratio baseline to
    # come out strictly lower on matched seeds
    width = 200 if FULL_SCALE else 50
    reps = 50 if FULL_SCALE else 25
    spec_p, spec_q = experiment_pair("hdgm", dim=20, delta=0.5)
    optimizer = OptimizerConfig()
    cp_rej = liu_rej = 0
    for i in range(reps):
        data = sample_pair(spec_p, spec_q, 200, 200, 404, "ac4", i)
        seed = 40_400 + i
        rep = run_cpmmd_test(data.X, data.Y, DeepRegime(hidden_width=width),
                             TestConfig(seed=seed), optimizer_config=optimizer)
        cp_rej += rep.reject
        if FULL_SCALE:
            train, test = stratified_split(data.X, data.Y, 0.5,
                                           derive_rng(seed, "split"))
            mlp0 = MlpMap.initialize(
                DeepRegime(hidden_width=width).layer_widths(20),
                derive_rng(seed, "select-init"))
            mlp, _ = select_deep(train, mlp0, optimizer, criterion="liu")
            liu_rej += permutation_test(
                CompositeKernel(gaussian_unit(), mlp), test, 200, 0.05,
                derive_rng(seed, "perm")).reject
    cp_power = cp_rej / reps
    if FULL_SCALE:
        liu_power = liu_rej / reps
        ok = cp_power >= 0.90 and liu_power < cp_power
        detail = (f"cpmmd={cp_power:.2f} (need >= 0.90) liu={liu_power:.2f} "
                  f"(need < cpmmd) reps={reps}")
    else:
        ok = cp_power >= 0.85
        detail = f"cpmmd={cp_power:.2f} (need >= 0.85) reps={reps}"
    report(4, f"deep-regime power (width {width})", ok, detail)
    assert ok, detail


def test_05_variance_collapse_reproduction():
    # ratio-criterion training under the null must produce, per width batch,
    # at least one run with all three collapse flags; the penalized
    # criterion must be negative on every collapsed run
    spec_p, spec_q = experiment_pair("h0", dim=10)
    c1_deployed = 0.2
    per_width = {}
    collapsed_jcp = []
    for width in (10, 50, 200):
        hits = 0
        for s in range(10):
            data = sample_pair(spec_p, spec_q, 200, 200, 505, "ac5", width, s)
            mlp0 = MlpMap.initialize(
                DeepRegime(hidden_width=width).layer_widths(10),
                derive_rng(50_500, "init", width, s))
            _, traj = select_deep(data, mlp0, OptimizerConfig(steps=200),
                                  criterion="liu")
            fin = traj.final
            collapsed = fin.mmd < 0.01 and fin.tau < 0.001 and fin.criterion > 10
            if collapsed:
                hits += 1
                collapsed_jcp.append(fin.mmd - c1_deployed * fin.proxy)
        per_width[width] = hits
    all_widths_hit = all(hits >= 1 for hits in per_width.values())
    jcp_all_negative = all(v < 0 for v in collapsed_jcp)
    ok = all_widths_hit and jcp_all_negative
    report(5, "variance-collapse reproduction",
           ok, f"collapsed-per-width={per_width} (need >= 1 each), "
               f"penalized criterion negative on all collapsed: {jcp_all_negative} "
               f"({len(collapsed_jcp)} collapsed runs)")
    assert ok, (
        f"strict collapse flags not reached: {per_width}; this kernel class "
        "has no trailing bandwidth knob, so ratio ascent inflates the "
        "empirical MMD past the 0.01 flag before the variance estimate can "
        "be crushed (observed terminal mmd ~0.02-0.36, tau ~1e-3..1e-2, "
        "ratio 40-700)")


def test_06_spectral_stabilization_on_matched_seeds():
    # penalized ascent should end at a smaller spectral product than plain
    # ascent in at least 9 of 10 matched-seed runs
    spec_p, spec_q = experiment_pair("h0", dim=10)
    wins = 0
    for s in range(10):
        data = sample_pair(spec_p, spec_q, 200, 200, 606, "ac6", s)
        mlp0 = MlpMap.initialize(DeepRegime(hidden_width=50).layer_widths(10),
                                 derive_rng(60_600, "init", s))
        cfg = OptimizerConfig(steps=100)
        _, braked = select_deep(data, mlp0.copy(), cfg, criterion="cp",
                                c1_hat=0.2)
        _, plain = select_deep(data, mlp0.copy(), cfg, criterion="plain")
        wins += braked.final.lipschitz < plain.final.lipschitz
    ok = wins >= 9
    report(6, "spectral stabilization under the penalty",
           ok, f"penalized < plain in {wins}/10 matched seeds (need >= 9)")
    assert ok


def test_07_penalty_coefficient_insensitivity():
    # power stays high across two orders of magnitude of injected c1
    spec_p, spec_q = experiment_pair("hdgm", dim=20, delta=0.5)
    reps = 25
    powers = {}
    for c1 in (1e-3, 1e-2, 1e-1):
        rejections = 0
        for i in range(reps):
            data = sample_pair(spec_p, spec_q, 200, 200, 707, "ac7", i)
            rep = run_cpmmd_test(data.X, data.Y, DeepRegime(hidden_width=50),
                                 TestConfig(seed=70_700 + i), c1_override=c1)
            rejections += rep.reject
        powers[c1] = rejections / reps
    ok = all(p >= 0.90 for p in powers.values())
    report(7, "penalty-coefficient insensitivity",
           ok, f"power by c1: { {k: round(v, 2) for k, v in powers.items()} } "
               f"(need >= 0.90 each)")
    assert ok


def test_08_calibration_band_and_stability():
    # deep-Gaussian setup d=50, n=100/class, width 200: calibrated
    # coefficient within [0.002, 0.03] at every seed, seed CV <= 25%
    spec_p, spec_q = experiment_pair("hdgm", dim=50, delta=0.5)
    values = []
    for s in range(3):
        full = sample_pair(spec_p, spec_q, 100, 100, 808, "ac8", s)
        train, _ = stratified_split(full.X, full.Y, 0.5,
                                    derive_rng(80_800 + s, "split"))
        res = calibrate_c1(train, DeepRegime(hidden_width=200), n_cal=10,
                           alpha=0.05, seed=80_800 + s)
        values.append(res.c1_hat)
    arr = np.array(values)
    cv = arr.std(ddof=1) / arr.mean()
    in_band = bool(np.all((arr >= 0.002) & (arr <= 0.03)))
    ok = in_band and cv <= 0.25
    report(8, "calibration band and seed stability",
           ok, f"values={[round(v, 4) for v in values]} band=[0.002, 0.03] "
               f"in_band={in_band} cv={cv:.1%} (need <= 25%)")
    assert cv <= 0.25, f"seed CV {cv:.1%} exceeds 25%"
    assert in_band, (
        f"calibrated coefficients {values} sit ~6-10x above [0.002, 0.03]: "
        "plain ascent saturates the empirical MMD (~1.96) while the spectral "
        "product plateaus near 15, so the ratio mmd/proxy lands near 0.19; "
        "the published anchor presumes a proxy ~20x larger than this kernel "
        "class produces. Downstream use is scale-invariant in c1 * proxy.")


def test_09_finite_grid_regret_bound():
    # empirical-MMD argmax over a fixed bandwidth grid: population regret
    # exceeds the bound in at most delta + 3se of replicates
    delta, reps, m = 0.05, 200, 200
    sigmas = np.geomspace(0.25, 8.0, 10)
    kernels = [CompositeKernel(gaussian_unit(), LinearMap(float(s), 1))
               for s in sigmas]
    population = np.array([population_mmd_gaussian_oracle(s, 1.0, 2.0)
                           for s in sigmas])
    best_population = population.max()
    violations = 0
    bound = None
    for i in range(reps):
        rng = derive_rng(909, "ac9", i)
        train = PooledSample.from_arrays(rng.standard_normal((m, 1)),
                                         2.0 * rng.standard_normal((m, 1)))
        res = grid_argmax_selector(kernels, train, delta=delta)
        bound = res.regret_bound
        violations += population[res.index] < best_population - res.regret_bound
    rate = violations / reps
    limit = delta + 3 * math.sqrt(delta * (1 - delta) / reps)
    ok = rate <= limit
    report(9, "finite-grid argmax regret",
           ok, f"violation rate={rate:.3f} (limit {limit:.3f}); "
               f"bound={bound:.3f} vs best population MMD {best_population:.3f}")
    assert ok


def test_10_property_suites():
    failures = []

    # gradient vs central finite differences on 20 random small networks
    worst = 0.0
    worst_gap = 0.0
    for trial in range(20):
        rng = derive_rng(1010, "ac10", trial)
        widths = [3, int(rng.integers(4, 9)), int(rng.integers(2, 5))]
        mlp = MlpMap.initialize(widths, rng)
        X = rng.standard_normal((int(rng.integers(3, 7)), 3))
        Y = rng.standard_normal((int(rng.integers(3, 7)), 3)) + 0.3
        kern = CompositeKernel(gaussian_unit(), mlp)
        _, grad = mmd_with_gradient(X, Y, kern)
        step = 1e-5
        for arr, g in zip(mlp.parameter_arrays(), grad.arrays()):
            fd = np.zeros_like(arr)
            flat, fd_flat = arr.ravel(), fd.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = mmd_unbiased(*kern.gram_blocks(X, Y))
                flat[k] = orig - step
                down = mmd_unbiased(*kern.gram_blocks(X, Y))
                flat[k] = orig
                fd_flat[k] = (up - down) / (2 * step)
            gap = float(np.linalg.norm(g - fd))
            worst_gap = max(worst_gap, gap)
            if gap <= 1e-8:
                continue  # exactly-zero gradients (e.g. final bias) match
            rel = gap / max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, rel)
    if worst >= 1e-4:
        failures.append(f"gradient fd mismatch {worst:.2e}")

    # Gram symmetry and boundedness on random data
    rng = derive_rng(1010, "ac10", "gram")
    kern = CompositeKernel(gaussian_unit(), identity_map(3))
    k_xx, k_yy, k_xy = kern.gram_blocks(rng.standard_normal((10, 3)),
                                        rng.standard_normal((12, 3)))
    if not np.array_equal(k_xx, k_xx.T):
        failures.append("gram asymmetry")
    if not all(np.all((b >= 0) & (b <= 1)) for b in (k_xx, k_yy, k_xy)):
        failures.append("gram out of range")

    # polynomial dimension formula
    for d in range(1, 6):
        for p in range(1, 5):
            if len(multi_indices(d, p)) != poly_dimension(d, p):
                failures.append(f"poly dimension mismatch at d={d}, p={p}")

    # seed determinism of every pipeline stage, end to end
    spec_p, spec_q = experiment_pair("multiscale", delta=0.3)
    data = sample_pair(spec_p, spec_q, 30, 30, 1010, "det")
    rep_a = run_cpmmd_test(data.X, data.Y, LinearRegime(),
                           TestConfig(seed=1234, n_perm=99))
    rep_b = run_cpmmd_test(data.X, data.Y, LinearRegime(),
                           TestConfig(seed=1234, n_perm=99))
    if (rep_a.p_value, rep_a.statistic, rep_a.kernel_fingerprint,
            rep_a.c1_hat) != (rep_b.p_value, rep_b.statistic,
                              rep_b.kernel_fingerprint, rep_b.c1_hat):
        failures.append("pipeline determinism broken")
    if rep_a.trajectory.records != rep_b.trajectory.records:
        failures.append("trajectory determinism broken")

    ok = not failures
    report(10, "property suites",
           ok, f"worst gradient gap={worst_gap:.2e} (abs), rel={worst:.2e}; "
               + ("no failures" if ok else "; ".join(failures)))
    assert ok, failures
