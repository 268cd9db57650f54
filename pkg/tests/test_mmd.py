"""MMD estimator, the ratio statistic, the population oracle, and gradients."""

import math

import numpy as np
import pytest

from cpmmd import (CompositeKernel, ContractViolationError,
                   InsufficientSampleError, PooledSample,
                   UnsupportedConfigurationError, constant, gaussian_unit,
                   laplacian_unit, liu_ratio, liu_with_gradient, mmd_unbiased,
                   mmd_with_gradient, population_mmd_gaussian_oracle)
from cpmmd.features import MlpMap, identity_map
from cpmmd.mmd import mmd_from_pooled_gram

ORACLE_1_1_2 = 0.09418702159523296   # 3^-1/2 + 9^-1/2 - 2*6^-1/2
ORACLE_1_10_20 = 0.016514413930984434


class TestPooledSample:
    def test_balanced_rho(self):
        s = PooledSample.from_arrays(np.zeros((5, 2)), np.zeros((5, 2)))
        assert s.rho_star == 2.0

    def test_unbalanced_rho(self):
        s = PooledSample.from_arrays(np.zeros((2, 1)), np.zeros((6, 1)))
        assert s.rho_star == 4.0
        assert s.rho_star > 2.0

    def test_frobenius_square_identity(self):
        rng = np.random.default_rng(0)
        X, Y = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
        s = PooledSample.from_arrays(X, Y)
        assert s.frobenius_d ** 2 == pytest.approx(
            float(np.sum(X ** 2) + np.sum(Y ** 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            PooledSample.from_arrays(np.zeros((3, 2)), np.zeros((3, 3)))


class TestMmdUnbiased:
    def test_constant_kernel_cancels(self):
        kern = CompositeKernel(constant(0.7), identity_map(1))
        blocks = kern.gram_blocks(np.zeros((4, 1)), np.ones((3, 1)))
        assert mmd_unbiased(*blocks) == pytest.approx(0.0, abs=1e-12)

    def test_hand_linear_kernel_blocks(self):
        # k(x, y) = x*y on X = {0, 2}, Y = {1, 1}: brute-force sum gives -1
        k_xx = np.array([[0.0, 0.0], [0.0, 4.0]])
        k_yy = np.ones((2, 2))
        k_xy = np.array([[0.0, 0.0], [2.0, 2.0]])
        assert mmd_unbiased(k_xx, k_yy, k_xy) == pytest.approx(-1.0)

    def test_insufficient(self):
        with pytest.raises(InsufficientSampleError):
            mmd_unbiased(np.ones((1, 1)), np.ones((3, 3)), np.ones((1, 3)))

    def test_exchange_symmetry(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((6, 2)), rng.standard_normal((5, 2))
        kern = CompositeKernel(gaussian_unit(), identity_map(2))
        v1 = mmd_unbiased(*kern.gram_blocks(X, Y))
        perm = rng.permutation(6)
        v2 = mmd_unbiased(*kern.gram_blocks(X[perm], Y))
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_swap_symmetry_balanced(self):
        rng = np.random.default_rng(2)
        X, Y = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
        kern = CompositeKernel(laplacian_unit(), identity_map(2))
        assert mmd_unbiased(*kern.gram_blocks(X, Y)) == pytest.approx(
            mmd_unbiased(*kern.gram_blocks(Y, X)), rel=1e-12)

    def test_null_mean_near_zero(self):
        # degenerate under the null: the mean over draws sits at 0
        rng = np.random.default_rng(3)
        kern = CompositeKernel(gaussian_unit(), identity_map(1))
        draws = np.empty(2000)
        for i in range(2000):
            X = rng.standard_normal((20, 1))
            Y = rng.standard_normal((20, 1))
            draws[i] = mmd_unbiased(*kern.gram_blocks(X, Y))
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean()) <= 3 * se

    def test_pooled_gram_reindexing(self):
        rng = np.random.default_rng(4)
        X, Y = rng.standard_normal((4, 2)), rng.standard_normal((6, 2))
        kern = CompositeKernel(gaussian_unit(), identity_map(2))
        direct = mmd_unbiased(*kern.gram_blocks(X, Y))
        G = kern.gram_pooled(np.vstack([X, Y]))
        assert mmd_from_pooled_gram(G, np.arange(4), np.arange(4, 10)) == \
            pytest.approx(direct, rel=1e-12)


class TestGaussianOracle:
    def test_reference_value(self):
        assert population_mmd_gaussian_oracle(1.0, 1.0, 2.0) == pytest.approx(
            ORACLE_1_1_2, abs=1e-12)

    def test_equal_scales_vanish(self):
        assert population_mmd_gaussian_oracle(2.0, 1.3, 1.3) == 0.0

    def test_decay_with_dilation(self):
        # scaling both distributions by 10 shrinks the fixed-bandwidth MMD
        value = population_mmd_gaussian_oracle(1.0, 10.0, 20.0)
        assert value == pytest.approx(ORACLE_1_10_20, abs=1e-12)
        assert value < ORACLE_1_1_2 / 5

    def test_invalid_arguments(self):
        with pytest.raises(ContractViolationError):
            population_mmd_gaussian_oracle(0.0, 1.0, 2.0)


class TestLiuRatio:
    def test_constant_kernel(self):
        kern = CompositeKernel(constant(0.3), identity_map(1))
        blocks = kern.gram_blocks(np.zeros((4, 1)), np.ones((4, 1)))
        stat = liu_ratio(*blocks)
        assert stat.mmd == 0.0
        assert stat.j_liu == 0.0
        assert stat.tau == pytest.approx(1e-4)

    def test_requires_balance(self):
        kern = CompositeKernel(gaussian_unit(), identity_map(1))
        blocks = kern.gram_blocks(np.zeros((3, 1)), np.ones((4, 1)))
        with pytest.raises(UnsupportedConfigurationError):
            liu_ratio(*blocks)

    def test_hand_two_point_blocks(self):
        # brute-force expansion of the H1 variance on 2+2 points
        k_xx = np.array([[1.0, 0.6], [0.6, 1.0]])
        k_yy = np.array([[1.0, 0.3], [0.3, 1.0]])
        k_xy = np.array([[0.5, 0.2], [0.4, 0.1]])
        stat = liu_ratio(k_xx, k_yy, k_xy)
        # H = [[1.0, 0.3], [0.3, 1.8]]; var = (4/8)(1.3^2+2.1^2) - (4/16)3.4^2
        assert stat.mmd == pytest.approx(0.3)
        assert stat.tau == pytest.approx(math.sqrt(0.16 + 1e-8))
        assert stat.j_liu == pytest.approx(math.sqrt(2) * 0.3 / stat.tau)

    def test_floor_reproduces_ratio_explosion(self):
        # uniform blocks give exactly zero variance; tau sits on the
        # regularizer floor and the ratio reaches the 10^3..10^4 range
        m = 200
        a, b = 0.9, 0.892  # mmd = 2(a - b) = 0.016
        k_xx = np.full((m, m), a)
        k_yy = np.full((m, m), a)
        k_xy = np.full((m, m), b)
        stat = liu_ratio(k_xx, k_yy, k_xy)
        assert stat.mmd == pytest.approx(0.016)
        assert stat.tau == pytest.approx(1e-4)
        assert 1e3 < stat.j_liu < 1e4

    def test_lambda_reg_validation(self):
        with pytest.raises(ContractViolationError):
            liu_ratio(np.ones((2, 2)), np.ones((2, 2)), np.ones((2, 2)),
                      lambda_reg=0.0)


def _fd_gradient(objective, mlp, X, Y, step=1e-6):
    kernel = CompositeKernel(gaussian_unit(), mlp)
    _, grad = objective(X, Y, kernel)
    analytic = np.concatenate([a.ravel() for a in grad.arrays()])
    fd = np.zeros_like(analytic)
    pos = 0
    for arr in mlp.parameter_arrays():
        flat = arr.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = objective(X, Y, CompositeKernel(gaussian_unit(), mlp))[0]
            flat[k] = orig - step
            down = objective(X, Y, CompositeKernel(gaussian_unit(), mlp))[0]
            flat[k] = orig
            fd[pos] = (up - down) / (2 * step)
            pos += 1
    return analytic, fd


class TestGradients:
    def test_zero_weight_mlp_zero_gradient(self):
        mlp = MlpMap([np.zeros((4, 2)), np.zeros((3, 4))],
                     [np.zeros(4), np.zeros(3)])
        kern = CompositeKernel(gaussian_unit(), mlp)
        rng = np.random.default_rng(5)
        _, grad = mmd_with_gradient(rng.standard_normal((4, 2)),
                                    rng.standard_normal((5, 2)), kern)
        assert all(np.all(a == 0) for a in grad.arrays())

    def test_constant_base_zero_gradient(self):
        rng = np.random.default_rng(6)
        mlp = MlpMap.initialize([2, 4, 3], rng)
        kern = CompositeKernel(constant(0.5), mlp)
        _, grad = mmd_with_gradient(rng.standard_normal((4, 2)),
                                    rng.standard_normal((4, 2)), kern)
        assert all(np.all(a == 0) for a in grad.arrays())

    def test_laplacian_base_unsupported(self):
        rng = np.random.default_rng(7)
        mlp = MlpMap.initialize([2, 3, 2], rng)
        kern = CompositeKernel(laplacian_unit(), mlp)
        with pytest.raises(UnsupportedConfigurationError):
            mmd_with_gradient(rng.standard_normal((3, 2)),
                              rng.standard_normal((3, 2)), kern)

    def test_non_mlp_feature_unsupported(self):
        kern = CompositeKernel(gaussian_unit(), identity_map(2))
        with pytest.raises(UnsupportedConfigurationError):
            mmd_with_gradient(np.zeros((3, 2)), np.ones((3, 2)), kern)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_mmd_gradient_matches_fd(self, seed):
        rng = np.random.default_rng(100 + seed)
        mlp = MlpMap.initialize([3, 6, 4], rng)
        X = rng.standard_normal((5, 3))
        Y = rng.standard_normal((6, 3)) + 0.3
        analytic, fd = _fd_gradient(mmd_with_gradient, mlp, X, Y)
        assert np.linalg.norm(analytic - fd) / np.linalg.norm(fd) < 1e-6

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_liu_gradient_matches_fd(self, seed):
        rng = np.random.default_rng(200 + seed)
        mlp = MlpMap.initialize([3, 6, 4], rng)
        X = rng.standard_normal((6, 3))
        Y = rng.standard_normal((6, 3)) * 1.3

        def objective(X_, Y_, kern):
            stat, grad = liu_with_gradient(X_, Y_, kern)
            return stat.j_liu, grad

        analytic, fd = _fd_gradient(objective, mlp, X, Y)
        assert np.linalg.norm(analytic - fd) / np.linalg.norm(fd) < 1e-6

    def test_liu_gradient_requires_balance(self):
        rng = np.random.default_rng(8)
        mlp = MlpMap.initialize([2, 3, 2], rng)
        kern = CompositeKernel(gaussian_unit(), mlp)
        with pytest.raises(UnsupportedConfigurationError):
            liu_with_gradient(rng.standard_normal((3, 2)),
                              rng.standard_normal((4, 2)), kern)
