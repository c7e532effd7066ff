"""Damped least-squares engine: convergence, covariance, reproducibility."""

import numpy as np
import pytest

from sqzstat.errors import SingularJacobian
from sqzstat.lm import finite_difference_jacobian, fit_nonlinear, fit_weighted_line


def line(x, p):
    return p[0] * x


def line_jac(x, p):
    return x[:, None].copy()


class TestLineFit:
    def test_exact_points_recovered(self):
        x = np.linspace(1.0, 10.0, 20)
        y = 3.7 * x
        s = np.ones_like(x)
        fit = fit_nonlinear(line, x, y, s, [1.0], jac=line_jac)
        assert fit.converged
        assert fit.values[0] == pytest.approx(3.7, rel=1e-12)
        # the damping schedule needs a few shrink steps to hit 1e-12
        assert fit.iterations <= 8

    def test_start_at_optimum_converges_immediately(self):
        x = np.linspace(1.0, 10.0, 20)
        y = 3.7 * x
        fit = fit_nonlinear(line, x, y, np.ones_like(x), [3.7], jac=line_jac)
        assert fit.converged
        assert fit.iterations == 0
        assert fit.residual_norm == 0.0

    def test_covariance_is_inverse_normal_matrix(self):
        rng = np.random.default_rng(31)
        x = rng.uniform(1, 5, 30)
        s = rng.uniform(0.5, 2.0, 30)
        y = 2.0 * x + rng.normal(0, s)
        fit = fit_nonlinear(line, x, y, s, [1.0], jac=line_jac)
        expect = 1.0 / np.sum((x / s) ** 2)
        assert fit.covariance[0, 0] == pytest.approx(expect, rel=1e-10)


class TestDeterminism:
    def test_reorder_invariance_bit_identical(self):
        rng = np.random.default_rng(32)
        x = rng.uniform(0.5, 8, 40)
        s = rng.uniform(0.2, 1.0, 40)
        y = 1.3 * x + rng.normal(0, s)

        def model(xx, p):
            return p[0] * xx + p[1] * xx**2

        fit1 = fit_nonlinear(model, x, y, s, [1.0, 0.1])
        perm = rng.permutation(40)
        fit2 = fit_nonlinear(model, x[perm], y[perm], s[perm], [1.0, 0.1])
        assert np.array_equal(fit1.values, fit2.values)
        assert np.array_equal(fit1.covariance, fit2.covariance)
        assert fit1.residual_norm == fit2.residual_norm


class TestMonotoneResidual:
    def test_cost_never_increases_across_accepts(self):
        rng = np.random.default_rng(33)
        x = np.linspace(0.1, 4.0, 60)
        true = np.array([2.5, 0.8])

        def model(xx, p):
            return p[0] * np.exp(-p[1] * xx)

        y = model(x, true) + rng.normal(0, 0.01, x.size)
        sigma = np.full_like(x, 0.01)
        for p0 in ([1.0, 0.2], [4.0, 2.0], [2.5, 0.8], [0.3, 3.0]):
            init_cost = float(np.sum(((y - model(x, np.array(p0))) / sigma) ** 2))
            fit = fit_nonlinear(model, x, y, sigma, p0, log_mask=(True, True))
            assert fit.residual_norm <= init_cost
            assert fit.converged
            assert fit.values == pytest.approx(true, rel=0.05)

    def test_log_mask_keeps_parameters_positive(self):
        rng = np.random.default_rng(34)
        x = np.linspace(0.1, 4.0, 50)

        def model(xx, p):
            return p[0] * np.exp(-p[1] * xx)

        y = model(x, [0.01, 5.0]) + rng.normal(0, 0.02, x.size)  # nearly flat zero
        fit = fit_nonlinear(model, x, y, np.full_like(x, 0.02), [1.0, 1.0],
                            log_mask=(True, True), max_iter=60)
        assert np.all(fit.values > 0)


class TestFiniteDifferences:
    def test_fd_matches_analytic_on_smooth_model(self):
        def model(xx, p):
            return p[0] * np.sin(p[1] * xx) + p[2]

        def jac(xx, p):
            j = np.empty((xx.size, 3))
            j[:, 0] = np.sin(p[1] * xx)
            j[:, 1] = p[0] * xx * np.cos(p[1] * xx)
            j[:, 2] = 1.0
            return j

        rng = np.random.default_rng(35)
        x = rng.uniform(0, 3, 25)
        for _ in range(10):
            p = rng.uniform(0.5, 2.0, 3)
            fd = finite_difference_jacobian(model, x, p)
            an = jac(x, p)
            assert np.allclose(fd, an, rtol=1e-6, atol=1e-9)


class TestFailureModes:
    def test_max_iterations_returns_best_so_far(self):
        rng = np.random.default_rng(36)
        x = np.linspace(0.1, 4.0, 50)

        def model(xx, p):
            return p[0] * np.exp(-p[1] * xx)

        y = model(x, [2.0, 1.0]) + rng.normal(0, 0.05, x.size)
        fit = fit_nonlinear(model, x, y, np.full_like(x, 0.05), [50.0, 9.0], max_iter=2)
        assert not fit.converged
        assert fit.iterations == 2
        assert np.all(np.isfinite(fit.values))

    def test_singular_jacobian_raised(self):
        def model(xx, p):
            return np.full_like(xx, p[0] * 0.0)  # no dependence on p

        x = np.linspace(0, 1, 10)
        with pytest.raises(SingularJacobian):
            fit_nonlinear(model, x, x, np.ones_like(x), [1.0])

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_nonlinear(line, np.array([1.0]), np.array([1.0]), np.array([1.0]),
                          [1.0, 2.0])


class TestWeightedLine:
    def test_through_origin_exact(self):
        x = np.array([1.0, 2.0, 4.0])
        values, cov, resid = fit_weighted_line(x, 5.0 * x, np.ones(3))
        assert values[0] == pytest.approx(5.0, rel=1e-14)
        assert resid == pytest.approx(0.0, abs=1e-20)

    def test_with_offset_exact(self):
        x = np.array([1.0, 2.0, 4.0, 7.0])
        values, cov, resid = fit_weighted_line(x, 5.0 * x + 3.0, np.ones(4),
                                               through_origin=False)
        assert values == pytest.approx([5.0, 3.0], rel=1e-12)
