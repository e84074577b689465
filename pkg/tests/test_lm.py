"""Levenberg-Marquardt solver tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ocestim.lm import levenberg_marquardt


def test_linear_least_squares_in_one_step():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 3))
    x_true = np.array([1.0, -2.0, 0.5])
    b = A @ x_true

    res = levenberg_marquardt(lambda x: A @ x - b, lambda x: A, np.zeros(3))
    assert res.converged
    assert_allclose(res.x, x_true, atol=1e-10)
    assert res.n_iter <= 10


def test_rosenbrock_valley():
    def resid(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    def jac(x):
        return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])

    res = levenberg_marquardt(resid, jac, np.array([-1.2, 1.0]))
    assert res.converged
    assert_allclose(res.x, [1.0, 1.0], atol=1e-8)


def test_bounds_are_respected():
    # Unconstrained minimum at x = 3; box caps it at 2.
    res = levenberg_marquardt(
        lambda x: x - 3.0,
        lambda x: np.eye(1),
        np.array([0.0]),
        bounds=(np.array([-2.0]), np.array([2.0])),
    )
    assert_allclose(res.x, [2.0], atol=1e-10)


def test_non_finite_region_is_avoided():
    # Residual blows up for x > 2; the solver must stay in the valid region
    # and still find the minimum at x = 1.5.
    def resid(x):
        if x[0] > 2.0:
            raise FloatingPointError("blow-up")
        return np.array([x[0] - 1.5])

    res = levenberg_marquardt(resid, lambda x: np.eye(1), np.array([0.0]))
    assert res.converged
    assert_allclose(res.x, [1.5], atol=1e-9)


def test_non_finite_values_treated_as_rejection():
    def resid(x):
        if x[0] > 2.0:
            return np.array([np.inf])
        return np.array([x[0] - 1.5])

    res = levenberg_marquardt(resid, lambda x: np.eye(1), np.array([0.0]))
    assert_allclose(res.x, [1.5], atol=1e-9)


def test_start_must_be_evaluable():
    def resid(x):
        raise FloatingPointError("nowhere finite")

    with pytest.raises((FloatingPointError, ValueError)):
        levenberg_marquardt(resid, lambda x: np.eye(1), np.array([0.0]))


def test_reports_gradient_norm_and_cost():
    A = np.diag([1.0, 2.0])
    b = np.array([1.0, 1.0])
    res = levenberg_marquardt(lambda x: A @ x - b, lambda x: A, np.zeros(2))
    assert res.cost >= 0
    assert res.grad_norm < 1e-8
