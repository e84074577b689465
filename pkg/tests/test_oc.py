"""Orthogonal-conditions estimator tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from ocestim import (
    get_model,
    make_condition_set,
    make_sine_basis,
    oc,
)
from ocestim.mc import generate_data
from ocestim.oc import (
    WeightMatrix,
    condition_covariance,
    confidence_intervals,
    estimator_covariance,
    gaussian_quantile,
)
from ocestim.smoother import fit as spline_fit, gcv_select


def fitted(model, n=200, sigma=0.05, seed=0, candidates=(6, 10, 14)):
    obs = generate_data(model, n=n, sigma=sigma, seed=seed)
    return spline_fit(obs, gcv_select(obs, candidates))


def test_gaussian_quantile_matches_scipy():
    p = np.concatenate([np.linspace(1e-6, 1 - 1e-6, 101), [0.025, 0.975, 0.5]])
    ours = np.array([gaussian_quantile(v) for v in p])
    assert_allclose(ours, norm.ppf(p), atol=1e-10)


def test_noiseless_recovery_exponential():
    m = get_model("exponential")
    f = fitted(m, sigma=0.0)
    cs = make_condition_set(m, make_sine_basis(5, m.t_span))
    est = oc.minimize(cs, f)
    assert abs(est.theta[0] - m.theta_star[0]) < 1e-6


def test_affine_and_iterative_paths_agree():
    m = get_model("linear2d")  # linear in theta: both solver paths apply
    f = fitted(m)
    cs = make_condition_set(m, make_sine_basis(6, m.t_span))
    a = oc.minimize(cs, f, method="linear")
    b = oc.minimize(cs, f, method="iterative")
    assert_allclose(a.theta, b.theta, atol=1e-8)


def test_estimate_carries_covariance_and_intervals():
    m = get_model("exponential")
    f = fitted(m, sigma=0.1)
    cs = make_condition_set(m, make_sine_basis(5, m.t_span))
    est = oc.minimize(cs, f, alpha=0.05)
    assert est.v_theta is not None and est.v_theta.shape == (1, 1)
    assert est.v_theta[0, 0] > 0
    lo, hi = est.conf_int[0]
    assert lo < est.theta[0] < hi
    half = 0.5 * (hi - lo)
    assert_allclose(half, gaussian_quantile(0.975) * est.stderr[0], rtol=1e-12)


def test_condition_covariance_positive_semidefinite():
    m = get_model("linear2d")
    f = fitted(m, sigma=0.1)
    cs = make_condition_set(m, make_sine_basis(6, m.t_span))
    V = condition_covariance(cs, f, m.theta_star)
    assert_allclose(V, V.T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(V)) > -1e-12


def test_estimator_covariance_sandwich_identity_weight():
    rng = np.random.default_rng(6)
    J = rng.standard_normal((12, 3))
    Ve = np.eye(12) * 0.01
    M, V = estimator_covariance(J, Ve)
    # with V_e = s * I the sandwich is s * (J'J)^{-1}
    assert_allclose(V, 0.01 * np.linalg.inv(J.T @ J), atol=1e-12)
    assert M.shape == (3, 12)


def test_confidence_interval_width_formula():
    theta = np.array([1.0, -2.0])
    V = np.diag([0.04, 0.09])
    ci = confidence_intervals(theta, V, alpha=0.1)
    q = gaussian_quantile(0.95)
    assert_allclose(ci[:, 1] - ci[:, 0], 2 * q * np.array([0.2, 0.3]), rtol=1e-12)


def test_weight_matrix_from_condition_covariance():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((6, 6))
    Ve = A @ A.T
    W = WeightMatrix.from_condition_covariance(Ve)
    # ridge keeps it finite and close to the true inverse
    assert_allclose(W.matrix @ Ve, np.eye(6), atol=1e-6)


def test_weighted_two_stage_runs_and_reports_weight():
    m = get_model("linear2d")
    f = fitted(m, sigma=0.1)
    cs = make_condition_set(m, make_sine_basis(6, m.t_span))
    est = oc.weighted_two_stage(cs, f)
    assert est.weight is not None
    assert np.all(np.isfinite(est.theta))


def test_select_l_noiseless_recovers_for_every_candidate():
    m = get_model("exponential")
    f = fitted(m, sigma=0.0)
    est = oc.select_L(m, f, [4, 5, 6])
    assert est.L in (4, 5, 6)
    assert abs(est.theta[0] - m.theta_star[0]) < 1e-6
    # deterministic: the same inputs select the same L
    assert oc.select_L(m, f, [4, 5, 6]).L == est.L


def test_select_l_records_sse():
    m = get_model("exponential")
    f = fitted(m, sigma=0.1, seed=3)
    est = oc.select_L(m, f, [4, 6, 8])
    assert est.sse is not None and np.isfinite(est.sse)
    assert est.L in (4, 6, 8)
