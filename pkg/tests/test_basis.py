"""Test-function basis tests: orthonormality, boundary behavior, calculus."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ocestim.basis import (
    KnotVector,
    make_bspline_testfuncs,
    make_sine_basis,
    uniform_bspline_testfuncs,
    uniform_knots,
)
from ocestim.quadrature import gauss_legendre

# Closed form: <exp, d/dt sqrt(2) sin(pi t)> on [0,1]
#   = sqrt(2) pi int_0^1 exp(t) cos(pi t) dt = -sqrt(2) pi (e + 1) / (1 + pi^2)
EXP_DSINE_INNER = -math.sqrt(2.0) * math.pi * (math.e + 1.0) / (1.0 + math.pi**2)


def gram(basis, order=0):
    breaks = basis.knots.interior if basis.knots is not None else None
    rule = gauss_legendre(basis.a, basis.b, panels=32, nodes_per_panel=10, breakpoints=breaks)
    V = basis.eval(rule.nodes, order=order)
    return (V * rule.weights[:, None]).T @ V


def test_sine_orthonormal():
    basis = make_sine_basis(6, (0.0, 3.0))
    assert_allclose(gram(basis), np.eye(6), atol=1e-12)


def test_sine_vanishes_at_endpoints():
    basis = make_sine_basis(4, (-1.0, 2.0))
    left, right = basis.boundary_values()
    assert_allclose(left, 0.0, atol=1e-12)
    assert_allclose(right, 0.0, atol=1e-12)


def test_sine_derivative_matches_finite_differences():
    basis = make_sine_basis(5, (0.0, 2.0))
    t = np.linspace(0.1, 1.9, 40)
    h = 1e-6
    fd = (basis.eval(t + h) - basis.eval(t - h)) / (2 * h)
    assert_allclose(basis.eval(t, order=1), fd, rtol=1e-7, atol=1e-7)


def test_sine_antiderivative_anchored_and_consistent():
    basis = make_sine_basis(5, (0.5, 2.5))
    assert_allclose(basis.eval(np.array([0.5]), order=-1), 0.0, atol=1e-14)
    t = np.linspace(0.6, 2.4, 30)
    h = 1e-6
    fd = (basis.eval(t + h, order=-1) - basis.eval(t - h, order=-1)) / (2 * h)
    assert_allclose(fd, basis.eval(t), rtol=1e-7, atol=1e-7)


def test_exp_derivative_inner_product_oracle():
    basis = make_sine_basis(3, (0.0, 1.0))
    rule = gauss_legendre(0.0, 1.0, panels=16, nodes_per_panel=10)
    vals = basis.eval(rule.nodes, order=1)[:, 0]
    inner = rule.weights @ (np.exp(rule.nodes) * vals)
    assert_allclose(inner, EXP_DSINE_INNER, rtol=1e-12)


def test_bspline_orthonormal():
    basis = uniform_bspline_testfuncs(7, (0.0, 10.0))
    assert_allclose(gram(basis), np.eye(7), atol=1e-9)


def test_bspline_interior_members_vanish_at_endpoints():
    basis = uniform_bspline_testfuncs(6, (0.0, 4.0))
    left, right = basis.boundary_values()
    assert_allclose(left, 0.0, atol=1e-12)
    assert_allclose(right, 0.0, atol=1e-12)


def test_bspline_boundary_active_members():
    basis = uniform_bspline_testfuncs(5, (0.0, 4.0), active_left=True, active_right=True)
    assert basis.size == 7
    left, right = basis.boundary_values()
    assert abs(left[0]) > 1e-3
    assert_allclose(left[1:], 0.0, atol=1e-12)
    assert abs(right[-1]) > 1e-3
    assert_allclose(right[:-1], 0.0, atol=1e-12)
    # Unit norms, boundary members orthogonal to every interior member.
    # (The two boundary members may overlap each other: orthogonalizing them
    # against one another would break their opposite-endpoint vanishing.)
    G = gram(basis)
    assert_allclose(np.diag(G), 1.0, atol=1e-9)
    off = G - np.diag(np.diag(G))
    off[0, -1] = off[-1, 0] = 0.0
    assert_allclose(off, 0.0, atol=1e-9)


def test_bspline_antiderivative_anchored():
    basis = uniform_bspline_testfuncs(5, (1.0, 9.0))
    assert_allclose(basis.eval(np.array([1.0]), order=-1), 0.0, atol=1e-13)
    t = np.linspace(1.5, 8.5, 25)
    h = 1e-6
    fd = (basis.eval(t + h, order=-1) - basis.eval(t - h, order=-1)) / (2 * h)
    assert_allclose(fd, basis.eval(t), rtol=1e-6, atol=1e-8)


def test_bspline_custom_knots_repeated():
    interior = np.sort(np.concatenate([np.linspace(0, 14, 8)[1:-1], [5.0] * 3]))
    kv = KnotVector(a=0.0, b=14.0, interior=interior, degree=3)
    basis = make_bspline_testfuncs(kv, 6)
    assert_allclose(gram(basis), np.eye(6), atol=1e-9)


def test_eval_outside_domain_rejected():
    basis = make_sine_basis(3, (0.0, 1.0))
    with pytest.raises(ValueError):
        basis.eval(np.array([1.5]))


def test_knot_vector_validation():
    with pytest.raises(ValueError):
        KnotVector(a=0.0, b=1.0, interior=np.array([2.0]), degree=3)
    with pytest.raises(ValueError):
        KnotVector(a=0.0, b=1.0, interior=np.array([0.8, 0.2]), degree=3)
    with pytest.raises(ValueError):
        uniform_knots(1.0, 0.0, 3)


def test_too_many_members_rejected():
    kv = uniform_knots(0.0, 1.0, 2, degree=3)
    with pytest.raises(ValueError):
        make_bspline_testfuncs(kv, 10)
