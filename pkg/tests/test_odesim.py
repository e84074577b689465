"""Integrator tests: RK4 accuracy, jumps, blow-up, delays, compiled kernels."""

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from ocestim.models import get_model
from ocestim.odesim import (
    HAVE_FASTRK,
    DelayedVectorField,
    VectorField,
    constant_history,
    dde_solve,
    rk4_solve,
)


def test_exponential_closed_form():
    m = get_model("exponential")
    t = np.linspace(0.0, 1.0, 50)
    traj = rk4_solve(m.field, np.array([1.3]), np.array([2.0]), t)
    assert_allclose(traj.eval(t)[:, 0], 2.0 * np.exp(1.3 * t), rtol=1e-9)


def test_linear2d_matrix_exponential_oracle():
    m = get_model("linear2d")
    A = np.array([[-m.theta_star[0], m.theta_star[1]], [1.0, -1.0]])
    t = np.linspace(0.0, 5.0, 60)
    traj = rk4_solve(m.field, m.theta_star, m.x0, t)
    exact = np.stack([expm(s * A) @ m.x0 for s in t])
    assert_allclose(traj.eval(t), exact, atol=1e-8)


def test_dense_output_between_nodes():
    m = get_model("exponential")
    t = np.linspace(0.0, 1.0, 20)
    traj = rk4_solve(m.field, np.array([1.0]), np.array([1.0]), t)
    mid = (t[:-1] + t[1:]) / 2
    assert_allclose(traj.eval(mid)[:, 0], np.exp(mid), rtol=1e-7)


def test_blow_up_flag_set():
    # x' = x^2 from x0=1 explodes at t=1.
    vf = VectorField(dim=1, n_params=0, f=lambda t, x, th: np.atleast_1d(x) ** 2)
    traj = rk4_solve(vf, np.empty(0), np.array([1.0]), np.linspace(0.0, 2.0, 50))
    assert traj.blew_up


def test_step_input_integrated_exactly():
    # x' = 1_{t >= c}: solution is a hinge, exact for RK4 only if no step
    # straddles the jump.
    c = 0.437
    vf = VectorField(
        dim=1,
        n_params=0,
        f=lambda t, x, th: np.atleast_1d(np.asarray(1.0 * (t >= c))),
        discontinuities=lambda th: [c],
    )
    t = np.linspace(0.0, 1.0, 11)
    traj = rk4_solve(vf, np.empty(0), np.array([0.0]), t)
    assert_allclose(traj.eval(t)[:, 0], np.maximum(t - c, 0.0), atol=1e-8)


@pytest.mark.skipif(not HAVE_FASTRK, reason="compiled kernels unavailable")
@pytest.mark.parametrize("name", ["exponential", "alpha-pinene", "ricatti", "fhn", "linear2d"])
def test_compiled_kernel_matches_python(name):
    m = get_model(name)
    vf = m.field
    assert vf.fast_kind is not None
    slow = dataclasses.replace(vf, fast_kind=None, fast_pack=None)
    t = np.linspace(*m.t_span, 40)
    fast_traj = rk4_solve(vf, m.theta_star, m.x0, t)
    slow_traj = rk4_solve(slow, m.theta_star, m.x0, t)
    scale = np.max(np.abs(slow_traj.eval(t))) + 1.0
    assert_allclose(fast_traj.eval(t), slow_traj.eval(t), atol=1e-10 * scale)


def test_dde_method_of_steps_piecewise_closed_form():
    # x'(t) = -x(t-1), history 1: x = 1 - t on [0,1],
    # x = t^2/2 - 2 t + 3/2 on [1,2].
    vf = DelayedVectorField(
        dim=1, n_params=0, f=lambda t, x, xlag, th: -np.atleast_1d(xlag)
    )
    hist = constant_history(np.array([1.0]), tau=1.0, t0=0.0)
    traj = dde_solve(vf, np.empty(0), hist, 2.0, max_step=1.0 / 64)
    t1 = np.linspace(0.0, 1.0, 21)
    t2 = np.linspace(1.0, 2.0, 21)
    assert_allclose(traj.eval(t1)[:, 0], 1.0 - t1, atol=1e-9)
    assert_allclose(traj.eval(t2)[:, 0], t2**2 / 2 - 2 * t2 + 1.5, atol=1e-8)


def test_dde_history_is_respected_before_start():
    vf = DelayedVectorField(dim=1, n_params=0, f=lambda t, x, xlag, th: -np.atleast_1d(xlag))
    hist = constant_history(np.array([3.0]), tau=0.5, t0=0.0)
    traj = dde_solve(vf, np.empty(0), hist, 1.0, max_step=0.5 / 32)
    assert_allclose(traj.eval(np.array([0.0]))[0, 0], 3.0, atol=1e-12)


def test_blowfly_solver_reaches_equilibrium_scale():
    m = get_model("blowfly")
    traj = dde_solve(m.delayed_field, m.theta_star, m.default_history(), 180.0,
                     max_step=m.tau / 64)
    vals = traj.eval(np.linspace(100.0, 180.0, 50))[:, 0]
    assert np.all(vals > 0)
    # long-run level is in the thousands for the reference parameters
    assert 500 < vals.mean() < 20000
