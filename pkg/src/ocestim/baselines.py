"""Baseline estimators: two-step gradient matching and multistart trajectory fitting.

The two-step (TS) estimator matches the derivative of the smoothed curve
to the vector field in weighted L2; the weight vanishes at the interval
endpoints where the derivative estimate is least reliable.  The nonlinear
least squares (NLS) estimator fits integrated trajectories to the raw
observations from multiple starting points, rejecting parameter regions
where the solution blows up.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .lm import levenberg_marquardt
from .models import ModelSpec
from .odesim import rk4_solve
from .quadrature import QuadratureRule, gauss_legendre
from .smoother import SplineFit

DEFAULT_RAMP = 0.1
DEFAULT_STARTS = 20
DEFAULT_DISPERSION = 0.5
_FD_STEP = 1e-6


class EstimatorFailure(RuntimeError):
    """An estimator could not produce a usable estimate; carries the reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class WeightFunction:
    """Piecewise-affine weight on [a, b], zero at both endpoints.

    Ramps linearly from 0 to 1 over the outer ``ramp`` fraction of the
    interval on each side, with a flat plateau of 1 in between.
    """

    a: float
    b: float
    ramp: float = DEFAULT_RAMP

    def __post_init__(self):
        if self.b <= self.a:
            raise ValueError(f"degenerate interval [{self.a}, {self.b}]")
        if not 0.0 < self.ramp <= 0.5:
            raise ValueError("ramp fraction must be in (0, 0.5]")

    def eval(self, grid) -> np.ndarray:
        t = np.asarray(grid, dtype=float)
        width = self.ramp * (self.b - self.a)
        up = (t - self.a) / width
        down = (self.b - t) / width
        return np.clip(np.minimum(up, down), 0.0, 1.0)


@dataclass
class BaselineEstimate:
    """Result of a baseline estimator run."""

    theta: np.ndarray
    objective: float
    method: str
    converged: bool
    n_iter: int
    covariance: Optional[np.ndarray] = None  # NLS only
    x0: Optional[np.ndarray] = None  # estimated initial state (NLS, when requested)
    multistart_log: Optional[list] = None


# ---------------------------------------------------------------------------
# two-step gradient matching
# ---------------------------------------------------------------------------


def _field_on_nodes(vf, nodes, G, theta):
    """Field values along the curve, (d, q), batched with scalar fallback."""
    try:
        vals = np.asarray(vf.f(nodes, G.T, theta), dtype=float)
        if vals.shape == (vf.dim, len(nodes)):
            return vals
    except (ValueError, TypeError):
        pass
    return np.stack([np.asarray(vf.f(t, G[i], theta), dtype=float) for i, t in enumerate(nodes)], axis=-1)


def _ftheta_on_nodes(vf, nodes, G, theta):
    try:
        vals = np.asarray(vf.f_theta(nodes, G.T, theta), dtype=float)
        if vals.shape == (vf.dim, vf.n_params, len(nodes)):
            return vals
        if vals.shape == (vf.dim, vf.n_params):
            return np.broadcast_to(vals[..., None], vals.shape + (len(nodes),))
    except (ValueError, TypeError):
        pass
    return np.stack(
        [np.asarray(vf.f_theta(t, G[i], theta), dtype=float) for i, t in enumerate(nodes)], axis=-1
    )


def ts_estimate(
    fit: SplineFit,
    model: ModelSpec,
    weight: Optional[WeightFunction] = None,
    theta_init=None,
    rule: Optional[QuadratureRule] = None,
) -> BaselineEstimate:
    """Two-step estimator: match the smoothed derivative to the field.

    Minimizes the quadrature discretization of
    ``integral of |curve'(t) - f(t, curve(t), theta)|^2 w(t)`` by
    Levenberg-Marquardt over the parameter box.  Models whose field
    depends on a change-point location parameter are rejected: the
    criterion is piecewise constant in that parameter, so no
    derivative-based (or smooth) optimizer can recover it.
    """
    if model.is_delayed:
        raise EstimatorFailure("two-step estimation is not implemented for delay models")
    adj = model.adjustment
    if adj is not None and adj.tr_index is not None:
        raise EstimatorFailure(
            "two-step criterion is piecewise constant in the change-point location"
        )
    a, b = fit.domain
    if weight is None:
        weight = WeightFunction(a=a, b=b)
    if rule is None:
        jumps = model.field.jumps(model.theta_star) if model.theta_star is not None else []
        rule = gauss_legendre(a, b, breakpoints=jumps)
    nodes = rule.nodes
    G = fit.eval(nodes)  # (q, d)
    dG = fit.eval(nodes, order=1).T  # (d, q)
    sw = np.sqrt(rule.weights * weight.eval(nodes))  # (q,)
    vf = model.field

    def resid(th):
        F = _field_on_nodes(vf, nodes, G, th)
        return ((dG - F) * sw).ravel()

    if vf.f_theta is not None:

        def jac(th):
            FT = _ftheta_on_nodes(vf, nodes, G, th)  # (d, p, q)
            return (-FT * sw).transpose(0, 2, 1).reshape(-1, vf.n_params)

    else:

        def jac(th):
            p = len(th)
            J = np.empty((vf.dim * len(nodes), p))
            for r in range(p):
                h = _FD_STEP * (1.0 + abs(th[r]))
                tp, tm = np.array(th, dtype=float), np.array(th, dtype=float)
                tp[r] += h
                tm[r] -= h
                J[:, r] = (resid(tp) - resid(tm)) / (2 * h)
            return J

    if theta_init is None:
        theta_init = 0.5 * (model.theta_box[0] + model.theta_box[1])
    res = levenberg_marquardt(resid, jac, theta_init, bounds=model.theta_box)
    return BaselineEstimate(
        theta=res.x,
        objective=2.0 * res.cost,
        method="ts",
        converged=res.converged,
        n_iter=res.n_iter,
    )


# ---------------------------------------------------------------------------
# nonlinear least squares over the integrator
# ---------------------------------------------------------------------------


def _nls_residual_factory(model: ModelSpec, times, values, estimate_x0: bool):
    d = model.dim
    p = model.n_params

    def split(z):
        if estimate_x0:
            return z[:p], z[p:]
        return z, model.x0

    def resid(z):
        theta, x0 = split(z)
        traj = rk4_solve(model.field, theta, x0, times)
        if traj.blew_up:
            raise FloatingPointError("trajectory blow-up")
        return (values - traj.eval(times)).ravel()

    def jac(z):
        m = len(z)
        J = np.empty((len(times) * d, m))
        r0 = None
        for r in range(m):
            h = _FD_STEP * (1.0 + abs(z[r]))
            zp, zm = z.copy(), z.copy()
            zp[r] += h
            zm[r] -= h
            try:
                J[:, r] = (resid(zp) - resid(zm)) / (2 * h)
            except FloatingPointError:
                # one-sided fallback when a perturbation blows up
                if r0 is None:
                    r0 = resid(z)
                try:
                    J[:, r] = (resid(zp) - r0) / h
                except FloatingPointError:
                    J[:, r] = (r0 - resid(zm)) / h
        return J

    return resid, jac, split


def nls_estimate(
    obs,
    model: ModelSpec,
    x0="known",
    center=None,
    starts: int = DEFAULT_STARTS,
    dispersion: float = DEFAULT_DISPERSION,
    seed=None,
) -> BaselineEstimate:
    """Trajectory-fitting least squares with multistart.

    ``obs`` provides ``times`` and ``values``.  ``x0`` is "known" (use the
    model's initial state) or "estimate" (append the initial state to the
    optimization variables, initialized from the first observation).
    Starting points are the center (default: box midpoint) plus
    ``starts - 1`` componentwise uniform perturbations of relative size
    ``dispersion``.  A start whose trajectory blows up is rejected; if every
    start fails an :class:`EstimatorFailure` is raised.
    """
    if model.is_delayed:
        raise EstimatorFailure("trajectory fitting is not implemented for delay models")
    if starts < 1:
        raise ValueError("need at least one start")
    times = np.asarray(obs.times, dtype=float)
    values = np.asarray(obs.values, dtype=float)
    estimate_x0 = x0 == "estimate"
    resid, jac, split = _nls_residual_factory(model, times, values, estimate_x0)

    p = model.n_params
    if center is None:
        center = 0.5 * (model.theta_box[0] + model.theta_box[1])
    center = np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)
    seeds = [center]
    for _ in range(starts - 1):
        factor = 1.0 + dispersion * (2.0 * rng.random(p) - 1.0)
        seeds.append(np.clip(center * factor, model.theta_box[0], model.theta_box[1]))

    lo, hi = model.theta_box
    if estimate_x0:
        big = np.full(model.dim, np.inf)
        bounds = (np.concatenate([lo, -big]), np.concatenate([hi, big]))
        x0_init = values[0]
    else:
        bounds = (lo, hi)

    best = None
    log = []
    for k, th0 in enumerate(seeds):
        z0 = np.concatenate([th0, x0_init]) if estimate_x0 else th0
        try:
            res = levenberg_marquardt(resid, jac, z0, bounds=bounds)
        except (ValueError, FloatingPointError) as exc:
            log.append({"start": k, "status": "failed", "reason": str(exc)})
            continue
        log.append({"start": k, "status": "ok", "objective": 2.0 * res.cost})
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise EstimatorFailure("every multistart seed failed (trajectory blow-up)")

    theta, x0_hat = split(best.x)
    n_obs = values.size
    n_var = len(best.x)
    cov = None
    if n_obs > n_var:
        sigma2 = 2.0 * best.cost / (n_obs - n_var)
        JtJ = best.jacobian.T @ best.jacobian
        try:
            cov_full = sigma2 * np.linalg.inv(JtJ)
            cov = cov_full[:p, :p]
        except np.linalg.LinAlgError:
            cov = None
    return BaselineEstimate(
        theta=np.asarray(theta, dtype=float),
        objective=2.0 * best.cost,
        method="nls",
        converged=best.converged,
        n_iter=best.n_iter,
        covariance=cov,
        x0=np.asarray(x0_hat, dtype=float) if estimate_x0 else None,
        multistart_log=log,
    )
