"""Regression-spline smoothing of noisy trajectories.

The nonparametric proxy is a series estimator: per-dimension least squares
on a clamped B-spline basis, with optional equality constraint at a known
boundary point, GCV selection of the knot count, and the coefficient
covariances needed by the closed-form condition-variance formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .basis import KnotVector, uniform_knots

_SV_CUTOFF = 1e-10


@dataclass(frozen=True)
class Observations:
    """Observation times (strictly increasing) and values (n x d)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if len(times) != values.shape[0]:
            raise ValueError("times and values must have matching length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("observations contain non-finite values")

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplineFit:
    """Per-dimension least-squares spline fit with coefficient covariances."""

    knots: KnotVector
    coef: np.ndarray  # (K, d)
    hat_trace: float
    rss: np.ndarray  # (d,)
    sigma2: np.ndarray  # (d,)
    coef_cov: np.ndarray  # (d, K, K)
    gram_pinv: np.ndarray = field(repr=False)  # (K, K)
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.coef.shape[1]

    @property
    def n_basis(self) -> int:
        return self.coef.shape[0]

    @property
    def domain(self) -> tuple[float, float]:
        return self.knots.a, self.knots.b

    def eval(self, grid, order: int = 0) -> np.ndarray:
        """Spline values (order 0) or derivatives (order >= 1) on a grid,
        shape (len(grid), d)."""
        return eval_fit(self, grid, order)


def design_matrix(knots: KnotVector, grid) -> np.ndarray:
    """Clamped B-spline design matrix, shape (len(grid), K)."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < knots.a - 1e-9) or np.any(grid > knots.b + 1e-9):
        raise ValueError("evaluation point outside the fit domain")
    K = knots.n_basis
    spl = BSpline(knots.clamped, np.eye(K), knots.degree, extrapolate=False)
    return np.nan_to_num(spl(np.clip(grid, knots.a, knots.b)))


def fit(obs: Observations, knots: KnotVector, constraint=None) -> SplineFit:
    """Least-squares spline fit of the observations.

    ``constraint``, when given, is a pair ``(t0, value)`` forcing the fitted
    curve through ``value`` (length-d vector) at time ``t0`` exactly, via
    equality-constrained least squares.  Rank deficiency is handled by a
    pseudo-inverse with relative singular-value cutoff 1e-10.
    """
    K = knots.n_basis
    if obs.n <= K:
        raise ValueError(f"need more observations ({obs.n}) than basis functions ({K})")
    P = design_matrix(knots, obs.times)
    U, s, Vt = np.linalg.svd(P, full_matrices=False)
    keep = s > _SV_CUTOFF * s[0]
    r = int(np.sum(keep))
    Uk, sk, Vk = U[:, keep], s[keep], Vt[keep]
    gram_pinv = (Vk.T / sk**2) @ Vk  # (P'P)^+
    coef = (Vk.T / sk) @ (Uk.T @ obs.values)  # unconstrained LS, (K, d)
    hat_trace = float(r)

    if constraint is not None:
        t0, y0 = constraint
        y0 = np.atleast_1d(np.asarray(y0, dtype=float))
        if len(y0) != obs.dim:
            raise ValueError("constraint value must have one entry per dimension")
        v = design_matrix(knots, np.array([float(t0)]))[0]  # (K,)
        Mv = gram_pinv @ v
        vMv = float(v @ Mv)
        if vMv <= 0:
            raise ValueError("constraint point not identifiable from the design")
        coef = coef - np.outer(Mv, (v @ coef - y0) / vMv)
        hat_trace -= 1.0
        coef_gram = gram_pinv - np.outer(Mv, Mv) / vMv
    else:
        coef_gram = gram_pinv

    resid = obs.values - P @ coef
    rss = np.sum(resid**2, axis=0)
    dof = obs.n - hat_trace
    if dof <= 0:
        raise ValueError("no residual degrees of freedom left")
    sigma2 = rss / dof
    coef_cov = sigma2[:, None, None] * coef_gram[None, :, :]

    return SplineFit(
        knots=knots,
        coef=coef,
        hat_trace=hat_trace,
        rss=rss,
        sigma2=sigma2,
        coef_cov=coef_cov,
        gram_pinv=gram_pinv,
        times=obs.times,
        values=obs.values,
    )


def gcv_score(obs: Observations, knots: KnotVector, constraint=None) -> float:
    """GCV(K) = n * RSS / (n - tr H)^2 summed over state dimensions."""
    f = fit(obs, knots, constraint=constraint)
    return float(obs.n * np.sum(f.rss) / (obs.n - f.hat_trace) ** 2)


def gcv_select(
    obs: Observations,
    candidates,
    degree: int = 3,
    domain=None,
    constraint=None,
) -> KnotVector:
    """Select the uniform interior-knot count minimizing the GCV criterion.

    ``candidates`` is a sequence of interior knot counts; ties (within 1e-12
    relative) break toward fewer knots.  Candidates whose basis exceeds the
    sample size are skipped.
    """
    candidates = sorted(set(int(c) for c in candidates))
    if not candidates:
        raise ValueError("empty candidate list")
    if domain is None:
        domain = (obs.times[0], obs.times[-1])
    best_kv, best_score = None, np.inf
    for m in candidates:
        kv = uniform_knots(domain[0], domain[1], m, degree=degree)
        if obs.n <= kv.n_basis:
            continue
        score = gcv_score(obs, kv, constraint=constraint)
        if score < best_score * (1.0 - 1e-12):
            best_kv, best_score = kv, score
    if best_kv is None:
        raise ValueError("no candidate admits n > K")
    return best_kv


def eval_fit(fit: SplineFit, grid, order: int = 0) -> np.ndarray:
    """Evaluate the fitted curve (or a derivative) on a grid, (m, d)."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    kv = fit.knots
    if np.any(grid < kv.a - 1e-9) or np.any(grid > kv.b + 1e-9):
        raise ValueError("evaluation point outside the fit domain")
    spl = BSpline(kv.clamped, fit.coef, kv.degree, extrapolate=False)
    if order > 0:
        spl = spl.derivative(order)
    return np.nan_to_num(spl(np.clip(grid, kv.a, kv.b)))
