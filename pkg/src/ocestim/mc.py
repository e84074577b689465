"""Monte Carlo benchmark harness.

Generates noisy datasets from a registered model, runs a configurable list
of estimators on each replicate, and aggregates mean squared errors,
covariance traces, and confidence-set coverage.  Replicate k's dataset
depends only on (seed, k), so replicates can run in any order (or in
parallel) without changing any number.
"""

from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.stats import chi2

from . import oc
from .baselines import EstimatorFailure, WeightFunction, nls_estimate, ts_estimate
from .basis import make_sine_basis, uniform_bspline_testfuncs
from .conditions import make_condition_set
from .models import ModelSpec, get_model
from .odesim import dde_solve, rk4_solve
from .smoother import Observations, fit as spline_fit, gcv_select

JOBS_ENV = "OCESTIM_JOBS"


@dataclass
class ExperimentConfig:
    """Declarative description of one Monte Carlo experiment."""

    model: str
    n: int
    sigma: float
    replicates: int = 100
    estimators: list = dc_field(default_factory=lambda: [{"name": "oc", "L": 8}])
    scheme: str = "equispaced"  # or "uniform"
    seed: int = 0
    model_kwargs: dict = dc_field(default_factory=dict)
    knot_candidates: list = dc_field(default_factory=lambda: list(range(4, 31, 2)))
    sigma_relative: bool = False  # sigma as a fraction of the mean trajectory scale
    alpha: float = 0.05
    constrain_initial_value: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two observation times")
        if self.sigma < 0:
            raise ValueError("noise level must be non-negative")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if self.scheme not in ("equispaced", "uniform"):
            raise ValueError("sampling scheme must be 'equispaced' or 'uniform'")


@dataclass
class EstimatorSummary:
    """Aggregates for one estimator across replicates."""

    name: str
    n_ok: int
    n_failed: int
    mse: float
    mse_per_coord: np.ndarray
    mean_trace_cov: Optional[float]
    coverage_per_coord: Optional[np.ndarray]
    coverage_ellipse: Optional[float]
    estimates: np.ndarray  # (n_ok, p)
    failures: list


@dataclass
class MCReport:
    """Full experiment outcome: per-estimator summaries plus timing."""

    config: ExperimentConfig
    theta_star: np.ndarray
    summaries: dict
    wall_seconds: float


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------


def _reference_trajectory(model: ModelSpec, theta, x0, times, history=None):
    if model.is_delayed:
        hist = history if history is not None else model.default_history()
        traj = dde_solve(model.delayed_field, theta, hist, float(times[-1]), max_step=model.tau / 64)
    else:
        traj = rk4_solve(model.field, theta, x0, times)
    if traj.blew_up:
        raise FloatingPointError("reference trajectory blew up at the requested parameters")
    return traj


def generate_data(
    model: ModelSpec,
    theta=None,
    x0=None,
    n: int = 100,
    sigma: float = 0.0,
    scheme: str = "equispaced",
    seed=None,
    history=None,
) -> Observations:
    """Simulate noisy observations from the model.

    Times are equispaced over the observation interval, or sorted i.i.d.
    uniform draws (keeping the endpoints so the smoother covers the full
    interval).  Values are the trajectory at ``theta`` plus i.i.d. Gaussian
    noise with standard deviation ``sigma`` in every coordinate.
    """
    theta = model.theta_star if theta is None else np.asarray(theta, dtype=float)
    x0 = model.x0 if x0 is None else np.asarray(x0, dtype=float)
    a, b = model.t_span
    rng = np.random.default_rng(seed)
    if scheme == "equispaced":
        times = np.linspace(a, b, n)
    elif scheme == "uniform":
        interior = np.sort(rng.uniform(a, b, size=n - 2))
        times = np.concatenate([[a], interior, [b]])
    else:
        raise ValueError("sampling scheme must be 'equispaced' or 'uniform'")
    traj = _reference_trajectory(model, theta, x0, times, history=history)
    values = traj.eval(times)
    if sigma > 0:
        values = values + sigma * rng.standard_normal(values.shape)
    return Observations(times=times, values=values)


def trajectory_scale(model: ModelSpec, theta=None, n: int = 200, history=None) -> float:
    """Mean absolute trajectory value, used to map relative noise to absolute."""
    theta = model.theta_star if theta is None else theta
    times = np.linspace(*model.t_span, n)
    traj = _reference_trajectory(model, theta, model.x0, times, history=history)
    return float(np.mean(np.abs(traj.eval(times))))


# ---------------------------------------------------------------------------
# estimator dispatch
# ---------------------------------------------------------------------------


def _make_basis(model: ModelSpec, L: int, settings: dict):
    domain = settings.get("window", model.t_span)
    kind = settings.get("basis", "sine")
    if kind == "sine":
        return make_sine_basis(L, domain)
    if kind == "bspline":
        return uniform_bspline_testfuncs(
            L,
            domain,
            active_left=bool(settings.get("dirichlet") is not None),
            active_right=bool(settings.get("neumann") is not None),
        )
    raise ValueError(f"unknown test-function basis '{kind}'")


def _run_oc(model: ModelSpec, obs, fit, settings: dict, alpha: float):
    def make_set(L):
        return make_condition_set(
            model,
            _make_basis(model, L, settings),
            dirichlet=settings.get("dirichlet"),
            neumann=settings.get("neumann"),
        )

    weighted = bool(settings.get("weighted", False))
    theta_init = settings.get("theta_init")
    L = settings.get("L")
    L_range = settings.get("L_range")
    if L_range is not None:
        est = oc.select_L(
            model, fit, L_range, make_set=make_set, theta_init=theta_init,
            weighted=weighted, alpha=alpha,
        )
    else:
        cs = make_set(int(L))
        if weighted:
            est = oc.weighted_two_stage(cs, fit, theta_init=theta_init, alpha=alpha)
        else:
            est = oc.minimize(cs, fit, theta_init=theta_init, alpha=alpha)
    if not np.all(np.isfinite(est.theta)):
        raise EstimatorFailure("non-finite parameter estimate")
    return est.theta, est.v_theta, est.conf_int


def _run_ts(model: ModelSpec, obs, fit, settings: dict, alpha: float):
    weight = None
    if "ramp" in settings:
        weight = WeightFunction(a=fit.domain[0], b=fit.domain[1], ramp=settings["ramp"])
    est = ts_estimate(fit, model, weight=weight, theta_init=settings.get("theta_init"))
    return est.theta, None, None


def _run_nls(model: ModelSpec, obs, fit, settings: dict, alpha: float):
    est = nls_estimate(
        obs,
        model,
        x0=settings.get("x0", "known"),
        center=settings.get("center", model.theta_star),
        starts=int(settings.get("starts", 20)),
        dispersion=float(settings.get("dispersion", 0.5)),
        seed=settings.get("seed", 0),
    )
    conf = None
    if est.covariance is not None:
        conf = oc.confidence_intervals(est.theta, est.covariance, alpha)
    return est.theta, est.covariance, conf


_RUNNERS: dict = {"oc": _run_oc, "ts": _run_ts, "nls": _run_nls}


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def _replicate(config: ExperimentConfig, model: ModelSpec, sigma: float, k: int):
    """Run every configured estimator on replicate k; returns a result dict."""
    obs = generate_data(
        model, n=config.n, sigma=sigma, scheme=config.scheme, seed=(config.seed, k)
    )
    constraint = None
    if config.constrain_initial_value and model.x0 is not None:
        constraint = (obs.times[0], model.x0)
    knots = gcv_select(obs, config.knot_candidates, constraint=constraint)
    fit = spline_fit(obs, knots, constraint=constraint)

    out = {}
    for est_cfg in config.estimators:
        name = est_cfg["name"]
        label = est_cfg.get("label", name)
        runner = _RUNNERS.get(name)
        if runner is None:
            raise ValueError(f"unknown estimator '{name}'")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                theta, cov, conf = runner(model, obs, fit, est_cfg, config.alpha)
            out[label] = {"theta": theta, "cov": cov, "conf": conf}
        except (EstimatorFailure, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            out[label] = {"failure": f"{type(exc).__name__}: {exc}"}
    return out


def run_experiment(config: ExperimentConfig, model: Optional[ModelSpec] = None) -> MCReport:
    """Run the experiment and aggregate per-estimator summaries.

    Parallelism across replicates is controlled by the OCESTIM_JOBS
    environment variable (default: sequential).  Aggregation iterates
    replicates in index order, so results do not depend on scheduling.
    """
    if model is None:
        model = get_model(config.model, **config.model_kwargs)
    theta_star = np.asarray(model.theta_star, dtype=float)
    sigma = config.sigma
    if config.sigma_relative:
        sigma = config.sigma * trajectory_scale(model)

    t0 = time.time()
    n_jobs = int(os.environ.get(JOBS_ENV, "1"))
    if n_jobs != 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(config, model, sigma, k) for k in range(config.replicates)
        )
    else:
        results = [_replicate(config, model, sigma, k) for k in range(config.replicates)]
    wall = time.time() - t0

    p = len(theta_star)
    q_ell = chi2.ppf(1.0 - config.alpha, df=p)
    summaries = {}
    for est_cfg in config.estimators:
        label = est_cfg.get("label", est_cfg["name"])
        thetas, traces, hits, ell_hits, failures = [], [], [], [], []
        for k, rep in enumerate(results):
            r = rep[label]
            if "failure" in r:
                failures.append({"replicate": k, "reason": r["failure"]})
                continue
            thetas.append(r["theta"])
            if r["cov"] is not None:
                traces.append(np.trace(r["cov"]))
                diff = theta_star - r["theta"]
                try:
                    ell_hits.append(float(diff @ np.linalg.solve(r["cov"], diff)) <= q_ell)
                except np.linalg.LinAlgError:
                    ell_hits.append(False)
            if r["conf"] is not None:
                lo_hi = r["conf"]
                hits.append(
                    (theta_star >= lo_hi[:, 0] - 1e-12) & (theta_star <= lo_hi[:, 1] + 1e-12)
                )
        thetas = np.asarray(thetas, dtype=float).reshape(-1, p)
        err2 = (thetas - theta_star) ** 2
        summaries[label] = EstimatorSummary(
            name=label,
            n_ok=len(thetas),
            n_failed=len(failures),
            mse=float(np.mean(np.sum(err2, axis=1))) if len(thetas) else np.nan,
            mse_per_coord=err2.mean(axis=0) if len(thetas) else np.full(p, np.nan),
            mean_trace_cov=float(np.mean(traces)) if traces else None,
            coverage_per_coord=np.mean(np.asarray(hits, dtype=float), axis=0) if hits else None,
            coverage_ellipse=float(np.mean(ell_hits)) if ell_hits else None,
            estimates=thetas,
            failures=failures,
        )
    return MCReport(config=config, theta_star=theta_star, summaries=summaries, wall_seconds=wall)
