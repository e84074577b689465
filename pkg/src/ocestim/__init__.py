"""Parameter estimation for ODE/DDE models via weak-form orthogonal conditions.

The package fits differential-equation parameters from noisy trajectory
observations: a regression-spline smoother produces a nonparametric curve,
weak-form conditions built from orthonormal test functions turn the model
into estimating equations, and the estimator minimizes their squared norm
with a closed-form asymptotic covariance.  Two-step gradient matching and
trajectory-fitting least squares are included as baselines, together with
a Monte Carlo benchmark harness and a command-line front end.
"""

from .basis import (
    KnotVector,
    TestFunctionBasis,
    make_sine_basis,
    make_bspline_testfuncs,
    uniform_bspline_testfuncs,
    uniform_knots,
)
from .baselines import BaselineEstimate, EstimatorFailure, WeightFunction, nls_estimate, ts_estimate
from .conditions import (
    ConditionSet,
    ConditionVector,
    coefficient_matrices,
    eval_conditions,
    eval_jacobian_theta,
    linear_condition_matrices,
    make_condition_set,
)
from .mc import ExperimentConfig, MCReport, generate_data, run_experiment, trajectory_scale
from .models import MODELS, ModelSpec, get_model
from .oc import (
    OCEstimate,
    WeightMatrix,
    condition_covariance,
    confidence_intervals,
    estimator_covariance,
    gaussian_quantile,
    minimize,
    select_L,
    weighted_two_stage,
)
from .odesim import (
    HAVE_FASTRK,
    DelayedVectorField,
    HistoryFunction,
    Trajectory,
    VectorField,
    constant_history,
    dde_solve,
    rk4_solve,
)
from .quadrature import QuadratureRule, gauss_legendre, inner_product, integrate
from .smoother import Observations, SplineFit, fit, gcv_select

__version__ = "0.1.0"

__all__ = [
    "BaselineEstimate",
    "ConditionSet",
    "ConditionVector",
    "DelayedVectorField",
    "EstimatorFailure",
    "ExperimentConfig",
    "HAVE_FASTRK",
    "HistoryFunction",
    "KnotVector",
    "MCReport",
    "MODELS",
    "ModelSpec",
    "Observations",
    "OCEstimate",
    "QuadratureRule",
    "SplineFit",
    "TestFunctionBasis",
    "Trajectory",
    "VectorField",
    "WeightFunction",
    "WeightMatrix",
    "coefficient_matrices",
    "condition_covariance",
    "confidence_intervals",
    "constant_history",
    "dde_solve",
    "estimator_covariance",
    "eval_conditions",
    "eval_jacobian_theta",
    "fit",
    "gauss_legendre",
    "gaussian_quantile",
    "gcv_select",
    "generate_data",
    "get_model",
    "inner_product",
    "integrate",
    "linear_condition_matrices",
    "make_bspline_testfuncs",
    "make_condition_set",
    "make_sine_basis",
    "minimize",
    "nls_estimate",
    "rk4_solve",
    "run_experiment",
    "select_L",
    "trajectory_scale",
    "ts_estimate",
    "uniform_bspline_testfuncs",
    "uniform_knots",
    "weighted_two_stage",
]
