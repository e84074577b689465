"""Levenberg-Marquardt least squares with box projection.

Small, self-contained damped Gauss-Newton loop used by both the weak-form
estimator and the trajectory-matching baseline.  The damping parameter is
updated by the gain ratio (actual versus predicted reduction), steps are
projected onto the parameter box, and trial points with non-finite
residuals are treated as rejected steps (the damping grows until the step
stays in the finite region).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

MAX_ITER = 200
STEP_TOL = 1e-10
GRAD_TOL = 1e-12


@dataclass
class LMResult:
    """Terminal state of a Levenberg-Marquardt run."""

    x: np.ndarray
    residual: np.ndarray
    jacobian: np.ndarray
    cost: float  # 0.5 * ||r||^2
    grad_norm: float  # ||J^T r||_inf
    n_iter: int
    step_norm: float
    converged: bool
    message: str


def _try_residual(residual: Callable, x: np.ndarray) -> Optional[np.ndarray]:
    """Residual at x, or None when it cannot be evaluated finitely."""
    try:
        r = np.asarray(residual(x), dtype=float)
    except (FloatingPointError, ValueError, OverflowError):
        return None
    if not np.all(np.isfinite(r)):
        return None
    return r


def levenberg_marquardt(
    residual: Callable,
    jacobian: Callable,
    x0,
    bounds=None,
    max_iter: int = MAX_ITER,
    step_tol: float = STEP_TOL,
    grad_tol: float = GRAD_TOL,
) -> LMResult:
    """Minimize 0.5*||residual(x)||^2 subject to box bounds.

    ``jacobian(x)`` returns the (m, p) Jacobian of the residual.  ``bounds``
    is an optional (lo, hi) pair of length-p arrays; steps are projected
    onto the box.  Convergence: relative step below ``step_tol`` or
    projected-gradient norm below ``grad_tol``.
    """
    x = np.asarray(x0, dtype=float).copy()
    if bounds is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        x = np.clip(x, lo, hi)
    else:
        lo = hi = None

    r = _try_residual(residual, x)
    if r is None:
        raise ValueError("residual not finite at the initial point")
    J = np.asarray(jacobian(x), dtype=float)
    cost = 0.5 * float(r @ r)
    g = J.T @ r
    grad_norm = float(np.max(np.abs(g))) if g.size else 0.0

    diag = np.maximum(np.einsum("ij,ij->j", J, J), 1e-12)
    lam = 1e-3 * float(np.max(diag))
    nu = 2.0
    step_norm = np.inf
    message = "maximum iterations reached"
    converged = False

    it = 0
    for it in range(1, max_iter + 1):
        if grad_norm <= grad_tol * (1.0 + np.sqrt(2.0 * cost)):
            converged, message = True, "gradient tolerance reached"
            break

        H = J.T @ J + lam * np.diag(diag)
        try:
            delta = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(H, -g, rcond=None)[0]
        x_new = x + delta
        if lo is not None:
            x_new = np.clip(x_new, lo, hi)
        step = x_new - x
        step_norm = float(np.linalg.norm(step))

        if step_norm <= step_tol * (1.0 + float(np.linalg.norm(x))):
            converged, message = True, "step tolerance reached"
            break

        r_new = _try_residual(residual, x_new)
        if r_new is None:
            lam *= nu
            nu *= 2.0
            continue
        cost_new = 0.5 * float(r_new @ r_new)
        pred = cost - 0.5 * float((r + J @ step) @ (r + J @ step))
        actual = cost - cost_new

        if actual > 0:
            rho = actual / pred if pred > 0 else 1.0
            x, r, cost = x_new, r_new, cost_new
            J = np.asarray(jacobian(x), dtype=float)
            g = J.T @ r
            grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
            diag = np.maximum(np.einsum("ij,ij->j", J, J), 1e-12)
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            lam *= nu
            nu *= 2.0
            if lam > 1e16 * float(np.max(diag)):
                message = "damping overflow (no acceptable step)"
                break

    return LMResult(
        x=x,
        residual=r,
        jacobian=J,
        cost=cost,
        grad_norm=grad_norm,
        n_iter=it,
        step_norm=step_norm,
        converged=converged,
        message=message,
    )
