"""Weak-form condition engine.

A condition pairs one state equation with one test function: the residual

    e = <f_j(., g(.), theta), phi> + <g_j, phi_dot> + boundary bracket

vanishes at the true parameter when ``g`` solves the differential equation,
because integration by parts turns it into <g_dot_j - f_j, phi>.  This
module evaluates stacked condition vectors over a model's target equations,
their Jacobians in theta, and their derivatives in the directions of the
smoothing-spline coefficients (the matrices behind the closed-form
condition covariance).

Boundary-augmented members:

* a left-active member with a known initial value ``x(a) = g0`` keeps the
  standard residual and adds the exact bracket ``g0_j * phi(a)``;
* a right-active member with a known terminal derivative ``x_dot(b) = v``
  uses the differentiated weak form
  ``<(f_x f)_j, phi> + <f_j, phi_dot> - phi(b) * v_j``,
  which requires f to be C^1 in the state.

Delay models evaluate the field at the curve and its lagged values; the
condition window must sit far enough inside the data interval that the
lag never leaves it.  Change-point models carry an exactly integrated
step-input term supplied by the model's adjustment.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional, Union

import numpy as np

from .basis import TestFunctionBasis
from .models import ModelSpec
from .odesim import Trajectory
from .quadrature import QuadratureRule, gauss_legendre
from .smoother import SplineFit, design_matrix

_FD_STEP = 1e-6


def _finite(arr, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite {what} encountered")
    return arr


def _broadcast_nodes(arr, core_shape: tuple, q: int) -> np.ndarray:
    """Give a field-derivative result a trailing node axis if it is constant."""
    arr = np.asarray(arr, dtype=float)
    if arr.shape == core_shape + (q,):
        return arr
    if arr.shape == core_shape:
        return np.broadcast_to(arr[..., None], core_shape + (q,))
    raise ValueError(f"field derivative has shape {arr.shape}, expected {core_shape} or {core_shape + (q,)}")


def _batch_call(fn, nodes, stacked_args, core_shape: tuple) -> np.ndarray:
    """Evaluate a field callable at all nodes, batched if possible.

    ``stacked_args`` are arrays of shape (d, q) passed between the time and
    parameter arguments.  Falls back to a per-node loop when the callable
    only supports scalar time.
    """
    q = len(nodes)
    try:
        vals = np.asarray(fn(nodes, *stacked_args), dtype=float)
        return _broadcast_nodes(vals, core_shape, q)
    except (ValueError, TypeError):
        cols = [
            np.asarray(fn(nodes[i], *[a[..., i] for a in stacked_args[:-1]], stacked_args[-1]), dtype=float)
            for i in range(q)
        ]
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ConditionSet:
    """Immutable bundle of model, test functions and quadrature.

    Conditions are stacked by target equation: block ``j`` holds the
    ``basis.size`` members applied to state equation ``equations[j]``.
    ``dirichlet`` (known initial state) requires a left-active basis;
    ``neumann`` (known terminal derivative) requires a right-active one.
    """

    model: ModelSpec
    basis: TestFunctionBasis
    rule: QuadratureRule
    equations: tuple
    dirichlet: Optional[np.ndarray] = None
    neumann: Optional[np.ndarray] = None
    _phi: np.ndarray = dc_field(init=False, repr=False)
    _dphi: np.ndarray = dc_field(init=False, repr=False)
    _phi_a: np.ndarray = dc_field(init=False, repr=False)
    _phi_b: np.ndarray = dc_field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(int(j) for j in self.equations))
        if not self.equations:
            raise ValueError("at least one target equation is required")
        if any(j < 0 or j >= self.model.dim for j in self.equations):
            raise ValueError("target equation index out of range")
        if abs(self.rule.a - self.basis.a) > 1e-9 or abs(self.rule.b - self.basis.b) > 1e-9:
            raise ValueError("quadrature rule must cover exactly the basis domain")
        if self.n_conditions <= self.model.n_params:
            raise ValueError(
                f"need more conditions ({self.n_conditions}) than parameters ({self.model.n_params})"
            )
        if self.dirichlet is not None:
            if not self.basis.active_left:
                raise ValueError("known initial value requires a left-active basis member")
            d0 = np.atleast_1d(np.asarray(self.dirichlet, dtype=float))
            if len(d0) != self.model.dim:
                raise ValueError("initial value must have one entry per state")
            object.__setattr__(self, "dirichlet", d0)
        elif self.basis.active_left:
            raise ValueError("left-active basis member without a known initial value")
        if self.neumann is not None:
            if not self.basis.active_right:
                raise ValueError("known terminal derivative requires a right-active basis member")
            if self.model.is_delayed:
                raise ValueError("terminal-derivative conditions are not defined for delay models")
            if self.model.adjustment is not None:
                raise ValueError(
                    "terminal-derivative condition requires a C^1 field; "
                    "this model's field has a state discontinuity"
                )
            if self.model.condition_field.f_x is None:
                raise ValueError("terminal-derivative condition requires an analytic state Jacobian")
            nv = np.atleast_1d(np.asarray(self.neumann, dtype=float))
            if len(nv) != self.model.dim:
                raise ValueError("terminal derivative must have one entry per state")
            object.__setattr__(self, "neumann", nv)
        elif self.basis.active_right:
            raise ValueError("right-active basis member without a known terminal derivative")
        if self.model.adjustment is not None and self.model.dim != 1:
            raise ValueError("change-point adjustment is only supported for scalar models")
        if self.model.is_delayed and self.model.adjustment is not None:
            raise ValueError("delay models with change-point adjustments are not supported")

        nodes = self.rule.nodes
        object.__setattr__(self, "_phi", self.basis.eval(nodes, order=0))
        object.__setattr__(self, "_dphi", self.basis.eval(nodes, order=1))
        pa, pb = self.basis.boundary_values()
        object.__setattr__(self, "_phi_a", pa)
        object.__setattr__(self, "_phi_b", pb)

    @property
    def n_members(self) -> int:
        return self.basis.size

    @property
    def n_conditions(self) -> int:
        return len(self.equations) * self.basis.size

    @property
    def window(self) -> tuple:
        return self.basis.a, self.basis.b

    # -- curve access -------------------------------------------------------

    def _check_delay_window(self, curve):
        tau = self.model.tau
        lo, hi = curve.domain if hasattr(curve, "domain") else (self.basis.a - tau, self.basis.b)
        if self.basis.a - tau < lo - 1e-9 or self.basis.b > hi + 1e-9:
            raise ValueError(
                "condition window and its lag must both lie inside the curve domain: "
                f"need [{self.basis.a - tau}, {self.basis.b}] within [{lo}, {hi}]"
            )

    def _curve_nodes(self, curve):
        """Curve values on the quadrature nodes, (q, d), plus lagged values for DDEs."""
        nodes = self.rule.nodes
        g = _finite(curve.eval(nodes), "curve value")
        if self.model.is_delayed:
            self._check_delay_window(curve)
            glag = _finite(curve.eval(nodes - self.model.tau), "lagged curve value")
            return g, glag
        return g, None

    def _field_values(self, g, glag, theta):
        """Field values along the curve, (d, q)."""
        d, q = self.model.dim, len(self.rule.nodes)
        if self.model.is_delayed:
            vf = self.model.delayed_field
            F = _batch_call(vf.f, self.rule.nodes, (g.T, glag.T, theta), (d,))
        else:
            vf = self.model.condition_field
            F = _batch_call(vf.f, self.rule.nodes, (g.T, theta), (d,))
        return _finite(F, "field value")


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionVector:
    """Stacked condition values with the evaluation point recorded."""

    values: np.ndarray
    theta: np.ndarray
    curve_id: str

    def __post_init__(self):
        object.__setattr__(self, "values", _finite(self.values, "condition value"))


@dataclass(frozen=True)
class ConditionJacobians:
    """Derivatives of the condition vector.

    ``j_theta`` is (n_conditions, p); ``coef_mats``, when present, stacks the
    per-state coefficient-direction matrices as (d, n_conditions, K).
    """

    j_theta: Optional[np.ndarray] = None
    coef_mats: Optional[np.ndarray] = None


Curve = Union[SplineFit, Trajectory]


# ---------------------------------------------------------------------------
# construction helper
# ---------------------------------------------------------------------------


def make_condition_set(
    model: ModelSpec,
    basis: TestFunctionBasis,
    rule: Optional[QuadratureRule] = None,
    dirichlet=None,
    neumann=None,
    equations=None,
) -> ConditionSet:
    """Build a condition set with a sensible default quadrature rule.

    The default rule is composite Gauss-Legendre over the basis domain with
    panel breaks at the basis's spline knots (if any) and, for delay models,
    at the lag multiples where the solution has derivative kinks.
    """
    if equations is None:
        equations = model.target_equations
    if rule is None:
        breaks = []
        if basis.knots is not None:
            breaks.extend(basis.knots.interior)
        if model.field is not None and model.theta_star is not None:
            # the solution has derivative kinks at the field's jump times
            breaks.extend(model.field.jumps(model.theta_star))
        if model.is_delayed and model.tau:
            k0 = model.t_span[0]
            k = k0 + model.tau
            while k < basis.b:
                if k > basis.a:
                    breaks.append(k)
                k += model.tau
        rule = gauss_legendre(basis.a, basis.b, breakpoints=breaks if breaks else None)
    return ConditionSet(
        model=model,
        basis=basis,
        rule=rule,
        equations=tuple(equations),
        dirichlet=dirichlet,
        neumann=neumann,
    )


# ---------------------------------------------------------------------------
# condition values
# ---------------------------------------------------------------------------


def _neumann_member_values(cs: ConditionSet, g, F, theta) -> np.ndarray:
    """Right-active member residuals, one per target equation.

    Uses the differentiated weak form: the second derivative of the solution
    is (f_x f) along the curve, and the known terminal derivative enters as
    the boundary bracket.
    """
    vf = cs.model.condition_field
    d, q = cs.model.dim, len(cs.rule.nodes)
    fx = _batch_call(vf.f_x, cs.rule.nodes, (g.T, theta), (d, d))
    v = np.einsum("jmq,mq->jq", fx, F)  # (f_x f) along the curve
    w = cs.rule.weights
    phi_r = cs._phi[:, -1]
    dphi_r = cs._dphi[:, -1]
    out = np.empty(len(cs.equations))
    for b, j in enumerate(cs.equations):
        out[b] = w @ (v[j] * phi_r) + w @ (F[j] * dphi_r) - cs._phi_b[-1] * cs.neumann[j]
    return out


def _condition_values(cs: ConditionSet, curve: Curve, theta: np.ndarray) -> np.ndarray:
    g, glag = cs._curve_nodes(curve)
    F = cs._field_values(g, glag, theta)
    w = cs.rule.weights
    L = cs.n_members
    wphi = w[:, None] * cs._phi  # (q, L)
    wdphi = w[:, None] * cs._dphi

    adj = None
    if cs.model.adjustment is not None:
        adj = cs.model.adjustment.values(theta, cs.basis)

    blocks = []
    for j in cs.equations:
        e = F[j] @ wphi + g[:, j] @ wdphi  # (L,)
        if cs.basis.active_left:
            # known initial value: exact boundary bracket for the left member
            e[0] += cs.dirichlet[j] * cs._phi_a[0]
        if adj is not None and j == 0:
            e = e + adj
        blocks.append(e)
    values = np.concatenate(blocks)

    if cs.basis.active_right:
        nm = _neumann_member_values(cs, g, F, theta)
        for b in range(len(cs.equations)):
            values[b * L + L - 1] = nm[b]
    return values


def eval_conditions(cs: ConditionSet, curve: Curve, theta) -> ConditionVector:
    """Stacked weak-form condition vector e_L(curve, theta)."""
    theta = np.asarray(theta, dtype=float)
    values = _condition_values(cs, curve, theta)
    return ConditionVector(values=values, theta=theta, curve_id=hex(id(curve)))


# ---------------------------------------------------------------------------
# theta Jacobian
# ---------------------------------------------------------------------------


def _fd_jacobian(cs: ConditionSet, curve: Curve, theta: np.ndarray) -> np.ndarray:
    p = len(theta)
    J = np.empty((cs.n_conditions, p))
    for r in range(p):
        h = _FD_STEP * (1.0 + abs(theta[r]))
        tp, tm = theta.copy(), theta.copy()
        tp[r] += h
        tm[r] -= h
        J[:, r] = (_condition_values(cs, curve, tp) - _condition_values(cs, curve, tm)) / (2 * h)
    return J


def _neumann_jac_theta(cs: ConditionSet, g, F, FT, theta) -> np.ndarray:
    """Analytic theta-derivative of the right-active member rows, (n_eq, p)."""
    vf = cs.model.condition_field
    d, q = cs.model.dim, len(cs.rule.nodes)
    p = cs.model.n_params
    fx = _batch_call(vf.f_x, cs.rule.nodes, (g.T, theta), (d, d))
    fxth = _batch_call(vf.fx_theta, cs.rule.nodes, (g.T, theta), (p, d, d))
    # d(f_x f)/dtheta_r = (d f_x/dtheta_r) f + f_x (d f/dtheta_r)
    dv = np.einsum("rjmq,mq->jrq", fxth, F) + np.einsum("jmq,mrq->jrq", fx, FT)
    w = cs.rule.weights
    phi_r = cs._phi[:, -1]
    dphi_r = cs._dphi[:, -1]
    out = np.empty((len(cs.equations), p))
    for b, j in enumerate(cs.equations):
        out[b] = (dv[j] * w * phi_r).sum(axis=-1) + (FT[j] * w * dphi_r).sum(axis=-1)
    return out


def eval_jacobian_theta(cs: ConditionSet, curve: Curve, theta) -> ConditionJacobians:
    """Jacobian of the condition vector in theta, analytic when available.

    Falls back to central finite differences when the model lacks an
    analytic parameter derivative (or, for the terminal-derivative member,
    the mixed second derivative).
    """
    theta = np.asarray(theta, dtype=float)
    vf = cs.model.delayed_field if cs.model.is_delayed else cs.model.condition_field
    if vf.f_theta is None:
        return ConditionJacobians(j_theta=_fd_jacobian(cs, curve, theta))

    g, glag = cs._curve_nodes(curve)
    d, p, q = cs.model.dim, cs.model.n_params, len(cs.rule.nodes)
    if cs.model.is_delayed:
        FT = _batch_call(vf.f_theta, cs.rule.nodes, (g.T, glag.T, theta), (d, p))
    else:
        FT = _batch_call(vf.f_theta, cs.rule.nodes, (g.T, theta), (d, p))

    w = cs.rule.weights
    wphi = w[:, None] * cs._phi  # (q, L)
    L = cs.n_members

    adj_jac = None
    if cs.model.adjustment is not None:
        adj_jac = cs.model.adjustment.jac_theta(theta, cs.basis, p)

    blocks = []
    for j in cs.equations:
        Jb = FT[j] @ wphi  # (p, L)
        Jb = Jb.T  # (L, p)
        if adj_jac is not None and j == 0:
            Jb = Jb + adj_jac
        blocks.append(Jb)
    J = np.vstack(blocks)

    if cs.basis.active_right:
        F = cs._field_values(g, glag, theta)
        if cs.model.condition_field.fx_theta is not None:
            rows = _neumann_jac_theta(cs, g, F, FT, theta)
        else:
            rows = np.empty((len(cs.equations), p))
            for r in range(p):
                h = _FD_STEP * (1.0 + abs(theta[r]))
                tp, tm = theta.copy(), theta.copy()
                tp[r] += h
                tm[r] -= h
                Fp = cs._field_values(g, glag, tp)
                Fm = cs._field_values(g, glag, tm)
                rows[:, r] = (
                    _neumann_member_values(cs, g, Fp, tp) - _neumann_member_values(cs, g, Fm, tm)
                ) / (2 * h)
        for b in range(len(cs.equations)):
            J[b * L + L - 1] = rows[b]
    return ConditionJacobians(j_theta=_finite(J, "condition Jacobian"))


# ---------------------------------------------------------------------------
# coefficient-direction matrices
# ---------------------------------------------------------------------------


def coefficient_matrices(cs: ConditionSet, fit: SplineFit, theta) -> np.ndarray:
    """Derivatives of the conditions in the spline-coefficient directions.

    Returns an array of shape (d, n_conditions, K): entry (m, i, k) is the
    derivative of condition i with respect to coefficient k of state m's
    smoothing spline, with the field's state Jacobian evaluated along the
    fitted curve.  These are the matrices that propagate coefficient noise
    into the conditions (for linear-in-state models the conditions are
    exactly affine in the coefficients).
    """
    if not isinstance(fit, SplineFit):
        raise TypeError("coefficient directions require a spline fit, not a raw trajectory")
    theta = np.asarray(theta, dtype=float)
    nodes = cs.rule.nodes
    g, glag = cs._curve_nodes(fit)
    d, q = cs.model.dim, len(nodes)
    K = fit.n_basis
    L = cs.n_members
    w = cs.rule.weights
    P = design_matrix(fit.knots, nodes)  # (q, K)
    wP = w[:, None] * P

    if cs.model.is_delayed:
        vf = cs.model.delayed_field
        fx = _batch_call(vf.f_x, nodes, (g.T, glag.T, theta), (d, d))
        fxlag = _batch_call(vf.f_xlag, nodes, (g.T, glag.T, theta), (d, d))
        Plag = design_matrix(fit.knots, nodes - cs.model.tau)
        wPlag = w[:, None] * Plag
    else:
        vf = cs.model.condition_field
        fx = _batch_call(vf.f_x, nodes, (g.T, theta), (d, d))
        fxlag, wPlag = None, None

    dphi_P = cs._dphi.T @ wP  # (L, K), shared across states

    C = np.zeros((d, cs.n_conditions, K))
    for m in range(d):
        for b, j in enumerate(cs.equations):
            rows = cs._phi.T @ (fx[j, m][:, None] * wP)  # (L, K)
            if fxlag is not None:
                rows = rows + cs._phi.T @ (fxlag[j, m][:, None] * wPlag)
            if j == m:
                rows = rows + dphi_P
            C[m, b * L : (b + 1) * L] = rows

    if cs.basis.active_right:
        _neumann_coef_rows(cs, fit, g, theta, P, C)
    return C


def _neumann_coef_rows(cs: ConditionSet, fit: SplineFit, g, theta, P, C):
    """Fill the right-active member's coefficient derivatives by central FD.

    The differentiated weak form involves the field's second state
    derivative, which models do not provide analytically; one finite
    difference per (state, coefficient) direction is cheap and exact to
    O(h^2) (exact in h for linear-in-state fields).
    """
    L = cs.n_members
    d, K = C.shape[0], C.shape[2]
    scale = max(1.0, float(np.max(np.abs(g))))
    h = _FD_STEP * scale
    for m in range(d):
        for k in range(K):
            gp = g.copy()
            gp[:, m] += h * P[:, k]
            gm = g.copy()
            gm[:, m] -= h * P[:, k]
            Fp = cs._field_values(gp, None, theta)
            Fm = cs._field_values(gm, None, theta)
            vp = _neumann_member_values(cs, gp, Fp, theta)
            vm = _neumann_member_values(cs, gm, Fm, theta)
            rows = (vp - vm) / (2 * h)
            for b in range(len(cs.equations)):
                C[m, b * L + L - 1, k] = rows[b]


def linear_condition_matrices(cs: ConditionSet, theta, fit: SplineFit):
    """Per-state condition matrices (A_1, ..., A_d) with e ~ sum_m A_m c_m.

    Exact for fields linear in the state with no forcing; otherwise these
    are the first-order expansion matrices around the fitted curve, with
    the state Jacobian evaluated along that curve.
    """
    C = coefficient_matrices(cs, fit, theta)
    return tuple(C[m] for m in range(C.shape[0]))
