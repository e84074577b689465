"""Test-function families and B-spline regression bases.

Two families of test functions are provided, both L2-orthonormal on their
domain and vanishing at the endpoints unless a boundary flag is set:

* sine members ``sqrt(2/T) * sin(l*pi*(t-a)/T)`` with closed-form
  derivatives and antiderivatives;
* compactly supported B-spline members, orthonormalized by modified
  Gram-Schmidt so the family stays an orthonormal sequence while keeping
  the compact-support envelope.

Boundary-active members (nonzero value at one endpoint) are used to
inject known boundary information into the condition set; they are
orthogonalized against the interior members but kept first/last so their
boundary activity survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .quadrature import gauss_legendre

_ENDPOINT_TOL = 1e-9


@dataclass(frozen=True)
class KnotVector:
    """Interval endpoints, sorted interior knots and polynomial degree."""

    a: float
    b: float
    interior: np.ndarray
    degree: int

    def __post_init__(self):
        if self.b <= self.a:
            raise ValueError(f"degenerate interval [{self.a}, {self.b}]")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        interior = np.asarray(self.interior, dtype=float)
        object.__setattr__(self, "interior", interior)
        if interior.size:
            if np.any(np.diff(interior) < 0):
                raise ValueError("interior knots must be non-decreasing")
            if interior[0] <= self.a or interior[-1] >= self.b:
                raise ValueError("interior knots must lie strictly inside the interval")

    @property
    def clamped(self) -> np.ndarray:
        """Expanded knot sequence with degree+1 boundary repetitions."""
        return np.concatenate(
            [
                np.full(self.degree + 1, self.a),
                self.interior,
                np.full(self.degree + 1, self.b),
            ]
        )

    @property
    def n_basis(self) -> int:
        return len(self.interior) + self.degree + 1


def uniform_knots(a: float, b: float, n_interior: int, degree: int = 3) -> KnotVector:
    """Uniform interior knot grid on [a, b]."""
    interior = np.linspace(a, b, n_interior + 2)[1:-1]
    return KnotVector(a=float(a), b=float(b), interior=interior, degree=degree)


@dataclass(frozen=True)
class BasisMatrix:
    """Evaluations of basis members on a grid (rows = points, cols = members)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape[0] != len(self.grid):
            raise ValueError("row count must match grid length")


@dataclass(frozen=True)
class TestFunctionBasis:
    """Orthonormal family of test functions on [a, b].

    ``size`` counts all members including boundary-active ones; members are
    ordered left-boundary member (if any), interior members, right-boundary
    member (if any).  Immutable after construction.
    """

    kind: str
    size: int
    a: float
    b: float
    active_left: bool = False
    active_right: bool = False
    knots: KnotVector | None = None
    _coef: np.ndarray | None = field(default=None, repr=False)

    @property
    def domain_length(self) -> float:
        return self.b - self.a

    def _check_grid(self, grid: np.ndarray):
        if np.any(grid < self.a - _ENDPOINT_TOL) or np.any(grid > self.b + _ENDPOINT_TOL):
            raise ValueError("evaluation point outside the basis domain")

    def eval(self, grid, order: int = 0) -> np.ndarray:
        """Evaluate members (order 0), first derivatives (1) or
        antiderivatives anchored at ``a`` (-1) on a grid.

        Returns an array of shape (len(grid), size).
        """
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        self._check_grid(grid)
        if order not in (-1, 0, 1):
            raise ValueError("order must be -1, 0 or 1")
        if self.kind == "sine":
            return self._eval_sine(grid, order)
        return self._eval_bspline(grid, order)

    def _eval_sine(self, grid, order):
        T = self.domain_length
        s = (grid - self.a) / T
        ell = np.arange(1, self.size + 1)
        amp = np.sqrt(2.0 / T)
        arg = np.pi * np.outer(s, ell)
        if order == 0:
            return amp * np.sin(arg)
        if order == 1:
            return amp * (np.pi * ell / T) * np.cos(arg)
        return amp * (T / (np.pi * ell)) * (1.0 - np.cos(arg))

    def _eval_bspline(self, grid, order):
        kv = self.knots
        spl = BSpline(kv.clamped, self._coef.T, kv.degree, extrapolate=False)
        if order == 1:
            spl = spl.derivative(1)
        elif order == -1:
            spl = spl.antiderivative(1)
        g = np.clip(grid, kv.a, kv.b)
        vals = spl(g)
        if order == -1:
            vals = vals - spl(np.array([kv.a]))
        return np.nan_to_num(vals)

    def boundary_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Member values at the left and right endpoint."""
        vals = self.eval(np.array([self.a, self.b]), order=0)
        return vals[0], vals[1]


def make_sine_basis(L: int, domain) -> TestFunctionBasis:
    """Sine test functions sqrt(2/T)*sin(l*pi*s), orthonormal on [a, b]."""
    a, b = float(domain[0]), float(domain[1])
    if L < 1:
        raise ValueError("L must be positive")
    if b <= a:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    return TestFunctionBasis(kind="sine", size=L, a=a, b=b)


def make_bspline_testfuncs(
    knots: KnotVector,
    L: int,
    active_left: bool = False,
    active_right: bool = False,
) -> TestFunctionBasis:
    """Compact-support B-spline test functions, L2-orthonormalized.

    The L interior members vanish at both endpoints; boundary flags add an
    extra member with nonzero value at the corresponding endpoint (placed
    first for the left flag, last for the right), orthogonalized against
    the interior members.
    """
    if L < 1:
        raise ValueError("L must be positive")
    K = knots.n_basis
    n_interior_members = K - 2
    if L > n_interior_members:
        raise ValueError(
            f"knot vector supports at most {n_interior_members} interior members, got L={L}"
        )
    # Spread the selected members across the interval.
    idx = np.round(np.linspace(1, K - 2, L)).astype(int)
    if len(np.unique(idx)) < L:
        raise ValueError("insufficient knots for distinct members")

    # Quadrature exact for products of two degree-`degree` splines.
    rule = gauss_legendre(
        knots.a,
        knots.b,
        panels=1,
        nodes_per_panel=knots.degree + 2,
        breakpoints=knots.interior,
    )
    design = BSpline(knots.clamped, np.eye(K), knots.degree, extrapolate=False)(rule.nodes)
    design = np.nan_to_num(design)

    def orthonormalize(rows: np.ndarray) -> np.ndarray:
        # Modified Gram-Schmidt under the L2 inner product on [a, b].
        out = rows.astype(float).copy()
        for i in range(out.shape[0]):
            fi = design @ out[i]
            for j in range(i):
                fj = design @ out[j]
                out[i] -= (rule.weights @ (fi * fj)) * out[j]
                fi = design @ out[i]
            norm = np.sqrt(rule.weights @ (fi * fi))
            if norm < 1e-12:
                raise ValueError("linearly dependent test-function members")
            out[i] /= norm
        return out

    interior_coef = orthonormalize(np.eye(K)[idx])

    rows = [interior_coef]
    if active_left:
        left = np.eye(K)[0]
        fl = design @ left
        for j in range(L):
            fj = design @ interior_coef[j]
            left = left - (rule.weights @ (fl * fj)) * interior_coef[j]
            fl = design @ left
        left = left / np.sqrt(rule.weights @ (fl * fl))
        rows.insert(0, left[None, :])
    if active_right:
        right = np.eye(K)[K - 1]
        fr = design @ right
        for j in range(L):
            fj = design @ interior_coef[j]
            right = right - (rule.weights @ (fr * fj)) * interior_coef[j]
            fr = design @ right
        right = right / np.sqrt(rule.weights @ (fr * fr))
        rows.append(right[None, :])
    coef = np.vstack(rows)

    return TestFunctionBasis(
        kind="bspline",
        size=coef.shape[0],
        a=knots.a,
        b=knots.b,
        active_left=active_left,
        active_right=active_right,
        knots=knots,
        _coef=coef,
    )


def uniform_bspline_testfuncs(
    L: int,
    domain,
    degree: int = 3,
    active_left: bool = False,
    active_right: bool = False,
) -> TestFunctionBasis:
    """B-spline test functions on a uniform knot grid sized to support L members."""
    a, b = float(domain[0]), float(domain[1])
    n_interior = max(L + 1 - degree, 1)
    kv = uniform_knots(a, b, n_interior, degree=degree)
    while kv.n_basis - 2 < L:
        n_interior += 1
        kv = uniform_knots(a, b, n_interior, degree=degree)
    return make_bspline_testfuncs(kv, L, active_left=active_left, active_right=active_right)


def eval_basis(basis: TestFunctionBasis, grid, order: int = 0) -> BasisMatrix:
    """Evaluate a basis on a grid; order 0 = values, 1 = derivatives,
    -1 = antiderivatives anchored to zero at the left endpoint."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return BasisMatrix(grid=grid, values=basis.eval(grid, order=order))
