"""Fixed-step RK4 integration of parametric ODE/DDE initial value problems.

Fixed stepping (rather than adaptive) keeps Monte Carlo runs deterministic
and reproducible; discontinuity times declared by the vector field are
forced onto the mesh so no step straddles a jump.  Solutions carry node
derivatives so a cubic Hermite dense output is available for quadrature.

The per-step kernel for the registered benchmark models is also available
as a compiled extension (``ocestim._fastrk``); the pure-Python path below
is the fallback and the reference implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

try:
    from . import _fastrk

    HAVE_FASTRK = True
except ImportError:  # pragma: no cover - depends on build environment
    _fastrk = None
    HAVE_FASTRK = False

DEFAULT_BLOWUP_BOUND = 1e6
DEFAULT_SUBSTEPS = 10


@dataclass(frozen=True)
class VectorField:
    """Parametric vector field f(t, x, theta) with optional analytic Jacobians."""

    dim: int
    n_params: int
    f: Callable  # (t, x, theta) -> (d,)
    f_x: Optional[Callable] = None  # -> (d, d)
    f_theta: Optional[Callable] = None  # -> (d, p)
    fx_theta: Optional[Callable] = None  # -> (p, d, d), d(f_x)/d(theta_j)
    discontinuities: Optional[Callable] = None  # theta -> sequence of times
    fast_kind: Optional[int] = None  # id of the compiled per-step kernel
    fast_pack: Optional[Callable] = None  # theta -> kernel parameter vector

    def jumps(self, theta) -> np.ndarray:
        if self.discontinuities is None:
            return np.empty(0)
        return np.asarray(self.discontinuities(theta), dtype=float)


@dataclass(frozen=True)
class DelayedVectorField:
    """Delayed field f(t, x(t), x(t - tau), theta)."""

    dim: int
    n_params: int
    f: Callable  # (t, x, xlag, theta) -> (d,)
    f_x: Optional[Callable] = None  # -> (d, d)
    f_xlag: Optional[Callable] = None  # -> (d, d)
    f_theta: Optional[Callable] = None  # -> (d, p)


@dataclass(frozen=True)
class Trajectory:
    """Solution mesh with node derivatives and blow-up diagnostics."""

    times: np.ndarray  # (m,) fine mesh actually integrated
    states: np.ndarray  # (m, d)
    derivs: np.ndarray = field(repr=False)  # (m, d)
    blew_up: bool = False
    blow_up_time: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def interpolant(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.times, self.states, self.derivs, axis=0)

    def eval(self, grid, order: int = 0) -> np.ndarray:
        """Cubic-Hermite dense output (or its derivative) on a grid, (m, d)."""
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        lo, hi = self.domain
        if np.any(grid < lo - 1e-9) or np.any(grid > hi + 1e-9):
            raise ValueError("evaluation point outside the computed trajectory")
        spl = self.interpolant()
        if order > 0:
            spl = spl.derivative(order)
        return spl(np.clip(grid, lo, hi))


@dataclass(frozen=True)
class HistoryFunction:
    """Initial function for a DDE, covering at least [t0 - tau, t0]."""

    tau: float
    t0: float
    func: Callable  # t -> (d,) vectorized over 1-D arrays

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("delay must be positive")

    def eval(self, grid) -> np.ndarray:
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        if np.any(grid < self.t0 - self.tau - 1e-9):
            raise ValueError("history does not cover the first delay window")
        vals = np.asarray(self.func(grid), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return vals


def constant_history(value, tau: float, t0: float = 0.0) -> HistoryFunction:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return HistoryFunction(tau=tau, t0=t0, func=lambda g: np.tile(value, (len(np.atleast_1d(g)), 1)))


def _build_mesh(grid: np.ndarray, substeps: int, jumps: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    coarse = grid
    if jumps.size:
        jumps = jumps[(jumps > grid[0]) & (jumps < grid[-1])]
        if jumps.size:
            # A node pair (J - delta, J) straddling each jump confines the
            # one RK4 stage that lands on the wrong side of the indicator
            # to a width-delta step, making its contribution negligible.
            delta = 1e-9 * (grid[-1] - grid[0])
            pre = jumps - delta
            pre = pre[pre > grid[0]]
            coarse = np.unique(np.concatenate([grid, jumps, pre]))
    pieces = [
        np.linspace(coarse[i], coarse[i + 1], substeps + 1)[:-1]
        for i in range(len(coarse) - 1)
    ]
    return np.concatenate(pieces + [coarse[-1:]])


def _rk4_python(f, theta, x0, mesh, bound):
    m = len(mesh)
    d = len(x0)
    states = np.empty((m, d))
    derivs = np.empty((m, d))
    states[0] = x0
    derivs[0] = f(mesh[0], x0, theta)
    for i in range(m - 1):
        t, h = mesh[i], mesh[i + 1] - mesh[i]
        x = states[i]
        k1 = derivs[i]
        k2 = f(t + h / 2, x + h / 2 * k1, theta)
        k3 = f(t + h / 2, x + h / 2 * k2, theta)
        k4 = f(t + h, x + h * k3, theta)
        xn = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(xn)) or np.max(np.abs(xn)) > bound:
            return states[: i + 1], derivs[: i + 1], True
        states[i + 1] = xn
        derivs[i + 1] = f(mesh[i + 1], xn, theta)
    return states, derivs, False


def rk4_solve(
    vf: VectorField,
    theta,
    x0,
    grid,
    blow_up_bound: float = DEFAULT_BLOWUP_BOUND,
    substeps: int = DEFAULT_SUBSTEPS,
) -> Trajectory:
    """Classical RK4 on a fine mesh refining ``grid`` by ``substeps``.

    Declared discontinuity times are forced onto the mesh.  Integration
    stops and the blow-up flag is set as soon as the state norm exceeds
    ``blow_up_bound`` or a non-finite value appears.
    """
    if blow_up_bound <= 0:
        raise ValueError("blow-up bound must be positive")
    theta = np.asarray(theta, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    mesh = _build_mesh(np.atleast_1d(grid), substeps, vf.jumps(theta))

    if HAVE_FASTRK and vf.fast_kind is not None:
        packed = theta if vf.fast_pack is None else np.asarray(vf.fast_pack(theta), dtype=float)
        states, derivs, blew = _fastrk.rk4(
            int(vf.fast_kind),
            np.ascontiguousarray(packed),
            np.ascontiguousarray(x0),
            np.ascontiguousarray(mesh),
            float(blow_up_bound),
        )
    else:
        states, derivs, blew = _rk4_python(vf.f, theta, x0, mesh, blow_up_bound)

    n_ok = states.shape[0]
    return Trajectory(
        times=mesh[:n_ok],
        states=states,
        derivs=derivs,
        blew_up=bool(blew),
        blow_up_time=float(mesh[n_ok - 1]) if blew else None,
    )


def dde_solve(
    dvf: DelayedVectorField,
    theta,
    history: HistoryFunction,
    t_end: float,
    blow_up_bound: float = DEFAULT_BLOWUP_BOUND,
    max_step: float = None,
) -> Trajectory:
    """Method of steps for a single-delay DDE with RK4 sub-integration.

    The step divides the delay exactly, so the derivative kinks at
    t0 + k*tau always fall on mesh nodes; lagged states come from the
    history function or from cubic Hermite interpolation of the already
    computed mesh (the lag always points at least one full delay back).
    """
    theta = np.asarray(theta, dtype=float)
    tau, t0 = history.tau, history.t0
    if t_end <= t0:
        raise ValueError("t_end must exceed the history endpoint")
    if max_step is None:
        max_step = tau / 16.0
    n_sub = max(int(np.ceil(tau / max_step)), 1)
    h = tau / n_sub
    m = int(np.ceil((t_end - t0) / h - 1e-12)) + 1
    mesh = t0 + h * np.arange(m)
    mesh[-1] = min(mesh[-1], t_end)

    d = dvf.dim
    states = np.empty((m, d))
    derivs = np.empty((m, d))
    x0 = history.eval(np.array([t0]))[0]
    states[0] = x0

    def lagged(t, upto):
        s = t - tau
        if s <= t0 + 1e-12:
            return history.eval(np.array([s]))[0]
        # s falls in the already-computed portion of the mesh
        i = min(int(np.floor((s - t0) / h)), upto - 1)
        tl = mesh[i]
        u = (s - tl) / h
        if u < 1e-12:
            return states[i]
        x_l, x_r = states[i], states[i + 1]
        d_l, d_r = derivs[i], derivs[i + 1]
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u**2 * (3 - 2 * u)
        h11 = u**2 * (u - 1)
        return h00 * x_l + h10 * h * d_l + h01 * x_r + h11 * h * d_r

    derivs[0] = dvf.f(t0, x0, history.eval(np.array([t0 - tau]))[0], theta)
    for i in range(m - 1):
        t = mesh[i]
        hi = mesh[i + 1] - mesh[i]
        x = states[i]
        k1 = derivs[i]
        k2 = dvf.f(t + hi / 2, x + hi / 2 * k1, lagged(t + hi / 2, i + 1), theta)
        k3 = dvf.f(t + hi / 2, x + hi / 2 * k2, lagged(t + hi / 2, i + 1), theta)
        k4 = dvf.f(t + hi, x + hi * k3, lagged(t + hi, i + 1), theta)
        xn = x + hi / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(xn)) or np.max(np.abs(xn)) > blow_up_bound:
            return Trajectory(
                times=mesh[: i + 1],
                states=states[: i + 1],
                derivs=derivs[: i + 1],
                blew_up=True,
                blow_up_time=float(mesh[i]),
            )
        states[i + 1] = xn
        derivs[i + 1] = dvf.f(mesh[i + 1], xn, lagged(mesh[i + 1], i + 1), theta)
    return Trajectory(times=mesh, states=states, derivs=derivs)
