# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled fixed-step RK4 kernels for the registered benchmark fields.

Mirrors ``ocestim.odesim._rk4_python`` exactly (same step sequence, same
blow-up test) so the compiled and pure-Python paths are interchangeable.
Kind ids must stay in sync with ``ocestim.models``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, sqrt

cnp.import_array()

KIND_EXP = 0
KIND_ALPHA_PINENE = 1
KIND_RICATTI = 2
KIND_FHN = 3
KIND_LINEAR2D = 4

cdef int MAXDIM = 8


cdef inline void _field(int kind, double t, double* x, double* th, double* out) noexcept nogil:
    if kind == 0:  # exponential growth: xdot = th0 * x
        out[0] = th[0] * x[0]
    elif kind == 1:  # alpha-pinene 5-state linear network
        out[0] = -(th[0] + th[1]) * x[0]
        out[1] = th[0] * x[0]
        out[2] = th[1] * x[0] - (th[2] + th[3]) * x[2] + th[4] * x[4]
        out[3] = th[2] * x[2]
        out[4] = th[3] * x[2] - th[4] * x[4]
    elif kind == 2:  # Ricatti with change point: th = (a, c, dprime, T_r)
        out[0] = th[0] * x[0] * x[0] + th[1] * sqrt(t if t > 0 else 0.0)
        if t >= th[3]:
            out[0] -= th[2]
    elif kind == 3:  # FitzHugh-Nagumo: th = (a, b, c)
        out[0] = th[2] * (x[0] - x[0] * x[0] * x[0] / 3.0 + x[1])
        out[1] = -(x[0] - th[0] + th[1] * x[1]) / th[2]
    elif kind == 4:  # constant-coefficient 2-state linear model
        out[0] = -th[0] * x[0] + th[1] * x[1]
        out[1] = x[0] - x[1]


def rk4(int kind, double[::1] theta, double[::1] x0, double[::1] mesh, double bound):
    """RK4 over ``mesh``; returns (states, derivs, blew_up)."""
    cdef Py_ssize_t m = mesh.shape[0]
    cdef int d = <int>x0.shape[0]
    if d > MAXDIM:
        raise ValueError("state dimension exceeds compiled kernel limit")
    states_arr = np.empty((m, d), dtype=np.float64)
    derivs_arr = np.empty((m, d), dtype=np.float64)
    cdef double[:, ::1] states = states_arr
    cdef double[:, ::1] derivs = derivs_arr
    cdef double th[16]
    cdef double xw[8]
    cdef double k1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double xn[8]
    cdef double t, h, v
    cdef Py_ssize_t i
    cdef int j, blew = 0
    cdef Py_ssize_t n_ok = m

    for j in range(<int>theta.shape[0]):
        th[j] = theta[j]
    for j in range(d):
        states[0, j] = x0[j]
        xw[j] = x0[j]
    _field(kind, mesh[0], xw, th, k1)
    for j in range(d):
        derivs[0, j] = k1[j]

    with nogil:
        for i in range(m - 1):
            t = mesh[i]
            h = mesh[i + 1] - t
            for j in range(d):
                k1[j] = derivs[i, j]
            for j in range(d):
                xw[j] = states[i, j] + 0.5 * h * k1[j]
            _field(kind, t + 0.5 * h, xw, th, k2)
            for j in range(d):
                xw[j] = states[i, j] + 0.5 * h * k2[j]
            _field(kind, t + 0.5 * h, xw, th, k3)
            for j in range(d):
                xw[j] = states[i, j] + h * k3[j]
            _field(kind, t + h, xw, th, k4)
            for j in range(d):
                xn[j] = states[i, j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            for j in range(d):
                v = xn[j]
                if not isfinite(v) or fabs(v) > bound:
                    blew = 1
                    break
            if blew:
                n_ok = i + 1
                break
            for j in range(d):
                states[i + 1, j] = xn[j]
                xw[j] = xn[j]
            _field(kind, mesh[i + 1], xw, th, k1)
            for j in range(d):
                derivs[i + 1, j] = k1[j]

    if blew:
        return states_arr[:n_ok], derivs_arr[:n_ok], True
    return states_arr, derivs_arr, False
