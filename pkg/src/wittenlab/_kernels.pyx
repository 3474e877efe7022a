# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled theta-scheme step for 1-D tridiagonal (optionally cyclic) operators.

The operator is given by three bands: ``lo[i]`` multiplies ``u[i-1]``,
``dg[i]`` multiplies ``u[i]`` and ``up[i]`` multiplies ``u[i+1]``.  For a
cyclic operator ``lo[0]`` couples to ``u[n-1]`` and ``up[n-1]`` to ``u[0]``;
otherwise those two entries are ignored.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _thomas(const double[:] a, const double[:] b, const double[:] c,
                  double[:, :] x, double[:] cp) noexcept nogil:
    # in-place solve of the tridiagonal system (a, b, c) for every column of x
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double m
    cp[0] = c[0] / b[0]
    for j in range(k):
        x[0, j] = x[0, j] / b[0]
    for i in range(1, n):
        m = 1.0 / (b[i] - a[i] * cp[i - 1])
        cp[i] = c[i] * m
        for j in range(k):
            x[i, j] = (x[i, j] - a[i] * x[i - 1, j]) * m
    for i in range(n - 2, -1, -1):
        for j in range(k):
            x[i, j] = x[i, j] - cp[i] * x[i + 1, j]


def theta_step(double[:] lo, double[:] dg, double[:] up, bint periodic,
               u_in, double dt, double theta):
    """Advance ``u`` (shape ``(n, k)``) by ``(I - theta dt L) u' = (I + (1-theta) dt L) u``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[:, :] u = arr
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t k = u.shape[1]
    cdef Py_ssize_t i, j, im, ip
    cdef double ex = (1.0 - theta) * dt
    cdef double imp = theta * dt
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, :] rhs = out_arr
    cdef double[:] a = np.empty(n)
    cdef double[:] b = np.empty(n)
    cdef double[:] c = np.empty(n)
    cdef double[:] cp = np.empty(n)
    cdef double gamma, vy, vz, a0, cn
    cdef double[:, :] z

    with nogil:
        for i in range(n):
            im = i - 1
            ip = i + 1
            if im < 0:
                im = n - 1
            if ip >= n:
                ip = 0
            for j in range(k):
                rhs[i, j] = u[i, j] + ex * dg[i] * u[i, j]
                if periodic or i > 0:
                    rhs[i, j] += ex * lo[i] * u[im, j]
                if periodic or i < n - 1:
                    rhs[i, j] += ex * up[i] * u[ip, j]
            a[i] = -imp * lo[i]
            b[i] = 1.0 - imp * dg[i]
            c[i] = -imp * up[i]
        if not periodic:
            a[0] = 0.0
            c[n - 1] = 0.0

    if not periodic:
        with nogil:
            _thomas(a, b, c, rhs, cp)
        return out_arr

    # cyclic system by Sherman-Morrison on the corner entries
    a0 = a[0]
    cn = c[n - 1]
    gamma = -b[0]
    b[0] = b[0] - gamma
    b[n - 1] = b[n - 1] - a0 * cn / gamma
    z_arr = np.zeros((n, 1), dtype=np.float64)
    z = z_arr
    z[0, 0] = gamma
    z[n - 1, 0] = cn
    with nogil:
        _thomas(a, b, c, rhs, cp)
        _thomas(a, b, c, z, cp)
        vz = z[0, 0] + a0 / gamma * z[n - 1, 0]
        for j in range(k):
            vy = rhs[0, j] + a0 / gamma * rhs[n - 1, j]
            vy = vy / (1.0 + vz)
            for i in range(n):
                rhs[i, j] = rhs[i, j] - vy * z[i, 0]
    return out_arr


def apply_tridiag(double[:] lo, double[:] dg, double[:] up, bint periodic, u_in):
    """``L u`` for a banded operator, ``u`` of shape ``(n, k)``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef double[:, :] u = arr
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t k = u.shape[1]
    cdef Py_ssize_t i, j, im, ip
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, :] out = out_arr
    with nogil:
        for i in range(n):
            im = i - 1
            ip = i + 1
            if im < 0:
                im = n - 1
            if ip >= n:
                ip = 0
            for j in range(k):
                out[i, j] = dg[i] * u[i, j]
                if periodic or i > 0:
                    out[i, j] += lo[i] * u[im, j]
                if periodic or i < n - 1:
                    out[i, j] += up[i] * u[ip, j]
    return out_arr
