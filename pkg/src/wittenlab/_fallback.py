"""Pure numpy/scipy implementation of the 1-D banded kernels.

Same contract as the compiled ``_kernels`` module; selected when the
extension is unavailable or ``WITTENLAB_PURE_PYTHON=1``.
"""

import numpy as np
from scipy.linalg import solve_banded


def apply_tridiag(lo, dg, up, periodic, u):
    u = np.asarray(u, dtype=float)
    out = dg[:, None] * u
    out[1:] += lo[1:, None] * u[:-1]
    out[:-1] += up[:-1, None] * u[1:]
    if periodic:
        out[0] += lo[0] * u[-1]
        out[-1] += up[-1] * u[0]
    return out


def theta_step(lo, dg, up, periodic, u, dt, theta):
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    rhs = u + (1.0 - theta) * dt * apply_tridiag(lo, dg, up, periodic, u)
    a = -theta * dt * lo
    b = 1.0 - theta * dt * dg
    c = -theta * dt * up
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    if not periodic:
        return solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
    gamma = -b[0]
    ab[1, 0] -= gamma
    ab[1, -1] -= a[0] * c[-1] / gamma
    z = np.zeros((n, 1))
    z[0, 0] = gamma
    z[-1, 0] = c[-1]
    sol = solve_banded((1, 1), ab, np.hstack([rhs, z]), check_finite=False)
    y, zz = sol[:, :-1], sol[:, -1]
    vy = y[0] + a[0] / gamma * y[-1]
    vz = zz[0] + a[0] / gamma * zz[-1]
    return y - np.outer(zz, vy / (1.0 + vz))
