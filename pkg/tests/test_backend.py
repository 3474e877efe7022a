import numpy as np
import pytest

from wittenlab import _backend, _fallback

compiled = pytest.mark.skipif(not _backend.compiled_available(), reason="extension not built")


def _bands(rng, n, periodic):
    lo = rng.uniform(0.5, 1.5, n)
    up = rng.uniform(0.5, 1.5, n)
    if not periodic:
        lo[0] = 0.0
        up[-1] = 0.0
    return lo, -(lo + up), up


@compiled
@pytest.mark.parametrize("periodic", [False, True])
@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_theta_step_parity(periodic, theta, rng):
    from wittenlab import _kernels

    lo, dg, up = _bands(rng, 40, periodic)
    U = rng.normal(size=(40, 3))
    a = _kernels.theta_step(lo, dg, up, periodic, U, 0.1, theta)
    b = _fallback.theta_step(lo, dg, up, periodic, U, 0.1, theta)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


@compiled
@pytest.mark.parametrize("periodic", [False, True])
def test_apply_parity(periodic, rng):
    from wittenlab import _kernels

    lo, dg, up = _bands(rng, 33, periodic)
    U = rng.normal(size=(33, 2))
    np.testing.assert_allclose(_kernels.apply_tridiag(lo, dg, up, periodic, U),
                               _fallback.apply_tridiag(lo, dg, up, periodic, U), atol=1e-13)


@pytest.mark.parametrize("periodic", [False, True])
def test_theta_step_solves_system(periodic, rng):
    n = 25
    lo, dg, up = _bands(rng, n, periodic)
    A = np.diag(dg) + np.diag(up[:-1], 1) + np.diag(lo[1:], -1)
    if periodic:
        A[0, -1] = lo[0]
        A[-1, 0] = up[-1]
    U = rng.normal(size=(n, 2))
    dt, theta = 0.2, 0.5
    out = _backend.theta_step(lo, dg, up, periodic, U, dt, theta)
    lhs = (np.eye(n) - theta * dt * A) @ out
    rhs = U + (1 - theta) * dt * A @ U
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    np.testing.assert_allclose(_backend.apply_tridiag(lo, dg, up, periodic, U), A @ U, atol=1e-12)


def test_switching():
    prev = _backend.use("python")
    try:
        assert _backend.name() == "python"
        with pytest.raises(ValueError):
            _backend.use("fortran")
    finally:
        if _backend.compiled_available() or prev == "python":
            _backend.use(prev)


def test_environment_selects_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, WITTENLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from wittenlab import _backend; print(_backend.name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_flow_matches_compiled():
    from wittenlab.operators import HeatPropagator, evolve
    from wittenlab.scenarios import ou_soliton

    sc = ou_soliton(points=64)
    results = []
    prev = _backend.name()
    try:
        for b in (["compiled"] if _backend.compiled_available() else []) + ["python"]:
            _backend.use(b)
            results.append(evolve(HeatPropagator(sc), sc.initial, 0.0, 0.5))
    finally:
        if _backend.compiled_available() or prev == "python":
            _backend.use(prev)
    for r in results[1:]:
        np.testing.assert_allclose(r, results[0], rtol=1e-12)
