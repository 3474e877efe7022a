"""Kernel backend selection.

The compiled extension is preferred; ``WITTENLAB_PURE_PYTHON=1`` in the
environment, or :func:`use`, forces the numpy/scipy fallback.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_impl = _fallback if (_compiled is None or os.environ.get("WITTENLAB_PURE_PYTHON") == "1") else _compiled


def compiled_available() -> bool:
    return _compiled is not None


def name() -> str:
    return "compiled" if _impl is _compiled else "python"


def use(backend: str) -> str:
    """Switch to ``"compiled"`` or ``"python"``; returns the previous backend name."""
    global _impl
    previous = name()
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _compiled
    elif backend == "python":
        _impl = _fallback
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return previous


def theta_step(lo, dg, up, periodic, u, dt, theta):
    return _impl.theta_step(lo, dg, up, bool(periodic), u, float(dt), float(theta))


def apply_tridiag(lo, dg, up, periodic, u):
    return _impl.apply_tridiag(lo, dg, up, bool(periodic), u)
