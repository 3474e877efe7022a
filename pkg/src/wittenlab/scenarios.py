"""Named catalog of potentials, initial data and reference scenarios."""

from __future__ import annotations

import math

import numpy as np

from .geometry import (
    M_INFINITY,
    FlowScenario,
    GridSpec,
    MetricFamily,
    PotentialFamily,
    measure_weights,
    super_flow_residual,
)

__all__ = [
    "POTENTIALS",
    "INITIAL_DATA",
    "METRICS",
    "SCENARIOS",
    "make_potential",
    "make_initial",
    "uniform_times",
    "ou_soliton",
    "scaling_flow",
    "conformal_flow",
    "violating_flow",
    "ou_expanding",
    "km_quadratic",
    "min_residual",
]


# --------------------------------------------------------------------------
# catalog entries


def _gaussian(sigma=1.0, center=None, amplitude=1.0, floor=0.0):
    def fn(X):
        c = center if center is not None else [0.0] * len(X)
        r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
        return floor + amplitude * np.exp(-r2 / (2 * sigma * sigma))

    return fn


def _trig(amplitude=0.5, wavenumber=1.0, phase=0.0):
    def fn(X):
        return 1.0 + amplitude * np.cos(sum(wavenumber * x for x in X) + phase)

    return fn


def _constant(value=1.0):
    return lambda X: np.full(np.shape(X[0]), float(value))


POTENTIALS = {
    "zero": "phi = 0",
    "quadratic": "phi = kappa |x - center|^2 / 2 (params: kappa, center)",
    "trig-sum": "phi = sum amp cos(k . x + phase) (params: terms = [[amp, [k...], phase], ...])",
}

INITIAL_DATA = {
    "constant": "f = value",
    "trig": "f = 1 + amplitude cos(wavenumber sum x + phase)",
    "gaussian": "f = floor + amplitude exp(-|x - center|^2 / (2 sigma^2))",
    "near-delta": "unit-mass Gaussian of width 3h",
}

METRICS = {
    "static-euclidean": "g = delta",
    "isotropic-scaling": "g = exp(rate t) delta (params: rate)",
    "conformal-2d": "g = exp(2a) delta, a = amplitude exp(growth t) sum cos(k_i x_i)",
}


def make_potential(kind: str, params: dict) -> PotentialFamily:
    if kind == "zero":
        return PotentialFamily.zero()
    if kind == "quadratic":
        return PotentialFamily.quadratic(float(params.get("kappa", 1.0)), params.get("center"))
    if kind == "trig-sum":
        return PotentialFamily.trig_sum(params.get("terms", []))
    raise KeyError(kind)


def make_initial(kind: str, params: dict):
    """Callable ``X -> field``; ``near-delta`` is resolved later against a scenario."""
    if kind == "constant":
        return _constant(params.get("value", 1.0))
    if kind == "trig":
        return _trig(params.get("amplitude", 0.5), params.get("wavenumber", 1.0), params.get("phase", 0.0))
    if kind == "gaussian":
        return _gaussian(params.get("sigma", 1.0), params.get("center"), params.get("amplitude", 1.0), params.get("floor", 0.0))
    if kind == "near-delta":
        return None
    raise KeyError(kind)


def uniform_times(start: float, end: float, count: int) -> np.ndarray:
    return np.linspace(start, end, count)


def min_residual(scenario: FlowScenario, m: float = M_INFINITY, samples: int | None = None) -> float:
    """Smallest super-flow residual eigenvalue over nodes and time samples (with ``K = 0``)."""
    ts = scenario.t_grid if samples is None else np.linspace(0.0, scenario.T, samples)
    return float(min(np.min(super_flow_residual(scenario, t, m, 0.0)) for t in ts))


# --------------------------------------------------------------------------
# reference scenarios


def _scenario(grid, metric, potential, K, times, initial_fn, **kw):
    return FlowScenario(grid, metric, potential, K, times, initial_fn(grid.coords), meta={"initial_fn": initial_fn}, **kw)


def ou_soliton(points: int = 128, K: float = 1.0, half_width: float = 8.0, times=None, initial=None, **kw) -> FlowScenario:
    """Gaussian soliton ``phi = K x^2 / 2`` on a 1-D box: ``Ric(L) = K`` exactly."""
    grid = GridSpec("box", 1, points, half_width)
    times = uniform_times(0.0, 1.0, 21) if times is None else times
    initial = initial or _gaussian(sigma=1.0, center=[0.5], amplitude=1.0, floor=0.2)
    return _scenario(grid, MetricFamily.static(), PotentialFamily.quadratic(K), K, times, initial, name="ou-soliton", **kw)


def scaling_flow(points: int = 128, rate: float = 0.4, K: float = 0.8, half_width: float = 8.0, times=None, initial=None, **kw):
    """``g = e^{rate t} delta`` with ``phi = x^2/2 + (n/2) log c(t)`` on a 1-D box.

    The residual is ``rate/2 + 1/c(t) - K``, positive for ``K = 0.8`` up to ``t = 1``.
    """
    grid = GridSpec("box", 1, points, half_width)
    metric = MetricFamily.exponential_scaling(rate)
    pot = PotentialFamily.compensated(PotentialFamily.quadratic(1.0), metric, 1)
    times = uniform_times(0.0, 1.0, 21) if times is None else times
    initial = initial or _gaussian(sigma=1.2, center=[-0.4], amplitude=1.0, floor=0.3)
    return _scenario(grid, metric, pot, K, times, initial, name="isotropic-scaling", **kw)


def conformal_flow(points: int = 32, amplitude: float = 0.05, growth: float = -0.5, K: float | None = None,
                   times=None, initial=None, safety: float = 1e-3, **kw) -> FlowScenario:
    """2-D torus with ``g = e^{2a} delta`` and the fixed-measure potential ``phi = 2a``.

    ``K`` defaults to the measured minimum residual minus ``safety``.
    """
    grid = GridSpec("torus", 2, points)
    metric = MetricFamily.conformal_wave(amplitude, (1, 1), growth)
    pot = PotentialFamily.compensated(PotentialFamily.zero(), metric, 2)
    times = uniform_times(0.0, 0.5, 11) if times is None else times
    initial = initial or _trig(0.5, 1.0, 0.3)
    sc = _scenario(grid, metric, pot, 0.0, times, initial, name="conformal-2d", **kw)
    if K is None:
        K = min_residual(sc) - safety
    return sc.replace(K=float(K))


def violating_flow(points: int = 128, times=None, initial=None, **kw) -> FlowScenario:
    """1-D torus with ``phi = cos x`` and ``K = 0``: ``Ric(L) = -cos x`` dips to ``-1``."""
    grid = GridSpec("torus", 1, points)
    pot = PotentialFamily.trig_sum([(1.0, (1.0,), 0.0)])
    times = uniform_times(0.0, 0.1, 11) if times is None else times
    initial = initial or _trig(0.5, 1.0, 0.0)
    return _scenario(grid, MetricFamily.static(), pot, 0.0, times, initial, name="violating", **kw)


def ou_expanding(points: int = 256, kappa: float = 0.5, half_width: float = 8.0, times=None, initial=None, **kw):
    """``phi = -kappa x^2 / 2`` on a box, so ``Ric(L) = -kappa`` (drift ``+kappa x``)."""
    grid = GridSpec("box", 1, points, half_width)
    times = uniform_times(0.02, 0.1, 9) if times is None else times
    initial = initial or _gaussian(sigma=1.0, amplitude=1.0, floor=0.1)
    return _scenario(grid, MetricFamily.static(), PotentialFamily.quadratic(-kappa), -kappa, times, initial,
                     name="ou-expanding", **kw)


def km_quadratic(m: float, points: int = 128, half_width: float = 4.0, times=None, initial=None, **kw) -> FlowScenario:
    """``phi = x^2/2`` on ``[-R, R]`` with ``K = min Ric_{m,1}(L) = 1 - R^2 / (m - 1)`` and a unit-mass datum."""
    grid = GridSpec("box", 1, points, half_width)
    pot = PotentialFamily.quadratic(1.0)
    times = uniform_times(0.0, 0.5, 21) if times is None else times
    base = initial or _gaussian(sigma=0.8, center=[0.3], amplitude=1.0, floor=0.2)
    mu = measure_weights(grid, MetricFamily.static(), pot, 0.0)
    mass = mu.integrate(base(grid.coords))

    def normalized(X, _b=base, _m=mass):
        return _b(X) / _m

    sc = _scenario(grid, MetricFamily.static(), pot, 0.0, times, normalized, m=float(m), name=f"km-quadratic-m{m:g}", **kw)
    return sc.replace(K=min_residual(sc, m=float(m), samples=1))


SCENARIOS = {
    "ou-soliton": ou_soliton,
    "isotropic-scaling": scaling_flow,
    "conformal-2d": conformal_flow,
    "violating": violating_flow,
    "ou-expanding": ou_expanding,
    "km-quadratic": km_quadratic,
}
