import math

import numpy as np
import pytest

from wittenlab.geometry import FlowScenario, GridSpec, MetricFamily, PotentialFamily
from wittenlab.operators import (
    HeatPropagator,
    assemble_witten,
    bochner_residual,
    evolve,
    gradient_sq,
)
from wittenlab.oracle import GaussianField, OUParams, mehler_propagate


def _flat(grid, pot=None, metric=None, K=0.0, times=None):
    times = np.linspace(0, 1, 6) if times is None else times
    return FlowScenario(grid, metric or MetricFamily.static(), pot or PotentialFamily.zero(), K,
                        times, np.ones(grid.shape))


@pytest.mark.parametrize("domain, dim", [("torus", 1), ("box", 1), ("torus", 2), ("box", 2)])
def test_symmetric_and_conservative(domain, dim, rng):
    grid = GridSpec(domain, dim, 16, None if domain == "torus" else 3.0)
    pot = PotentialFamily.quadratic(0.5) if domain == "box" else PotentialFamily.trig_sum([(0.3, (1.0,) * dim, 0.2)])
    op = assemble_witten(_flat(grid, pot), 0.0)
    u, v = rng.normal(size=(2,) + grid.shape)
    w = op.measure.weights
    assert np.sum(op.apply(u) * v * w) == pytest.approx(np.sum(u * op.apply(v) * w), rel=1e-11)
    assert -np.sum(op.apply(u) * v * w) == pytest.approx(op.dirichlet(u, v), rel=1e-11)
    assert np.sum(op.apply(u) * w) == pytest.approx(0.0, abs=1e-10 * np.sum(np.abs(u) * w))
    np.testing.assert_allclose(op.apply(np.ones(grid.shape)), 0.0, atol=1e-12)


def test_matrix_matches_bands(rng):
    grid = GridSpec("box", 1, 20, 2.0)
    op = assemble_witten(_flat(grid, PotentialFamily.quadratic(1.0)), 0.0)
    u = rng.normal(size=grid.shape)
    np.testing.assert_allclose(op.matrix @ u, op.apply(u), atol=1e-12)


def test_batched_apply(rng):
    grid = GridSpec("torus", 2, 12)
    op = assemble_witten(_flat(grid), 0.0)
    U = rng.normal(size=(3,) + grid.shape)
    stacked = op.apply(U)
    for k in range(3):
        np.testing.assert_allclose(stacked[k], op.apply(U[k]), atol=1e-13)


def test_fourier_mode_decay():
    grid = GridSpec("torus", 1, 128)
    sc = _flat(grid, times=np.linspace(0, 0.5, 6))
    x = grid.axis
    out = evolve(HeatPropagator(sc, dt_max=1e-3), np.cos(2 * x), 0.0, 0.5)
    np.testing.assert_allclose(out, math.exp(-4 * 0.5) * np.cos(2 * x), atol=5e-4)


def test_ou_gaussian_against_mehler():
    kappa = 1.0
    grid = GridSpec("box", 1, 256, 8.0)
    sc = _flat(grid, PotentialFamily.quadratic(kappa), K=kappa)
    x = grid.axis
    f = GaussianField.from_covariance([0.5], [[1.0]])
    exact = mehler_propagate(f, OUParams(1, -kappa), 0.0, 0.4)(x)
    num = evolve(HeatPropagator(sc, dt_max=2e-3), f(x), 0.0, 0.4)
    mask = np.abs(x) < 5
    assert np.max(np.abs(num - exact)[mask]) < 2e-3


def test_evolve_argument_checks():
    sc = _flat(GridSpec("torus", 1, 16))
    prop = HeatPropagator(sc)
    with pytest.raises(ValueError):
        evolve(prop, np.ones(16), 0.5, 0.2)
    np.testing.assert_array_equal(evolve(prop, np.arange(16.0), 0.3, 0.3), np.arange(16.0))


def test_positivity_and_maximum_principle(rng):
    grid = GridSpec("box", 1, 64, 4.0)
    sc = _flat(grid, PotentialFamily.quadratic(1.0))
    f = np.exp(rng.normal(size=grid.shape))
    out = evolve(HeatPropagator(sc), f, 0.0, 0.5)
    assert np.all(out > 0)
    assert out.max() <= f.max() * (1 + 1e-12)
    assert out.min() >= f.min() * (1 - 1e-12)


def test_gradient_square_scaling_metric():
    grid = GridSpec("torus", 1, 64)
    metric = MetricFamily.exponential_scaling(0.4)
    u = np.sin(grid.axis)
    gs = gradient_sq(u, grid, metric, 1.0)
    # g = e^{0.4 t} dx^2 so |grad u|^2 = e^{-0.4 t} u'^2
    np.testing.assert_allclose(gs, math.exp(-0.4) * np.cos(grid.axis) ** 2, atol=5e-3)


@pytest.mark.parametrize("domain", ["torus", "box"])
def test_bochner_second_order(domain):
    errs = []
    for n in (64, 128):
        grid = GridSpec(domain, 1, n, None if domain == "torus" else 6.0)
        pot = PotentialFamily.quadratic(1.0) if domain == "box" else PotentialFamily.trig_sum([(0.5, (1.0,), 0.0)])
        sc = _flat(grid, pot)
        x = grid.axis
        u = np.exp(0.3 * np.sin(x)) if domain == "torus" else np.exp(-0.5 * (x - 0.3) ** 2) + 0.5
        errs.append(bochner_residual(u, sc, 0.0))
    assert 1.7 <= math.log2(errs[0] / errs[1]) <= 2.3
