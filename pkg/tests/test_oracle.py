import math

import numpy as np
import pytest
from scipy import integrate

from wittenlab.oracle import (
    CovarianceError,
    GaussianField,
    OUParams,
    euclid_kernel,
    mehler_propagate,
    ou_entropy_expansion,
    ou_kernel,
    ou_kernel_entropy,
    ou_variance,
)


def test_variance_limit():
    assert ou_variance(0.0, 0.3) == 0.6
    assert ou_variance(1e-9, 0.3) == pytest.approx(0.6, rel=1e-8)
    assert ou_variance(-1.0, 1e6) == pytest.approx(1.0)


@pytest.mark.parametrize("K", [-1.0, 0.0, 0.7])
def test_kernel_mass_and_entropy(K):
    p = OUParams(1, K, (0.4,))
    t = 0.3
    mass = integrate.quad(lambda y: ou_kernel(p, [y], t), -30, 30, points=[0.4])[0]
    ent = integrate.quad(lambda y: (lambda u: u * math.log(u) if u > 0 else 0.0)(float(ou_kernel(p, [y], t))),
                         -30, 30, points=[0.4])[0]
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert ent == pytest.approx(ou_kernel_entropy(p, t), abs=1e-8)


def test_kernel_solves_forward_equation():
    # Kolmogorov backward in the start point: du/dt = u'' + K x u' in x
    K, t, y, h = 0.6, 0.4, np.array([0.3]), 1e-4

    def u(x, s):
        return float(ou_kernel(OUParams(1, K, (x,)), y, s))

    x = -0.2
    dt = (u(x, t + h) - u(x, t - h)) / (2 * h)
    dx = (u(x + h, t) - u(x - h, t)) / (2 * h)
    dxx = (u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / h**2
    assert dt == pytest.approx(dxx + K * x * dx, rel=1e-5)


def test_mehler_semigroup_and_quadrature():
    p = OUParams(2, -0.8)
    f = GaussianField.from_covariance([0.3, -0.2], [[1.0, 0.3], [0.3, 0.5]], 2.0)
    a = mehler_propagate(mehler_propagate(f, p, 0.0, 0.2), p, 0.2, 0.5)
    b = mehler_propagate(f, p, 0.0, 0.5)
    np.testing.assert_allclose(a.precision, b.precision, rtol=1e-12)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
    assert a.prefactor == pytest.approx(b.prefactor, rel=1e-12)
    # compare with E f(e^{K tau} x + sqrt(v) xi) by Gauss-Hermite quadrature
    x = np.array([0.7, -0.4])
    tau = 0.5
    v = ou_variance(p.K, tau)
    nodes, weights = np.polynomial.hermite_e.hermegauss(40)
    X1, X2 = np.meshgrid(nodes, nodes, indexing="ij")
    W = np.outer(weights, weights) / (2 * math.pi)
    c = math.exp(p.K * tau) * x
    ref = np.sum(W * f(c[0] + math.sqrt(v) * X1, c[1] + math.sqrt(v) * X2))
    assert b(*x) == pytest.approx(ref, rel=1e-10)


def test_constant_field_is_fixed():
    f = GaussianField.constant(3.0, 1)
    g = mehler_propagate(f, OUParams(1, 1.0), 0.0, 2.0)
    assert g(np.array([5.0])) == pytest.approx(3.0)


def test_covariance_errors():
    with pytest.raises(CovarianceError):
        GaussianField.from_covariance([0.0], [[-1.0]])
    with pytest.raises(CovarianceError):
        GaussianField([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_nonpositive_time():
    with pytest.raises(ValueError):
        ou_kernel(OUParams(1, 0.0), [0.0], 0.0)
    with pytest.raises(ValueError):
        euclid_kernel(1, 0.0, 0.0, -1.0)


def test_euclid_kernel_matches_zero_drift():
    y = np.array([[0.2], [1.0]])
    np.testing.assert_allclose(euclid_kernel(1, [0.0], y, 0.3), ou_kernel(OUParams(1, 0.0), y, 0.3), rtol=1e-14)


def test_expansion_remainder_is_fourth_order():
    p = OUParams(3, 1.3)
    r = [abs(ou_entropy_expansion(p, t)[1]) for t in (1e-2, 1e-3)]
    assert math.log10(r[0] / r[1]) == pytest.approx(4.0, abs=0.05)
    value, rem = ou_entropy_expansion(p, 0.05)
    assert value + rem == pytest.approx(ou_kernel_entropy(p, 0.05), abs=1e-13)
