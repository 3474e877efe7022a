import math

import numpy as np
import pytest

from wittenlab.geometry import GeometryError
from wittenlab.inequalities import (
    SLACK,
    InequalityReport,
    TestFamily,
    contrapositive_check,
    gradient_estimate_check,
    harnack_check,
    inequality_suite,
    interpolation_identity_check,
    lsi_check,
    poincare_check,
    psi_monotonicity_check,
    rpoincare_check,
    semigroup_moments,
)
from wittenlab.operators import HeatPropagator
from wittenlab.scenarios import ou_expanding, ou_soliton, violating_flow


@pytest.mark.parametrize("kind", ["random-trig", "gaussian-bumps", "near-eigen"])
def test_family_bounds_and_determinism(kind):
    sc = ou_soliton(points=64)
    fam = TestFamily(6, kind, floor=0.1, seed=3)
    a = fam.generate(sc)
    assert a.shape == (6, 64)
    assert a.min() >= 0.1 and a.max() <= 10.0
    np.testing.assert_array_equal(a, fam.generate(sc))
    assert not np.array_equal(a, TestFamily(6, kind, floor=0.1, seed=4).generate(sc))


def test_family_validation():
    with pytest.raises(ValueError):
        TestFamily(3, "splines")
    with pytest.raises(ValueError):
        TestFamily(3, floor=1.5)
    with pytest.raises(ValueError):
        TestFamily(0)


def test_report_semantics():
    hold = InequalityReport("x", np.array([0.1, -1e-9]), 1e-8)
    assert hold.passed and hold.min_margin == pytest.approx(-1e-9)
    violate = InequalityReport("x", np.array([0.1, -1e-9]), 1e-8, expect="violate")
    assert not violate.passed
    assert InequalityReport("x", np.array([-1e-3]), 1e-8, expect="violate").passed
    s = hold.summary()
    assert s["count"] == 2 and s["passed"] is True


def test_constant_functions_are_equality_cases():
    sc = ou_soliton(points=64)
    fs = np.full((2, 64), 3.0)
    mom = semigroup_moments(sc, 0.0, 0.3, fs)
    np.testing.assert_allclose(mom["Pf"], 3.0, rtol=1e-12)
    np.testing.assert_allclose(mom["grad_Pf2"], 0.0, atol=1e-20)


def test_moments_argument_checks():
    sc = ou_soliton(points=32)
    with pytest.raises(ValueError):
        semigroup_moments(sc, 0.4, 0.4, np.ones((1, 32)))
    with pytest.raises(GeometryError):
        semigroup_moments(sc, 0.0, 0.4, -np.ones((1, 32)))


def test_suite_holds_on_soliton():
    sc = ou_soliton(points=128)
    reports = inequality_suite(sc, [(0.0, 0.2), (0.3, 1.0)], TestFamily(10, "gaussian-bumps", seed=1))
    assert len(reports) == 10
    assert all(r.passed for r in reports), [r.summary() for r in reports if not r.passed]


def test_gradient_estimate_linearization():
    # f = 1 + eps v: both sides scale like eps^2, so the relative margin is eps independent
    sc = ou_soliton(points=128)
    rel = []
    for eps in (1e-1, 1e-2, 1e-3):
        fs = TestFamily(4, "near-eigen", eps=eps, seed=2).generate(sc)
        rep = gradient_estimate_check(sc, 0.0, 0.1, None, fs=fs)
        rel.append(rep.min_margin / eps**2)
    assert rel[1] == pytest.approx(rel[2], rel=0.05)


def test_printed_reversal_poincare_is_not_scale_invariant():
    sc = ou_soliton(points=128)
    fs = TestFamily(4, "gaussian-bumps", seed=5).generate(sc)
    homog = [rpoincare_check(sc, 0.0, 0.2, None, fs=c * fs).min_margin for c in (1.0, 10.0)]
    printed = [rpoincare_check(sc, 0.0, 0.2, None, fs=c * fs, form="printed").min_margin for c in (1.0, 10.0)]
    assert homog[1] == pytest.approx(100 * homog[0], rel=1e-9)
    assert printed[1] != pytest.approx(100 * printed[0], rel=1e-3)


def test_lsi_is_scale_covariant():
    sc = ou_soliton(points=64)
    fs = TestFamily(3, "random-trig", seed=1).generate(sc)
    a = lsi_check(sc, 0.0, 0.3, None, fs=fs).margins
    b = lsi_check(sc, 0.0, 0.3, None, fs=5 * fs).margins
    np.testing.assert_allclose(b, 5 * a, rtol=1e-9, atol=1e-14)


def test_contrapositive_detects_violation():
    rep = contrapositive_check(violating_flow(), 0.0, 1e-2, TestFamily(5, "near-eigen", seed=0))
    assert rep.expect == "violate" and rep.passed
    assert rep.min_margin < -1e-8


@pytest.mark.parametrize("name", ["rlsi", "rpoincare"])
@pytest.mark.parametrize("tau", [1e-3, 1e-2])
def test_reversal_contrapositives_detect(name, tau):
    rep = contrapositive_check(violating_flow(), 0.0, tau, TestFamily(10, "near-eigen", seed=7), name=name)
    assert rep.passed


def test_poincare_contrapositive_needs_short_times():
    # curvature deficit is O(tau^2) against O(tau^3 |v_xxx|^2); tau << width^4 isolates it
    sc = violating_flow(points=1024, times=np.linspace(0, 0.01, 11))
    fam = TestFamily(10, "near-eigen", seed=7, eps=0.3)
    rep = contrapositive_check(sc, 0.0, 3e-4, fam, name="poincare")
    assert rep.passed and rep.min_margin < -1e-7
    control = poincare_check(sc.replace(K=-1.001), 0.0, 3e-4, None, fs=fam.generate(sc), slack=SLACK)
    assert control.passed


def test_contrapositive_silent_on_super_flow():
    rep = contrapositive_check(ou_soliton(), 0.0, 1e-2, TestFamily(5, "near-eigen", seed=0))
    assert not rep.passed


@pytest.mark.parametrize("make", [ou_soliton, ou_expanding])
def test_harnack(make):
    sc = make(points=128)
    fam = TestFamily(5, "gaussian-bumps", seed=9).generate(sc)
    hh, ham, dominance = harnack_check(sc, fam)
    assert hh.passed and ham.passed and dominance
    assert hh.details["K"] == max(0.0, -sc.K)


def test_harnack_rejects_bad_input():
    sc = ou_soliton(points=32)
    with pytest.raises(GeometryError):
        harnack_check(sc, np.zeros((1, 32)))
    with pytest.raises(ValueError):
        harnack_check(sc, K=-1.0)


def test_interpolation_identity_converges():
    errs = []
    for n in (64, 128):
        sc = ou_soliton(points=n, times=np.linspace(0, 0.4, 6))
        prop = HeatPropagator(sc, dt_max=sc.grid.h / 8)
        errs.append(interpolation_identity_check(sc, 0.0, 0.4, sc.initial, samples=9, prop=prop)["integrated_residual"])
    assert errs[1] < errs[0]


def test_psi_monotone_on_soliton():
    sc = ou_soliton(points=128, times=np.linspace(0, 0.4, 6))
    assert psi_monotonicity_check(sc, 0.0, 0.4, sc.initial).passed
    with pytest.raises(ValueError):
        psi_monotonicity_check(sc, 0.4, 0.4, sc.initial)
