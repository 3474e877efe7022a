"""Functional inequalities along the heat flow, checked over families of test functions.

All pointwise inequalities report a margin ``RHS - LHS`` (non-negative when the
inequality holds) minimized over grid nodes.  ``tau = t - s`` throughout and
the constants are written through ``D = D_K(tau)`` and ``C = C_K(tau)``:
``(1 - e^{-2K tau}) / (2K) = 1/D`` and ``2K / (e^{2K tau} - 1) = C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import EntropyCoefficients
from .geometry import FlowScenario, GeometryError, super_tensor, metric_at
from .operators import HeatPropagator, evolve, gradient_sq

__all__ = [
    "TestFamily",
    "InequalityReport",
    "SLACK",
    "semigroup_moments",
    "lsi_check",
    "rlsi_check",
    "poincare_check",
    "rpoincare_check",
    "gradient_estimate_check",
    "inequality_suite",
    "contrapositive_check",
    "harnack_check",
    "interpolation_identity_check",
    "psi_monotonicity_check",
]

SLACK = 1e-8
KINDS = ("random-trig", "gaussian-bumps", "near-eigen")


# --------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFamily:
    """Seeded positive test functions with ``floor <= f <= 1/floor``.

    ``near-eigen`` functions are ``1 + eps * v`` where ``v`` is a localized
    linear profile along the most negative eigenvector of the super-flow
    tensor at its minimizing node, so their gradient probes the worst
    direction of the curvature.
    """

    __test__ = False  # not a pytest class

    count: int
    kind: str = "random-trig"
    floor: float = 0.05
    seed: int = 0
    eps: float = 1e-2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown test-function kind {self.kind!r}")
        if not 0 < self.floor < 1:
            raise ValueError("floor must lie in (0, 1)")
        if self.count < 1:
            raise ValueError("count must be positive")

    def generate(self, scenario: FlowScenario, s: float = 0.0) -> np.ndarray:
        """Array of shape ``(count,) + grid.shape``."""
        rng = np.random.default_rng(self.seed)
        make = {"random-trig": _random_trig, "gaussian-bumps": _gaussian_bumps, "near-eigen": _near_eigen}[self.kind]
        out = np.stack([make(rng, scenario, s, self) for _ in range(self.count)])
        lo, hi = self.floor, 1.0 / self.floor
        if np.any(out < lo) or np.any(out > hi):
            raise GeometryError("generated test function left [floor, 1/floor]")
        return out


def _wavenumbers(rng, grid, size):
    if grid.periodic:
        return rng.integers(-3, 4, size=size).astype(float)
    return rng.uniform(-1.0, 1.0, size=size) * (2 * math.pi / grid.extent) * 3


def _random_trig(rng, scenario, s, fam):
    g = scenario.grid
    X = g.coords
    r = np.zeros(g.shape)
    for _ in range(4):
        k = _wavenumbers(rng, g, g.dim)
        r = r + rng.normal() * np.cos(sum(ki * x for ki, x in zip(k, X)) + rng.uniform(0, 2 * math.pi))
    r = r / max(float(np.max(np.abs(r))), 1e-300)
    gamma = rng.uniform(0.1, 0.9) * math.log(1.0 / fam.floor)
    return np.exp(gamma * r)


def _wrapped(x, c, grid):
    d = x - c
    if grid.periodic:
        d = (d + math.pi) % (2 * math.pi) - math.pi
    return d


def _gaussian_bumps(rng, scenario, s, fam):
    g = scenario.grid
    X = g.coords
    lo = -g.extent / 2 * 0.6 if not g.periodic else 0.0
    hi = g.extent / 2 * 0.6 if not g.periodic else 2 * math.pi
    f = np.full(g.shape, rng.uniform(1.0, 2.0) * fam.floor)
    for _ in range(rng.integers(1, 4)):
        c = rng.uniform(lo, hi, size=g.dim)
        width = rng.uniform(0.4, 1.2)
        r2 = sum(_wrapped(x, ci, g) ** 2 for x, ci in zip(X, c))
        f = f + rng.uniform(0.5, 2.0) * np.exp(-r2 / (2 * width * width))
    return np.minimum(f, 0.9 / fam.floor)


def _worst_direction(scenario, s):
    S = super_tensor(scenario, s)
    lam = metric_at(scenario.metric, scenario.grid, s)
    mins = S.min_eigenvalue(lam)
    node = np.unravel_index(int(np.argmin(mins)), scenario.grid.shape)
    e = np.array(S.min_eigenvector()[node], dtype=float)
    return node, e / np.linalg.norm(e)


def _near_eigen(rng, scenario, s, fam):
    g = scenario.grid
    X = g.coords
    node, e = _worst_direction(scenario, s)
    center = [x[node] for x in X]
    e = e * rng.choice([-1.0, 1.0])
    width = rng.uniform(0.25, 0.6)
    d = [_wrapped(x, c, g) for x, c in zip(X, center)]
    r2 = sum(di * di for di in d)
    v = sum(ei * di for ei, di in zip(e, d)) * np.exp(-r2 / (2 * width * width))
    v = v / float(np.max(np.abs(v)))
    return 1.0 + fam.eps * v


# --------------------------------------------------------------------------
# reports


@dataclass
class InequalityReport:
    """Margins of one inequality over a family of inputs.

    ``expect="hold"`` passes iff ``min_margin >= -slack``; ``expect="violate"``
    (contrapositive probes) passes iff some margin is below ``-SLACK``.
    """

    name: str
    margins: np.ndarray
    slack: float
    expect: str = "hold"
    details: dict = field(default_factory=dict)

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins))

    @property
    def mean_margin(self) -> float:
        return float(np.mean(self.margins))

    @property
    def passed(self) -> bool:
        if self.expect == "violate":
            return self.min_margin < -SLACK
        return self.min_margin >= -self.slack

    def summary(self) -> dict:
        return {
            "name": self.name,
            "expect": self.expect,
            "passed": self.passed,
            "min_margin": self.min_margin,
            "mean_margin": self.mean_margin,
            "slack": self.slack,
            "count": int(np.size(self.margins)),
            **{k: v for k, v in self.details.items() if isinstance(v, (int, float, str, bool))},
        }


def _node_min(a, ndim):
    return np.min(a.reshape(a.shape[: a.ndim - ndim] + (-1,)), axis=-1)


# --------------------------------------------------------------------------
# semigroup inequalities


def semigroup_moments(scenario: FlowScenario, s: float, t: float, fs: np.ndarray, prop=None) -> dict:
    """Evolve ``f, f log f, |grad f|^2/f, f^2, |grad f|^2`` together from ``s`` to ``t``.

    ``|grad f|`` is measured in ``g(s)`` and ``|grad P f|`` in ``g(t)``.
    """
    if not 0 <= s < t:
        raise ValueError(f"need 0 <= s < t, got s={s}, t={t}")
    if np.any(fs <= 0):
        raise GeometryError("test functions must be positive")
    g, metric = scenario.grid, scenario.metric
    prop = prop or HeatPropagator(scenario)
    g2 = gradient_sq(fs, g, metric, s)
    stack = np.stack([fs, fs * np.log(fs), g2 / fs, fs * fs, g2])
    P = evolve(prop, stack, s, t)
    Pf = P[0]
    return {
        "Pf": Pf,
        "P_flogf": P[1],
        "P_fisher": P[2],
        "P_f2": P[3],
        "P_grad2": P[4],
        "grad_Pf2": gradient_sq(Pf, g, metric, t),
        "coef": EntropyCoefficients(scenario.K),
        "tau": t - s,
    }


def _margin_fields(mom: dict, name: str, rpoincare_form: str = "homogeneous"):
    c = mom["coef"]
    tau = mom["tau"]
    D, C = c.D(tau), c.C(tau)
    Pf = mom["Pf"]
    ent = mom["P_flogf"] - Pf * np.log(Pf)
    var = mom["P_f2"] - Pf * Pf
    if name == "lsi":
        return mom["P_fisher"] / D - ent
    if name == "rlsi":
        return C * ent - mom["grad_Pf2"] / Pf
    if name == "poincare":
        return 2.0 / D * mom["P_grad2"] - var
    if name == "rpoincare":
        if rpoincare_form == "printed":
            return 0.5 * C * var - mom["grad_Pf2"] / Pf
        return 0.5 * C * var - mom["grad_Pf2"]
    if name == "gradient":
        return math.exp(-2 * mom["coef"].K * tau) * mom["P_grad2"] - mom["grad_Pf2"]
    raise KeyError(name)


INEQUALITIES = ("lsi", "rlsi", "poincare", "rpoincare", "gradient")


def _check(name, scenario, s, t, family, fs=None, mom=None, prop=None, slack=None, expect="hold", **kw):
    if mom is None:
        fs = family.generate(scenario, s) if fs is None else fs
        mom = semigroup_moments(scenario, s, t, fs, prop)
    field_ = _margin_fields(mom, name, **kw)
    margins = _node_min(field_, scenario.grid.dim)
    slack = scenario.tolerance() if slack is None else slack
    return InequalityReport(name, margins, slack, expect, {"s": float(s), "t": float(t)})


def lsi_check(scenario, s, t, family, **kw) -> InequalityReport:
    """``P(f log f) - Pf log Pf <= (1/D_K) P(|grad f|^2 / f)``."""
    return _check("lsi", scenario, s, t, family, **kw)


def rlsi_check(scenario, s, t, family, **kw) -> InequalityReport:
    """``|grad Pf|^2 / Pf <= C_K [P(f log f) - Pf log Pf]``."""
    return _check("rlsi", scenario, s, t, family, **kw)


def poincare_check(scenario, s, t, family, **kw) -> InequalityReport:
    """``P f^2 - (Pf)^2 <= (2/D_K) P|grad f|^2``."""
    return _check("poincare", scenario, s, t, family, **kw)


def rpoincare_check(scenario, s, t, family, form: str = "homogeneous", **kw) -> InequalityReport:
    """``|grad Pf|^2 <= (C_K/2) [P f^2 - (Pf)^2]``.

    ``form="printed"`` divides the left side by ``Pf``; that variant is not
    invariant under ``f -> c f`` and is kept only as a diagnostic.
    """
    return _check("rpoincare", scenario, s, t, family, rpoincare_form=form, **kw)


def gradient_estimate_check(scenario, s, t, family, **kw) -> InequalityReport:
    """``|grad P f|^2 <= e^{-2K tau} P|grad f|^2``."""
    return _check("gradient", scenario, s, t, family, **kw)


def inequality_suite(scenario: FlowScenario, pairs, family: TestFamily, prop=None) -> list:
    """All five inequalities for every ``(s, t)`` pair, sharing one propagation per pair."""
    prop = prop or HeatPropagator(scenario)
    reports = []
    for s, t in pairs:
        fs = family.generate(scenario, s)
        mom = semigroup_moments(scenario, s, t, fs, prop)
        for name in INEQUALITIES:
            reports.append(_check(name, scenario, s, t, family, mom=mom))
    return reports


def contrapositive_check(scenario: FlowScenario, s: float, tau: float, family: TestFamily, name: str = "gradient",
                         prop=None) -> InequalityReport:
    """Expect a violation of ``name`` for near-eigen data on a flow with negative residual."""
    fs = family.generate(scenario, s)
    mom = semigroup_moments(scenario, s, s + tau, fs, prop)
    rep = _check(name, scenario, s, s + tau, family, mom=mom, slack=SLACK, expect="violate")
    rep.name = f"{name}-contrapositive"
    return rep


# --------------------------------------------------------------------------
# Harnack


def harnack_check(scenario: FlowScenario, u0=None, K: float | None = None, prop=None):
    """Margins of the two Harnack bounds along the flow of each datum in ``u0``.

    ``K`` is the Harnack constant (curvature bounded below by ``-K``) and
    defaults to ``max(0, -scenario.K)``.  ``A`` is the maximum over all
    space-time samples.  Returns ``(hh, ham, dominance)`` where ``dominance``
    states that the ``1/t + 2K`` margin is pointwise at least the sharp one.
    """
    K = max(0.0, -scenario.K) if K is None else float(K)
    if K < 0:
        raise ValueError("Harnack constant must be non-negative")
    g = scenario.grid
    u0 = scenario.initial[None] if u0 is None else np.asarray(u0, dtype=float)
    if u0.ndim == g.dim:
        u0 = u0[None]
    if np.any(u0 <= 0) or not np.all(np.isfinite(u0)):
        raise GeometryError("Harnack data must be positive and bounded")
    prop = prop or HeatPropagator(scenario)
    coef = EntropyCoefficients(K)
    size = g.size
    U = u0.reshape(len(u0), size).T.copy()
    samples = []
    current = 0.0
    for t in scenario.t_grid:
        U = prop.propagate(U, current, float(t))
        current = float(t)
        samples.append((current, U.T.reshape(u0.shape).copy()))
    A = np.maximum(np.max(u0.reshape(len(u0), -1), axis=1), 0)
    for _, u in samples:
        A = np.maximum(A, np.max(u.reshape(len(u), -1), axis=1))
    A = A.reshape((-1,) + (1,) * g.dim)
    hh = np.full(len(u0), np.inf)
    ham = np.full(len(u0), np.inf)
    dominance = True
    for t, u in samples:
        if t <= 0:
            continue
        L = np.log(A / u)
        G = gradient_sq(u, g, scenario.metric, t) / (u * u)
        m_hh = coef.D(t) * L - G
        m_ham = (1.0 / t + 2.0 * K) * L - G
        dominance = dominance and bool(np.all(m_ham >= m_hh))
        hh = np.minimum(hh, _node_min(m_hh, g.dim))
        ham = np.minimum(ham, _node_min(m_ham, g.dim))
    slack = scenario.tolerance()
    det = {"K": K}
    return (InequalityReport("harnack-hh", hh, slack, details=det),
            InequalityReport("harnack-ham", ham, slack, details=det),
            dominance)


# --------------------------------------------------------------------------
# interpolation along the proof


def _node_index(grid, probe):
    if probe is None:
        return tuple(n // 2 for n in grid.shape)
    return tuple(np.atleast_1d(probe))


def interpolation_identity_check(scenario: FlowScenario, s: float, T: float, f: np.ndarray, samples: int = 9,
                                 probe=None, prop=None) -> dict:
    """Compare ``d/dr alpha(r)`` with ``-P_{r,T}(|grad u_r|^2 / u_r)`` at a probe node.

    ``alpha(r) = P_{r,T}(u_r log u_r)`` with ``u_r = P_{s,r} f``.  Returns the
    maximum residual over interior ``r`` samples (centred differences) and
    the residual of the integrated form
    ``alpha(T) - alpha(s) = -int_s^T P_{r,T}(|grad u_r|^2/u_r) dr`` (Simpson rule).
    """
    from scipy.integrate import simpson

    if not s < T:
        raise ValueError("need s < T")
    g = scenario.grid
    prop = prop or HeatPropagator(scenario)
    node = _node_index(g, probe)
    rs = np.linspace(s, T, samples)
    alpha = np.empty(samples)
    integrand = np.empty(samples)
    u = np.asarray(f, dtype=float)
    current = s
    for k, r in enumerate(rs):
        u = evolve(prop, u, current, r)
        current = r
        stack = np.stack([u * np.log(u), gradient_sq(u, g, scenario.metric, r) / u])
        P = evolve(prop, stack, r, T) if r < T else stack
        alpha[k] = P[0][node]
        integrand[k] = P[1][node]
    dr = rs[1] - rs[0]
    deriv = (alpha[2:] - alpha[:-2]) / (2 * dr)
    pointwise = float(np.max(np.abs(deriv + integrand[1:-1])))
    integrated = float(abs(alpha[-1] - alpha[0] + simpson(integrand, x=rs)))
    return {"residual": pointwise, "integrated_residual": integrated, "alpha": alpha, "integrand": integrand, "r": rs}


def psi_monotonicity_check(scenario: FlowScenario, s: float, T: float, f: np.ndarray, samples: int = 9,
                           probe=None, prop=None) -> InequalityReport:
    """``psi(r) = e^{-2K(T-r)} P_{r,T}|grad P_{s,r} f|^2`` is non-increasing in ``r``.

    Margins are ``psi(r_k) - psi(r_{k+1})``; with ``probe=None`` the minimum
    is taken over all nodes.
    """
    if not s < T:
        raise ValueError("need s < T")
    g = scenario.grid
    prop = prop or HeatPropagator(scenario)
    rs = np.linspace(s, T, samples)
    psi = []
    u = np.asarray(f, dtype=float)
    current = s
    for r in rs:
        u = evolve(prop, u, current, r)
        current = r
        grad2 = gradient_sq(u, g, scenario.metric, r)
        P = evolve(prop, grad2, r, T) if r < T else grad2
        psi.append(math.exp(-2 * scenario.K * (T - r)) * P)
    psi = np.stack(psi)
    steps = psi[:-1] - psi[1:]
    if probe is not None:
        steps = steps[(slice(None),) + _node_index(g, probe)]
        margins = steps
    else:
        margins = _node_min(steps, g.dim)
    return InequalityReport("psi-monotone", np.asarray(margins), scenario.tolerance(), details={"s": s, "T": T})
