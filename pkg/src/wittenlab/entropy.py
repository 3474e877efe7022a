"""Entropy functionals along the heat flow and their time derivatives.

``H_K(f, t) = D_K(t) * (Ent f - Ent P_{0,t} f)`` and
``W_K = H_K + beta_K(t) dH_K/dt`` are sampled on a uniform time grid.  First
derivatives are available two ways: fourth-order differences of the samples
and the dissipation identity ``dH = D_K [I(P_t f) + C_K (Ent P_t f - Ent f)]``
with the discrete Fisher information ``I(u) = -<L u, log u>_mu``.  The two
agree up to the time-stepping error, which separates formula errors from
discretization errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    M_INFINITY,
    DimensionError,
    FlowScenario,
    GeometryError,
    WeightedMeasure,
    measure_weights,
    metric_at,
    super_tensor,
)
from .operators import HeatPropagator, field_derivatives, hessian

__all__ = [
    "EntropyCoefficients",
    "EntropyCurve",
    "HmkCurve",
    "entropy_rel",
    "fisher",
    "discrete_fisher",
    "time_derivative",
    "h_entropy_curve",
    "w_entropy_curve",
    "rhs_w_dissipation",
    "second_order_lhs",
    "km_second_order_lhs",
    "near_delta",
    "hmk_expansion",
    "hmk_wmk_curve",
]

SERIES_THRESHOLD = 1e-4


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class EntropyCoefficients:
    """``C_K``, ``D_K``, ``beta_K``, ``alpha_K`` and ``2K coth(Kt)``.

    Below ``|K t| < 1e-4`` a Taylor expansion replaces the closed forms.
    ``branch`` forces ``"series"`` or ``"closed"`` evaluation everywhere,
    which is how the two sides of the seam are compared.
    """

    K: float
    branch: str | None = None

    def __post_init__(self):
        if self.branch not in (None, "series", "closed"):
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.branch == "closed" and self.K == 0.0:
            raise ValueError("closed-form coefficients are undefined at K = 0")

    def _split(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("coefficients are defined for t > 0")
        y = self.K * t
        if self.branch == "series" or self.K == 0.0:
            use = np.ones(t.shape, dtype=bool)
        elif self.branch == "closed":
            use = np.zeros(t.shape, dtype=bool)
        else:
            use = np.abs(y) < SERIES_THRESHOLD
        return t, y, use

    def _eval(self, t, series, closed):
        t, y, use = self._split(t)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(use, series(t, y), closed(t, y) if self.K != 0.0 else 0.0)
        return out[()] if out.ndim == 0 else out

    def C(self, t):
        """``2K / (e^{2Kt} - 1)``."""
        K = self.K
        return self._eval(t, lambda t, y: (1 - y + y * y / 3 - y**4 / 45) / t, lambda t, y: 2 * K / np.expm1(2 * y))

    def D(self, t):
        """``2K / (1 - e^{-2Kt})``, equal to ``C_K + 2K``."""
        K = self.K
        return self._eval(t, lambda t, y: (1 + y + y * y / 3 - y**4 / 45) / t, lambda t, y: -2 * K / np.expm1(-2 * y))

    def D_prime(self, t):
        return -self.C(t) * self.D(t)

    def beta(self, t):
        """``sinh(2Kt) / (2K)``."""
        K = self.K
        return self._eval(t, lambda t, y: t * (1 + (2 * y) ** 2 / 6 + (2 * y) ** 4 / 120), lambda t, y: np.sinh(2 * y) / (2 * K))

    def beta_prime(self, t):
        t = np.asarray(t, dtype=float)
        out = np.cosh(2 * self.K * t)
        return out[()] if out.ndim == 0 else out

    def alpha(self, t):
        """``K tanh(Kt)``."""
        t = np.asarray(t, dtype=float)
        out = self.K * np.tanh(self.K * t)
        return out[()] if out.ndim == 0 else out

    def two_k_coth(self, t):
        """``2K coth(Kt)``, tending to ``2/t`` as ``K -> 0``."""
        K = self.K
        return self._eval(t, lambda t, y: 2 * (1 + y * y / 3 - y**4 / 45) / t, lambda t, y: 2 * K / np.tanh(y))

    def one_plus_e2kt(self, t):
        t = np.asarray(t, dtype=float)
        out = 1.0 + np.exp(2 * self.K * t)
        return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# static functionals


def entropy_rel(f: np.ndarray, measure: WeightedMeasure) -> float:
    """``int f log f dmu`` (``f > 0`` is a precondition)."""
    return measure.integrate(f * np.log(f))


def fisher(f: np.ndarray, scenario: FlowScenario, t: float) -> float:
    """Node quadrature of ``|grad f|^2 / f`` against ``mu(t)``."""
    g = scenario.grid
    grad, _ = field_derivatives(f, g)
    lam = metric_at(scenario.metric, g, t)
    mu = measure_weights(g, scenario.metric, scenario.potential, t)
    return mu.integrate(sum(d * d for d in grad) / lam / f)


def discrete_fisher(f: np.ndarray, op) -> float:
    """``-<L f, log f>_mu`` through the edge form; the exact entropy dissipation of the scheme."""
    return op.dirichlet(f, np.log(f))


def _log_terms(u, scenario, t, K):
    """``(int |Hess log u|^2 u, int S(grad log u, grad log u) u)`` with ``S`` the super-flow tensor."""
    g = scenario.grid
    lam = metric_at(scenario.metric, g, t)
    mu = measure_weights(g, scenario.metric, scenario.potential, t)
    w = np.log(u)
    H = hessian(w, g, scenario.metric, t)
    grad, _ = field_derivatives(w, g)
    S = super_tensor(scenario, t, M_INFINITY, K)
    hint = mu.integrate(H.norm_sq(lam) * u)
    curv = mu.integrate(S.contract([d / lam for d in grad]) * u)
    return hint, curv


# --------------------------------------------------------------------------
# time differences


def _fd_weights(offsets, order):
    offsets = np.asarray(offsets, dtype=float)
    k = np.arange(len(offsets))
    A = offsets[None, :] ** k[:, None] / np.array([math.factorial(int(i)) for i in k])[:, None]
    rhs = np.zeros(len(offsets))
    rhs[order] = 1.0
    return np.linalg.solve(A, rhs)


def time_derivative(values, t_grid, order: int = 1):
    """Five-point finite difference in ``t``; returns ``(derivative, lower_accuracy_mask)``.

    Interior samples use the centred fourth-order stencil; the two samples at
    each end use shifted five-point stencils and are flagged.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(t_grid)
    if n < 5:
        raise ValueError("time differences need at least 5 samples")
    steps = np.diff(t_grid)
    dt = float(steps.mean())
    if np.max(np.abs(steps - dt)) > 1e-9 * max(dt, abs(t_grid[-1])):
        raise ValueError("t_grid must be uniform for time differences")
    out = np.empty(n)
    flag = np.zeros(n, dtype=bool)
    for i in range(n):
        start = min(max(i - 2, 0), n - 5)
        offs = np.arange(start, start + 5) - i
        out[i] = _fd_weights(offs, order) @ values[start : start + 5] / dt**order
        flag[i] = start != i - 2
    return out, flag


# --------------------------------------------------------------------------
# curves


@dataclass
class EntropyCurve:
    """Sampled ``H_K``/``W_K`` data along one heat flow.

    ``dH``/``d2H``/``dW`` are time differences of the samples; the
    ``*_identity`` arrays are the analytic counterparts built from fields at
    the same instant.  ``lower_accuracy`` flags the one-sided end samples.
    """

    K: float
    t: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    dH_identity: np.ndarray
    d2H: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    dW_identity: np.ndarray
    rhs: np.ndarray
    fisher: np.ndarray
    discrete_fisher: np.ndarray
    hessian_integral: np.ndarray
    curvature_integral: np.ndarray
    entropy: np.ndarray
    mass: np.ndarray
    lower_accuracy: np.ndarray
    E0: float = 0.0
    branch: str | None = None
    stats: dict = field(default_factory=dict)

    CSV_COLUMNS = ("t", "H_K", "dH", "d2H", "W_K", "dW", "rhs", "fisher", "hessian_integral")

    def rows(self):
        cols = (self.t, self.H, self.dH, self.d2H, self.W, self.dW, self.rhs, self.fisher, self.hessian_integral)
        return [tuple(float(c[i]) for c in cols) for i in range(len(self.t))]

    @property
    def coefficients(self) -> EntropyCoefficients:
        return EntropyCoefficients(self.K, self.branch)

    def w_with(self, coef: EntropyCoefficients) -> np.ndarray:
        """``W`` recomputed from the stored flow data with other coefficients.

        The flow does not depend on ``K``, so this isolates the coefficient
        dependence (used to compare the two sides of the ``K -> 0`` seam).
        """
        out = np.empty(len(self.t))
        for i, t in enumerate(self.t):
            if t <= 0:
                out[i] = self.H[i]
                continue
            gap = self.E0 - self.entropy[i]
            dH = coef.D(t) * (self.discrete_fisher[i] - coef.C(t) * gap)
            out[i] = coef.D(t) * gap + coef.beta(t) * dH
        return out

    def index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t = {t} is not a sample of the curve")
        return i

    @property
    def second_order_lhs(self) -> np.ndarray:
        """``d2H + 2K coth(Kt) dH + 2 D_K int |Hess log u|^2 u`` (``nan`` at ``t = 0``)."""
        return _masked_positive(self.t, lambda t, i: self.d2H[i] + self.coefficients.two_k_coth(t) * self.dH_identity[i] + 2 * self.coefficients.D(t) * self.hessian_integral[i])

    @property
    def second_order_identity(self) -> np.ndarray:
        """``-2 D_K int S(grad log u, grad log u) u``, the closed form of :attr:`second_order_lhs`."""
        return _masked_positive(self.t, lambda t, i: -2 * self.coefficients.D(t) * self.curvature_integral[i])

    @property
    def interior(self) -> np.ndarray:
        return ~self.lower_accuracy & (self.t > 0)


def _masked_positive(t, fn):
    out = np.full(len(t), np.nan)
    for i, ti in enumerate(t):
        if ti > 0:
            out[i] = fn(ti, i)
    return out


def _sample_flow(scenario: FlowScenario, f: np.ndarray, prop: HeatPropagator):
    """Yield ``(t, u, op)`` for ``u = P_{0,t} f`` along the time grid."""
    size = scenario.grid.size
    U = f.reshape(size, 1).astype(float)
    current = 0.0
    for t in scenario.t_grid:
        U = prop.propagate(U, current, float(t))
        current = float(t)
        yield current, U[:, 0].reshape(scenario.grid.shape), prop.operator(current)


def h_entropy_curve(scenario: FlowScenario, f=None, K=None, prop: HeatPropagator | None = None,
                    branch: str | None = None) -> EntropyCurve:
    """Build the full entropy curve (``H_K``, ``W_K``, their derivatives, dissipation terms).

    ``f`` defaults to the scenario's initial datum and ``K`` to the scenario
    constant.  Time differences require a uniform ``t_grid``.
    """
    K = scenario.K if K is None else float(K)
    f = scenario.initial if f is None else np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise GeometryError("entropy curves need a positive datum")
    t_grid = scenario.t_grid
    time_derivative(np.zeros(len(t_grid)), t_grid)  # uniformity check before any work
    prop = prop or HeatPropagator(scenario)
    coef = EntropyCoefficients(K, branch)
    mu0 = measure_weights(scenario.grid, scenario.metric, scenario.potential, 0.0)
    E0 = entropy_rel(f, mu0)
    n = len(t_grid)
    arrays = {k: np.empty(n) for k in ("H", "dHi", "fisher", "dfisher", "hint", "curv", "ent", "mass")}
    for i, (t, u, op) in enumerate(_sample_flow(scenario, f, prop)):
        if np.any(u <= 0):
            raise GeometryError(f"evolved field lost positivity at t = {t}")
        mu = op.measure
        E = entropy_rel(u, mu)
        Id = discrete_fisher(u, op)
        arrays["ent"][i] = E
        arrays["mass"][i] = mu.integrate(u)
        arrays["dfisher"][i] = Id
        arrays["fisher"][i] = fisher(u, scenario, t)
        arrays["hint"][i], arrays["curv"][i] = _log_terms(u, scenario, t, K)
        if t > 0:
            D, C = coef.D(t), coef.C(t)
            arrays["H"][i] = D * (E0 - E)
            arrays["dHi"][i] = D * (Id + C * (E - E0))
        else:
            # limits as t -> 0: H -> I(f), dH -> -2 int Gamma_2-type term, taken from differences below
            arrays["H"][i] = Id
            arrays["dHi"][i] = np.nan
    H = arrays["H"]
    dH, flag1 = time_derivative(H, t_grid, 1)
    dHi = np.where(np.isnan(arrays["dHi"]), dH, arrays["dHi"])
    d2H, flag2 = time_derivative(dHi, t_grid, 1)
    beta = np.array([coef.beta(t) if t > 0 else 0.0 for t in t_grid])
    W = H + beta * dHi
    dW, _ = time_derivative(W, t_grid, 1)
    dW_id = _masked_positive(t_grid, lambda t, i: coef.beta(t) * (d2H[i] + coef.two_k_coth(t) * dHi[i]))
    rhs = -coef.one_plus_e2kt(t_grid) * (arrays["hint"] + arrays["curv"])
    return EntropyCurve(
        K=K, t=t_grid.copy(), H=H, dH=dH, dH_identity=dHi, d2H=d2H, W=W, dW=dW, dW_identity=dW_id,
        rhs=rhs, fisher=arrays["fisher"], discrete_fisher=arrays["dfisher"],
        hessian_integral=arrays["hint"], curvature_integral=arrays["curv"], entropy=arrays["ent"],
        mass=arrays["mass"], lower_accuracy=flag1 | flag2, E0=E0, branch=branch, stats=dict(prop.stats),
    )


def w_entropy_curve(scenario: FlowScenario, f=None, K=None, prop=None, branch=None) -> EntropyCurve:
    """Alias of :func:`h_entropy_curve`; the returned curve always carries ``W_K``."""
    return h_entropy_curve(scenario, f, K, prop, branch)


def rhs_w_dissipation(scenario: FlowScenario, t: float, u: np.ndarray, K=None) -> float:
    """``-(1 + e^{2Kt}) int [|Hess log u|^2 + S(grad log u, grad log u)] u dmu``.

    ``S = 1/2 dg/dt + Ric(L) - K g`` (the time derivative vanishes for static metrics).
    """
    K = scenario.K if K is None else K
    hint, curv = _log_terms(u, scenario, t, K)
    return float(-(1.0 + math.exp(2 * K * t)) * (hint + curv))


def _interior_sample(curve: EntropyCurve, t: float) -> int:
    i = curve.index(t)
    if curve.lower_accuracy[i] or curve.t[i] <= 0:
        raise ValueError(f"t = {t} is too close to the ends of the time grid")
    return i


def second_order_lhs(scenario: FlowScenario, t: float, curve: EntropyCurve | None = None):
    """``(lhs, identity)`` of the second-order entropy relation at an interior sample."""
    curve = curve or h_entropy_curve(scenario)
    i = _interior_sample(curve, t)
    return float(curve.second_order_lhs[i]), float(curve.second_order_identity[i])


def km_second_order_lhs(scenario: FlowScenario, t: float, m: float, curve: EntropyCurve | None = None) -> float:
    """``d2H + 2K coth(Kt) dH + (2 D_K / m) I^2`` at an interior sample.

    The dimensional term uses the Fisher information of a flow with unit
    mass; the datum must satisfy ``int f dmu = 1``.
    """
    n = scenario.grid.dim
    if math.isinf(m) or not m > n:
        raise DimensionError(f"need finite m > n = {n}, got {m}")
    curve = curve or h_entropy_curve(scenario)
    i = _interior_sample(curve, t)
    if abs(curve.mass[i] - 1.0) > 1e-8:
        raise GeometryError("the dimensional term assumes a unit-mass datum")
    coef = curve.coefficients
    ti = curve.t[i]
    I = curve.discrete_fisher[i]
    return float(curve.d2H[i] + coef.two_k_coth(ti) * curve.dH_identity[i] + 2 * coef.D(ti) / m * I * I)


# --------------------------------------------------------------------------
# dimensional entropy with a fundamental-solution surrogate


def near_delta(scenario: FlowScenario, width: float = 3.0, center=None) -> np.ndarray:
    """Gaussian of standard deviation ``width * h`` normalized to ``int u dmu(0) = 1``."""
    g = scenario.grid
    sigma = width * g.h
    c = center if center is not None else [0.0] * g.dim
    r2 = sum((x - ci) ** 2 for x, ci in zip(g.coords, c))
    u = np.exp(-r2 / (2 * sigma * sigma))
    mu = measure_weights(g, scenario.metric, scenario.potential, 0.0)
    u = np.maximum(u, 1e-300)
    return u / mu.integrate(u)


def hmk_expansion(m: float, K: float, t):
    """``-(m/2)(1 + log(4 pi t) + K t + K^2 t^2 / 6)``."""
    t = np.asarray(t, dtype=float)
    return -0.5 * m * (1 + np.log(4 * math.pi * t) + K * t + K * K * t * t / 6)


@dataclass
class HmkCurve:
    m: float
    K: float
    t: np.ndarray
    H: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    entropy: np.ndarray
    trusted: np.ndarray
    lower_accuracy: np.ndarray

    @property
    def monotone(self) -> bool:
        """``dW/dt <= 0`` over the trusted interior samples (diagnostic)."""
        mask = self.trusted & ~self.lower_accuracy
        return bool(np.all(self.dW[mask] <= 1e-8))

    def identity_residual(self, oracle_entropy) -> np.ndarray:
        """``H - (Ent_ref(t) - Ent(u|mu))`` for a reference entropy callable ``t -> float``."""
        ref = np.array([oracle_entropy(t) for t in self.t])
        return self.H - (ref - self.entropy)


def hmk_wmk_curve(scenario: FlowScenario, m: float, K: float | None = None, u0=None, prop=None) -> HmkCurve:
    """``H_{m,K}(u) = -Ent(u|mu) + hmk_expansion`` and ``W_{m,K} = d/dt (t H_{m,K})``.

    ``K`` defaults to ``-scenario.K``: the dimensional entropy is stated for
    flows with curvature bounded below by ``-K``.  Without ``u0`` the flow
    starts from :func:`near_delta`; samples with ``t < 10 h^2`` are marked
    untrusted.
    """
    n = scenario.grid.dim
    if not m >= n:
        raise DimensionError(f"m = {m} < n = {n}")
    K = -scenario.K if K is None else float(K)
    if scenario.t_grid[0] <= 0:
        raise ValueError("the dimensional entropy is sampled at t > 0 only")
    mu0 = measure_weights(scenario.grid, scenario.metric, scenario.potential, 0.0)
    if u0 is None:
        u0 = near_delta(scenario)
    else:
        u0 = np.asarray(u0, dtype=float)
        mass = mu0.integrate(u0)
        if abs(mass - 1.0) > 1e-8:
            raise GeometryError(f"initial datum must have unit mass, got {mass:.12g}")
    prop = prop or HeatPropagator(scenario)
    t_grid = scenario.t_grid
    ent = np.empty(len(t_grid))
    dent = np.empty(len(t_grid))
    for i, (t, u, op) in enumerate(_sample_flow(scenario, u0, prop)):
        ent[i] = entropy_rel(u, op.measure)
        dent[i] = -discrete_fisher(u, op)
    expansion = hmk_expansion(m, K, t_grid)
    H = -ent + expansion
    dexp = -0.5 * m * (1 / t_grid + K + K * K * t_grid / 3)
    W = H + t_grid * (-dent + dexp)
    try:
        dW, flag = time_derivative(W, t_grid, 1)
    except ValueError:  # non-uniform sampling: values only
        dW, flag = np.full(len(t_grid), np.nan), np.ones(len(t_grid), dtype=bool)
    trusted = t_grid >= 10 * scenario.grid.h**2
    return HmkCurve(m, K, t_grid.copy(), H, W, dW, ent, trusted, flag)
