"""Discretized weighted manifolds with time-dependent metrics and potentials.

Every geometry here is a flat chart (1-D/2-D torus or Euclidean box) carrying a
metric of the form ``g = lam(t, x) * delta`` with either a spatially constant
multiplier ``lam = c(t)`` (isotropic scaling) or a conformal factor
``lam = exp(2 a(t, x))`` (2-D only).  Curvature quantities are evaluated in
closed form for these families; spatial derivatives of the analytic families
(potential, conformal factor) use second-order central stencils on shifted
evaluations, which keeps them exact for quadratics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "M_INFINITY",
    "GeometryError",
    "DegenerateMetricError",
    "DimensionError",
    "ConventionError",
    "GridSpec",
    "MetricFamily",
    "PotentialFamily",
    "WeightedMeasure",
    "SymTensorField",
    "FlowScenario",
    "metric_at",
    "measure_weights",
    "ricci_tensor",
    "potential_hessian",
    "bakry_emery_ricci",
    "super_tensor",
    "super_flow_residual",
    "compatibility_residual",
    "analytic_derivatives",
]

#: Sentinel for the infinite-dimensional Bakry-Emery tensor.  Compared with
#: ``math.isinf`` so the ``1/(m - n)`` term vanishes exactly.
M_INFINITY = math.inf

FieldFn = Callable[[float, tuple], np.ndarray]


class GeometryError(ValueError):
    """Base class for invalid geometric input."""


class DegenerateMetricError(GeometryError):
    pass


class DimensionError(GeometryError):
    pass


class ConventionError(GeometryError):
    """``m == n`` requested for a non-constant potential."""


# --------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on a periodic torus ``[0, 2pi)^n`` or a box ``[-R, R]^n``.

    Torus nodes sit at ``i*h``; box nodes are cell centred at
    ``-R + (i + 1/2) h`` so that zero-flux walls fall on cell faces.
    """

    domain: str
    dim: int
    points: int
    half_width: float = math.pi

    def __post_init__(self):
        if self.domain not in ("torus", "box"):
            raise GeometryError(f"unknown domain kind {self.domain!r}")
        if self.dim not in (1, 2):
            raise DimensionError(f"dimension must be 1 or 2, got {self.dim}")
        if int(self.points) != self.points or self.points < 8:
            raise GeometryError(f"points_per_axis must be an integer >= 8, got {self.points}")
        if self.domain == "box" and not self.half_width > 0:
            raise GeometryError("box half-width must be positive")

    @property
    def periodic(self) -> bool:
        return self.domain == "torus"

    @property
    def extent(self) -> float:
        return 2 * math.pi if self.periodic else 2 * self.half_width

    @property
    def h(self) -> float:
        return self.extent / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        i = np.arange(self.points, dtype=float)
        if self.periodic:
            return i * self.h
        return -self.half_width + (i + 0.5) * self.h

    @cached_property
    def coords(self) -> tuple:
        if self.dim == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    def shifted(self, offsets: Sequence[float]) -> tuple:
        return tuple(x + o for x, o in zip(self.coords, offsets))

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.domain, self.dim, self.points * factor, self.half_width)

    def interior_mask(self, width: int = 2) -> np.ndarray:
        """Nodes at least ``width`` cells away from a box wall (all nodes on a torus)."""
        mask = np.ones(self.shape, dtype=bool)
        if self.periodic or width <= 0:
            return mask
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = slice(0, width)
            mask[tuple(sl)] = False
            sl[ax] = slice(self.points - width, None)
            mask[tuple(sl)] = False
        return mask


def analytic_derivatives(fun: Callable[[tuple], np.ndarray], grid: GridSpec):
    """Value, gradient and Hessian of an analytic field by central stencils.

    ``fun`` maps a coordinate tuple to an array.  Returns ``(f, grad, hess)``
    with ``grad`` a list of arrays and ``hess`` a dict keyed by ``(i, j)``,
    ``i <= j``.
    """
    h = grid.h
    n = grid.dim
    X = grid.coords
    f0 = np.broadcast_to(fun(X), grid.shape).astype(float)
    grad, hess = [], {}

    def at(*offs):
        return np.broadcast_to(fun(grid.shifted(offs)), grid.shape)

    for i in range(n):
        e = [0.0] * n
        e[i] = h
        fp = at(*e)
        e[i] = -h
        fm = at(*e)
        grad.append((fp - fm) / (2 * h))
        hess[(i, i)] = (fp - 2 * f0 + fm) / (h * h)
    if n == 2:
        hess[(0, 1)] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h)
    return f0, grad, hess


# --------------------------------------------------------------------------
# metric and potential families


def _const(value):
    return lambda t, X: np.full(np.shape(X[0]), float(value))


@dataclass(frozen=True)
class MetricFamily:
    """``g(t) = lam(t, x) * delta`` for the three supported variants.

    ``c``/``dc`` give the isotropic multiplier and its time derivative;
    ``a``/``da_dt`` give the conformal exponent (``lam = exp(2a)``).
    """

    variant: str
    c: Callable[[float], float] | None = None
    dc: Callable[[float], float] | None = None
    a: FieldFn | None = None
    da_dt: FieldFn | None = None
    label: str = ""

    def __post_init__(self):
        if self.variant not in ("static-euclidean", "isotropic-scaling", "conformal-2d"):
            raise GeometryError(f"unknown metric variant {self.variant!r}")
        if self.variant == "isotropic-scaling" and (self.c is None or self.dc is None):
            raise GeometryError("isotropic scaling needs c(t) and c'(t)")
        if self.variant == "conformal-2d" and (self.a is None or self.da_dt is None):
            raise GeometryError("conformal metric needs a(t, x) and its time derivative")

    @classmethod
    def static(cls) -> "MetricFamily":
        return cls("static-euclidean", label="static")

    @classmethod
    def exponential_scaling(cls, rate: float) -> "MetricFamily":
        """``c(t) = exp(rate * t)``."""
        return cls(
            "isotropic-scaling",
            c=lambda t: math.exp(rate * t),
            dc=lambda t: rate * math.exp(rate * t),
            label=f"exp({rate}t)",
        )

    @classmethod
    def conformal_wave(cls, amplitude: float, wavenumbers=(1, 1), growth: float = 0.0):
        """``a(t,x) = amplitude * exp(growth t) * sum_i cos(k_i x_i)`` over ``k_i != 0``."""
        ks = [float(k) for k in wavenumbers]

        def shape(X):
            out = np.zeros(np.shape(X[0]))
            for k, x in zip(ks, X):
                if k != 0.0:
                    out = out + np.cos(k * x)
            return out

        return cls(
            "conformal-2d",
            a=lambda t, X: amplitude * math.exp(growth * t) * shape(X),
            da_dt=lambda t, X: growth * amplitude * math.exp(growth * t) * shape(X),
            label=f"conformal({amplitude},{tuple(ks)},{growth})",
        )

    @property
    def static_in_time(self) -> bool:
        return self.variant == "static-euclidean"

    def _scale(self, t: float) -> float:
        c = float(self.c(t))
        if not c > 0 or not math.isfinite(c):
            raise DegenerateMetricError(f"non-positive metric multiplier c({t}) = {c}")
        return c

    def log_multiplier(self, t: float, X: tuple) -> np.ndarray:
        if self.variant == "static-euclidean":
            return np.zeros(np.shape(X[0]))
        if self.variant == "isotropic-scaling":
            return np.full(np.shape(X[0]), math.log(self._scale(t)))
        return 2.0 * self.a(t, X)

    def dlog_multiplier_dt(self, t: float, X: tuple) -> np.ndarray:
        if self.variant == "static-euclidean":
            return np.zeros(np.shape(X[0]))
        if self.variant == "isotropic-scaling":
            return np.full(np.shape(X[0]), self.dc(t) / self._scale(t))
        return 2.0 * self.da_dt(t, X)

    def multiplier(self, t: float, X: tuple) -> np.ndarray:
        return np.exp(self.log_multiplier(t, X))


@dataclass(frozen=True)
class PotentialFamily:
    """Potential ``phi(t, x)`` with its analytic time derivative."""

    phi: FieldFn
    dphi_dt: FieldFn
    mode: str = "free"
    time_dependent: bool = False
    constant: bool = False
    label: str = ""

    def __post_init__(self):
        if self.mode not in ("free", "fixed-measure"):
            raise GeometryError(f"unknown compatibility mode {self.mode!r}")

    @classmethod
    def zero(cls) -> "PotentialFamily":
        return cls(_const(0.0), _const(0.0), constant=True, label="zero")

    @classmethod
    def quadratic(cls, kappa: float, center=None) -> "PotentialFamily":
        """``kappa * |x - center|^2 / 2``; ``kappa`` is signed."""

        def phi(t, X):
            c = center if center is not None else [0.0] * len(X)
            return 0.5 * kappa * sum((x - ci) ** 2 for x, ci in zip(X, c))

        return cls(phi, _const(0.0), constant=(kappa == 0), label=f"quadratic({kappa})")

    @classmethod
    def trig_sum(cls, terms) -> "PotentialFamily":
        """Sum of ``amp * cos(k . x + phase)``; each term is ``(amp, k, phase)``."""
        terms = [(float(a), tuple(float(k) for k in np.atleast_1d(ks)), float(p)) for a, ks, p in terms]

        def phi(t, X):
            out = np.zeros(np.shape(X[0]))
            for amp, ks, ph in terms:
                out = out + amp * np.cos(sum(k * x for k, x in zip(ks, X)) + ph)
            return out

        const = all(a == 0 or not any(ks) for a, ks, _ in terms)
        return cls(phi, _const(0.0), constant=const, label="trig-sum")

    @classmethod
    def compensated(cls, base: "PotentialFamily", metric: MetricFamily, dim: int) -> "PotentialFamily":
        """``phi = base + (n/2) log lam`` so that ``e^{-phi} dvol`` is frozen in time."""
        half_n = 0.5 * dim
        return cls(
            lambda t, X: base.phi(t, X) + half_n * metric.log_multiplier(t, X),
            lambda t, X: base.dphi_dt(t, X) + half_n * metric.dlog_multiplier_dt(t, X),
            mode="fixed-measure",
            time_dependent=not metric.static_in_time or base.time_dependent,
            constant=base.constant and metric.variant != "conformal-2d",
            label=f"compensated({base.label})",
        )

    def at(self, t: float) -> Callable[[tuple], np.ndarray]:
        return lambda X: self.phi(t, X)


# --------------------------------------------------------------------------
# measure and tensors


@dataclass(frozen=True)
class WeightedMeasure:
    """Per-node quadrature weights ``e^{-phi} sqrt(det g) h^n``."""

    weights: np.ndarray

    def __post_init__(self):
        if not np.all(self.weights > 0):
            raise GeometryError("measure weights must be positive")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(self.weights * f))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.weights * u * v))

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(self.inner(u, u))


_INDEX = {1: [(0, 0)], 2: [(0, 0), (0, 1), (1, 1)]}


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric ``n x n`` tensor per node, upper triangle stored.

    Components are in chart coordinates (covariant).  Eigenvalue helpers take
    the metric multiplier ``lam`` and return eigenvalues relative to ``g``.
    """

    dim: int
    comps: np.ndarray

    @classmethod
    def from_dict(cls, dim: int, parts: dict, shape) -> "SymTensorField":
        comps = np.stack([np.broadcast_to(parts.get(ij, 0.0), shape).astype(float) for ij in _INDEX[dim]])
        return cls(dim, comps)

    @classmethod
    def isotropic(cls, dim: int, scalar: np.ndarray) -> "SymTensorField":
        scalar = np.asarray(scalar, dtype=float)
        parts = {(i, i): scalar for i in range(dim)}
        return cls.from_dict(dim, parts, scalar.shape)

    @property
    def shape(self):
        return self.comps.shape[1:]

    def __getitem__(self, ij):
        i, j = sorted(ij)
        return self.comps[_INDEX[self.dim].index((i, j))]

    def __add__(self, other: "SymTensorField") -> "SymTensorField":
        return SymTensorField(self.dim, self.comps + other.comps)

    def __sub__(self, other: "SymTensorField") -> "SymTensorField":
        return SymTensorField(self.dim, self.comps - other.comps)

    def scaled(self, factor) -> "SymTensorField":
        return SymTensorField(self.dim, self.comps * factor)

    def matrix(self) -> np.ndarray:
        n = self.dim
        out = np.empty(self.shape + (n, n))
        for i in range(n):
            for j in range(n):
                out[..., i, j] = self[i, j]
        return out

    def eigenvalues(self, lam=1.0) -> tuple:
        """(min, max) eigenvalues of ``g^{-1} T`` for ``g = lam * delta``."""
        if self.dim == 1:
            e = self[0, 0] / lam
            return e, e
        a, b, c = self.comps
        mid = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return (mid - rad) / lam, (mid + rad) / lam

    def min_eigenvalue(self, lam=1.0) -> np.ndarray:
        return self.eigenvalues(lam)[0]

    def min_eigenvector(self) -> np.ndarray:
        """Unit eigenvector (chart components) of the smallest eigenvalue, shape ``(*shape, n)``."""
        if self.dim == 1:
            return np.ones(self.shape + (1,))
        _, vecs = np.linalg.eigh(self.matrix())
        return vecs[..., :, 0]

    def contract(self, v: Sequence[np.ndarray]) -> np.ndarray:
        """``T(v, v)`` for a vector field given by chart components."""
        out = 0.0
        for i in range(self.dim):
            for j in range(self.dim):
                out = out + self[i, j] * v[i] * v[j]
        return out

    def norm_sq(self, lam=1.0) -> np.ndarray:
        """``|T|_g^2 = g^{ik} g^{jl} T_ij T_kl``."""
        s = 0.0
        for i in range(self.dim):
            for j in range(self.dim):
                s = s + self[i, j] ** 2
        return s / lam**2


# --------------------------------------------------------------------------
# scenario


@dataclass
class FlowScenario:
    """A complete experiment: geometry, constants, initial datum and time grid.

    ``allowance`` is the constant ``C`` of the discretization allowance
    ``C h^2`` added to verdict slacks.
    """

    grid: GridSpec
    metric: MetricFamily
    potential: PotentialFamily
    K: float
    t_grid: np.ndarray
    initial: np.ndarray
    m: float = M_INFINITY
    allowance: float = 1.0
    name: str = ""
    dt_max: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.initial = np.broadcast_to(np.asarray(self.initial, dtype=float), self.grid.shape).copy()
        if self.metric.variant == "conformal-2d" and self.grid.dim != 2:
            raise DimensionError("conformal-2d metric requires a 2-D grid")
        if self.t_grid.ndim != 1 or len(self.t_grid) < 5:
            raise GeometryError("t_grid needs at least 5 samples")
        if np.any(np.diff(self.t_grid) <= 0) or self.t_grid[0] < 0:
            raise GeometryError("t_grid must be strictly increasing and non-negative")
        if not np.all(self.initial > 0):
            raise GeometryError("initial datum must be positive")
        if not math.isfinite(self.K):
            raise GeometryError("K must be finite")
        if not (math.isinf(self.m) and self.m > 0) and self.m < self.grid.dim:
            raise DimensionError(f"m = {self.m} is below the dimension n = {self.grid.dim}")

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def static(self) -> bool:
        return self.metric.static_in_time and not self.potential.time_dependent

    @property
    def n(self) -> int:
        return self.grid.dim

    def tolerance(self, scale: float = 1.0) -> float:
        return 1e-8 + self.allowance * self.grid.h**2 * scale

    def with_grid(self, grid: GridSpec, initial=None, **changes) -> "FlowScenario":
        """Same experiment on another grid; ``initial`` re-sampled by callable if given."""
        init = self.meta.get("initial_fn")
        values = initial if initial is not None else (init(grid.coords) if init else None)
        if values is None:
            raise GeometryError("scenario has no initial-datum generator to re-sample")
        kw = dict(
            grid=grid, metric=self.metric, potential=self.potential, K=self.K, t_grid=self.t_grid,
            initial=values, m=self.m, allowance=self.allowance, name=self.name,
            dt_max=self.dt_max, meta=dict(self.meta),
        )
        kw.update(changes)
        return FlowScenario(**kw)

    def replace(self, **changes) -> "FlowScenario":
        kw = dict(
            grid=self.grid, metric=self.metric, potential=self.potential, K=self.K,
            t_grid=self.t_grid, initial=self.initial, m=self.m, allowance=self.allowance,
            name=self.name, dt_max=self.dt_max, meta=dict(self.meta),
        )
        kw.update(changes)
        return FlowScenario(**kw)


# --------------------------------------------------------------------------
# operations


def metric_at(metric: MetricFamily, grid: GridSpec, t: float) -> np.ndarray:
    """Per-node metric multiplier ``lam`` with ``g = lam * delta``."""
    lam = metric.multiplier(t, grid.coords)
    if not np.all(lam > 0):
        raise DegenerateMetricError("metric multiplier must be positive")
    return np.broadcast_to(lam, grid.shape).copy()


def measure_weights(grid: GridSpec, metric: MetricFamily, potential: PotentialFamily, t: float) -> WeightedMeasure:
    X = grid.coords
    log_w = -potential.phi(t, X) + 0.5 * grid.dim * metric.log_multiplier(t, X)
    if metric.variant == "isotropic-scaling":
        metric._scale(t)
    w = np.exp(np.broadcast_to(log_w, grid.shape)) * grid.cell_volume
    return WeightedMeasure(w)


def _conformal_exponent(metric: MetricFamily, t: float):
    return lambda X: 0.5 * metric.log_multiplier(t, X)


def ricci_tensor(metric: MetricFamily, grid: GridSpec, t: float) -> SymTensorField:
    """Ricci tensor: zero for the flat variants, ``-(Delta_0 a) delta`` for ``g = e^{2a} delta``."""
    if metric.variant in ("static-euclidean", "isotropic-scaling"):
        if metric.variant == "isotropic-scaling":
            metric._scale(t)
        return SymTensorField.isotropic(grid.dim, np.zeros(grid.shape))
    if metric.variant == "conformal-2d":
        _, _, hess = analytic_derivatives(_conformal_exponent(metric, t), grid)
        lap = hess[(0, 0)] + hess[(1, 1)]
        return SymTensorField.isotropic(2, -lap)
    raise NotImplementedError(metric.variant)


def covariant_hessian(grad_u, hess_u: dict, grad_a, dim: int) -> SymTensorField:
    """Levi-Civita Hessian for ``g = e^{2a} delta`` from chart derivatives.

    ``Gamma^k_ij = delta_ik a_j + delta_jk a_i - delta_ij a_k``; pass
    ``grad_a=None`` for a flat (constant multiplier) metric.
    """
    parts = {k: v for k, v in hess_u.items()}
    if grad_a is not None:
        dot = sum(grad_a[k] * grad_u[k] for k in range(dim))
        for i in range(dim):
            for j in range(i, dim):
                corr = grad_u[i] * grad_a[j] + grad_u[j] * grad_a[i]
                if i == j:
                    corr = corr - dot
                parts[(i, j)] = parts[(i, j)] - corr
    shape = np.shape(grad_u[0])
    return SymTensorField.from_dict(dim, parts, shape)


def potential_hessian(scenario: FlowScenario, t: float):
    """``(grad phi, covariant Hessian of phi)`` at time ``t``."""
    grid, metric = scenario.grid, scenario.metric
    _, grad, hess = analytic_derivatives(scenario.potential.at(t), grid)
    grad_a = None
    if metric.variant == "conformal-2d":
        _, grad_a, _ = analytic_derivatives(_conformal_exponent(metric, t), grid)
    return grad, covariant_hessian(grad, hess, grad_a, grid.dim)


def _check_dimension(scenario: FlowScenario, m: float) -> None:
    n = scenario.grid.dim
    if math.isinf(m):
        if m < 0:
            raise DimensionError("m must be in [n, inf]")
        return
    if m < n:
        raise DimensionError(f"m = {m} < n = {n}")
    if m == n:
        grad, hess = potential_hessian(scenario, scenario.t_grid[0])
        flat = max(float(np.max(np.abs(g))) for g in grad)
        if not scenario.potential.constant or flat > 1e-12:
            raise ConventionError("m = n is reserved for constant potentials (L = Laplacian)")


def bakry_emery_ricci(scenario: FlowScenario, t: float, m: float = M_INFINITY) -> SymTensorField:
    """``Ric + Hess(phi) - dphi (x) dphi / (m - n)``; the last term is dropped for ``m = inf``."""
    _check_dimension(scenario, m)
    n = scenario.grid.dim
    ric = ricci_tensor(scenario.metric, scenario.grid, t)
    grad, hess = potential_hessian(scenario, t)
    out = ric + hess
    if not math.isinf(m) and m > n:
        parts = {(i, j): grad[i] * grad[j] / (m - n) for i in range(n) for j in range(i, n)}
        out = out - SymTensorField.from_dict(n, parts, scenario.grid.shape)
    return out


def super_tensor(scenario: FlowScenario, t: float, m: float = M_INFINITY, K: float | None = None) -> SymTensorField:
    """``1/2 dg/dt + Ric_{m,n}(L) - K g`` in chart components."""
    K = scenario.K if K is None else K
    grid, metric = scenario.grid, scenario.metric
    lam = metric_at(metric, grid, t)
    dlog = np.broadcast_to(metric.dlog_multiplier_dt(t, grid.coords), grid.shape)
    iso = SymTensorField.isotropic(grid.dim, lam * (0.5 * dlog - K))
    return iso + bakry_emery_ricci(scenario, t, m)


def super_flow_residual(scenario: FlowScenario, t: float, m: float = M_INFINITY, K: float | None = None) -> np.ndarray:
    """Smallest eigenvalue (relative to ``g``) of the super-flow tensor at each node."""
    lam = metric_at(scenario.metric, scenario.grid, t)
    return super_tensor(scenario, t, m, K).min_eigenvalue(lam)


def compatibility_residual(scenario: FlowScenario, t: float) -> float:
    """``max |d phi/dt - 1/2 Tr_g dg/dt|`` over the nodes."""
    X = scenario.grid.coords
    half_trace = 0.5 * scenario.grid.dim * scenario.metric.dlog_multiplier_dt(t, X)
    diff = np.broadcast_to(scenario.potential.dphi_dt(t, X) - half_trace, scenario.grid.shape)
    return float(np.max(np.abs(diff)))
