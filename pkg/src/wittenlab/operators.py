"""Discrete Witten Laplacian, heat propagation and Bochner machinery.

The operator is assembled in divergence form,

    (L u)_i = 1/(rho_i h^2) * sum_{edges e = (i, j)} w_e (u_j - u_i),

with node density ``rho = e^{-phi} lam^{n/2}`` and edge weights
``w = e^{-phi} lam^{(n-2)/2}`` evaluated at edge midpoints.  This makes the
operator symmetric in the ``rho h^n`` inner product and gives the discrete
integration-by-parts identity exactly.  Box walls carry no edges (zero flux).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _backend
from .geometry import (
    FlowScenario,
    GridSpec,
    MetricFamily,
    SymTensorField,
    WeightedMeasure,
    analytic_derivatives,
    bakry_emery_ricci,
    covariant_hessian,
    metric_at,
)

__all__ = [
    "PositivityError",
    "WittenOperator",
    "HeatPropagator",
    "assemble_witten",
    "evolve",
    "field_derivatives",
    "gradient_sq",
    "grad_dot",
    "hessian",
    "gamma2",
    "gamma2_direct",
    "bochner_residual",
]


class PositivityError(RuntimeError):
    """Propagation produced non-positive values even after implicit sub-steps."""


# --------------------------------------------------------------------------
# stencils on sampled fields (spatial axes are the trailing ones)


def _d1(u, axis, h, periodic):
    if periodic:
        return (np.roll(u, -1, axis) - np.roll(u, 1, axis)) / (2 * h)
    return np.gradient(u, h, axis=axis, edge_order=2)


def _d2(u, axis, h, periodic):
    if periodic:
        return (np.roll(u, -1, axis) - 2 * u + np.roll(u, 1, axis)) / (h * h)
    u = np.moveaxis(u, axis, -1)
    out = np.empty_like(u)
    out[..., 1:-1] = u[..., 2:] - 2 * u[..., 1:-1] + u[..., :-2]
    out[..., 0] = 2 * u[..., 0] - 5 * u[..., 1] + 4 * u[..., 2] - u[..., 3]
    out[..., -1] = 2 * u[..., -1] - 5 * u[..., -2] + 4 * u[..., -3] - u[..., -4]
    return np.moveaxis(out / (h * h), -1, axis)


def field_derivatives(u: np.ndarray, grid: GridSpec):
    """Chart gradient and Hessian of a sampled field by second-order stencils."""
    n, h, per = grid.dim, grid.h, grid.periodic
    axes = [u.ndim - n + a for a in range(n)]
    grad = [_d1(u, ax, h, per) for ax in axes]
    hess = {(i, i): _d2(u, axes[i], h, per) for i in range(n)}
    if n == 2:
        hess[(0, 1)] = _d1(grad[0], axes[1], h, per)
    return grad, hess


def _conformal_gradient(metric: MetricFamily, grid: GridSpec, t: float):
    if metric.variant != "conformal-2d":
        return None
    _, grad_a, _ = analytic_derivatives(lambda X: 0.5 * metric.log_multiplier(t, X), grid)
    return grad_a


def gradient_sq(u: np.ndarray, grid: GridSpec, metric: MetricFamily, t: float) -> np.ndarray:
    """``|grad u|_g^2`` at every node."""
    grad, _ = field_derivatives(u, grid)
    return sum(g * g for g in grad) / metric_at(metric, grid, t)


def grad_dot(u: np.ndarray, v: np.ndarray, grid: GridSpec, metric: MetricFamily, t: float) -> np.ndarray:
    gu, _ = field_derivatives(u, grid)
    gv, _ = field_derivatives(v, grid)
    return sum(a * b for a, b in zip(gu, gv)) / metric_at(metric, grid, t)


def hessian(u: np.ndarray, grid: GridSpec, metric: MetricFamily, t: float) -> SymTensorField:
    """Levi-Civita Hessian of a sampled field (single field, grid shape)."""
    grad, hess = field_derivatives(u, grid)
    return covariant_hessian(grad, hess, _conformal_gradient(metric, grid, t), grid.dim)


# --------------------------------------------------------------------------
# operator


@dataclass
class WittenOperator:
    """Discrete ``L`` at a fixed time.

    ``bands`` holds ``(lo, dg, up)`` for 1-D grids; ``matrix`` is always
    available as CSR.  ``edges`` lists ``(axis, weights)`` used by the
    Dirichlet form.
    """

    grid: GridSpec
    t: float
    measure: WeightedMeasure
    rho: np.ndarray
    edges: list
    bands: tuple | None = None
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._matrix = _build_matrix(self)
        return self._matrix

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``L u`` for a field or a stack of fields (leading batch axes)."""
        u = np.asarray(u, dtype=float)
        g = self.grid
        batch = u.shape[: u.ndim - g.dim]
        flat = u.reshape(batch + (g.size,)).reshape(-1, g.size).T
        if self.bands is not None:
            out = _backend.apply_tridiag(*self.bands, g.periodic, flat)
        else:
            out = self.matrix @ flat
        return out.T.reshape(batch + g.shape)

    def dirichlet(self, u: np.ndarray, v: np.ndarray) -> float:
        """Edge form ``sum_e w_e h^{n-2} (u_j - u_i)(v_j - v_i)`` (equals ``-<Lu, v>_mu``)."""
        g = self.grid
        total = 0.0
        for axis, w in self.edges:
            du = _edge_diff(u, axis, g.periodic)
            dv = _edge_diff(v, axis, g.periodic)
            total += float(np.sum(w * du * dv))
        return total * g.h ** (g.dim - 2)


def _edge_diff(u, axis, periodic):
    if periodic:
        return np.roll(u, -1, axis) - u
    return np.diff(u, axis=axis)


def _build_matrix(op: WittenOperator) -> sp.csr_matrix:
    g = op.grid
    idx = np.arange(g.size).reshape(g.shape)
    rows, cols, vals = [], [], []
    scale = 1.0 / (op.rho * g.h * g.h)
    for axis, w in op.edges:
        if g.periodic:
            i, j = idx, np.roll(idx, -1, axis)
        else:
            sl_lo = [slice(None)] * g.dim
            sl_hi = [slice(None)] * g.dim
            sl_lo[axis] = slice(0, -1)
            sl_hi[axis] = slice(1, None)
            i, j = idx[tuple(sl_lo)], idx[tuple(sl_hi)]
        i, j, w = i.ravel(), j.ravel(), w.ravel()
        rows += [i, j]
        cols += [j, i]
        vals += [w * scale.ravel()[i], w * scale.ravel()[j]]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(g.size, g.size)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def assemble_witten(scenario: FlowScenario, t: float) -> WittenOperator:
    """Assemble ``L_t = Delta_g - grad phi . grad`` in divergence form."""
    g, metric, pot = scenario.grid, scenario.metric, scenario.potential
    n = g.dim
    X = g.coords
    log_lam = np.broadcast_to(metric.log_multiplier(t, X), g.shape)
    if metric.variant == "isotropic-scaling":
        metric._scale(t)
    rho = np.exp(-np.broadcast_to(pot.phi(t, X), g.shape) + 0.5 * n * log_lam)
    edges = []
    for axis in range(n):
        offs = [0.0] * n
        offs[axis] = 0.5 * g.h
        M = g.shifted(offs)
        w = np.exp(-np.broadcast_to(pot.phi(t, M), g.shape) + 0.5 * (n - 2) * np.broadcast_to(metric.log_multiplier(t, M), g.shape))
        if not g.periodic:
            sl = [slice(None)] * n
            sl[axis] = slice(0, -1)
            w = w[tuple(sl)]
        edges.append((axis, np.ascontiguousarray(w)))
    measure = WeightedMeasure(rho * g.cell_volume)
    bands = None
    if n == 1:
        w = edges[0][1]
        inv = 1.0 / (rho * g.h * g.h)
        up = np.zeros(g.points)
        lo = np.zeros(g.points)
        if g.periodic:
            up[:] = w * inv
            lo[:] = np.roll(w, 1) * inv
        else:
            up[:-1] = w * inv[:-1]
            lo[1:] = w * inv[1:]
        dg = -(lo + up)
        bands = (lo, dg, up)
    return WittenOperator(g, t, measure, rho, edges, bands)


# --------------------------------------------------------------------------
# propagation


@dataclass
class HeatPropagator:
    """Crank-Nicolson propagation of ``du/dt = L_t u`` for one scenario.

    Each step uses the operator at the step midpoint.  A step that destroys
    positivity of an initially positive field is redone with
    ``fallback_substeps`` implicit Euler sub-steps.
    """

    scenario: FlowScenario
    dt_max: float | None = None
    theta: float = 0.5
    fallback_substeps: int = 8
    stats: dict = field(default_factory=lambda: {"steps": 0, "fallbacks": 0})
    _ops: dict = field(default_factory=dict, repr=False)
    _lu: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dt_max is None:
            sc = self.scenario
            self.dt_max = sc.dt_max or default_dt(sc)

    def operator(self, t: float) -> WittenOperator:
        key = None if self.scenario.static else float(t)
        op = self._ops.get(key)
        if op is None:
            op = assemble_witten(self.scenario, t)
            if len(self._ops) > 64:
                self._ops.clear()
                self._lu.clear()
            self._ops[key] = op
        return op

    def _step(self, U, t0, dt, theta):
        op = self.operator(t0 + 0.5 * dt)
        if op.bands is not None:
            return _backend.theta_step(*op.bands, True if self.scenario.grid.periodic else False, U, dt, theta)
        key = (None if self.scenario.static else float(t0 + 0.5 * dt), dt, theta)
        lu = self._lu.get(key)
        A = op.matrix
        if lu is None:
            eye = sp.identity(A.shape[0], format="csc")
            lu = splu((eye - theta * dt * A).tocsc())
            self._lu[key] = lu
        rhs = U + (1.0 - theta) * dt * (A @ U) if theta < 1 else U
        return lu.solve(np.ascontiguousarray(rhs))

    def propagate(self, U: np.ndarray, s: float, t: float) -> np.ndarray:
        """Advance a ``(size, k)`` block of fields from ``s`` to ``t``."""
        if t < s:
            raise ValueError("propagation requires s <= t")
        if t == s:
            return U.copy()
        nsteps = max(1, math.ceil((t - s) / self.dt_max - 1e-9))
        dt = (t - s) / nsteps
        positive = np.all(U > 0, axis=0)
        for k in range(nsteps):
            t0 = s + k * dt
            new = self._step(U, t0, dt, self.theta)
            self.stats["steps"] += 1
            if np.any(new[:, positive] <= 0):
                self.stats["fallbacks"] += 1
                new = U
                sub = dt / self.fallback_substeps
                for j in range(self.fallback_substeps):
                    new = self._step(new, t0 + j * sub, sub, 1.0)
                if np.any(new[:, positive] <= 0):
                    raise PositivityError(f"non-positive values after implicit sub-steps at t = {t0 + dt:g}")
            U = new
        return U


def default_dt(scenario: FlowScenario) -> float:
    spacing = float(np.min(np.diff(scenario.t_grid)))
    return min(scenario.grid.h, spacing) / 4.0


def evolve(prop: HeatPropagator, f: np.ndarray, s: float, t: float) -> np.ndarray:
    """``P_{s,t} f`` for a field or a stack of fields with leading batch axes."""
    if not 0 <= s <= t:
        raise ValueError(f"need 0 <= s <= t, got s={s}, t={t}")
    g = prop.scenario.grid
    f = np.asarray(f, dtype=float)
    batch = f.shape[: f.ndim - g.dim]
    U = f.reshape(-1, g.size).T.copy()
    out = prop.propagate(U, s, t)
    return out.T.reshape(batch + g.shape)


# --------------------------------------------------------------------------
# Bochner formula


def gamma2(u: np.ndarray, scenario: FlowScenario, t: float, op: WittenOperator | None = None) -> np.ndarray:
    """Semigroup form ``1/2 L|grad u|^2 - <grad u, grad L u>``."""
    op = op or assemble_witten(scenario, t)
    g, metric = scenario.grid, scenario.metric
    return 0.5 * op.apply(gradient_sq(u, g, metric, t)) - grad_dot(u, op.apply(u), g, metric, t)


def gamma2_direct(u: np.ndarray, scenario: FlowScenario, t: float) -> np.ndarray:
    """Direct form ``|Hess u|^2 + Ric(L)(grad u, grad u)``."""
    g, metric = scenario.grid, scenario.metric
    lam = metric_at(metric, g, t)
    grad, hess = field_derivatives(u, g)
    H = covariant_hessian(grad, hess, _conformal_gradient(metric, g, t), g.dim)
    ric_l = bakry_emery_ricci(scenario, t)
    return H.norm_sq(lam) + ric_l.contract([d / lam for d in grad])


def bochner_residual(u: np.ndarray, scenario: FlowScenario, t: float, boundary_layer: int = 3) -> float:
    """Max-norm gap between the two forms of Gamma_2.

    On a box the ``boundary_layer`` cells next to each wall are excluded: the
    zero-flux walls are not a smooth continuation of the test field.
    """
    diff = np.abs(gamma2(u, scenario, t) - gamma2_direct(u, scenario, t))
    mask = scenario.grid.interior_mask(boundary_layer)
    return float(np.max(diff[mask]))
