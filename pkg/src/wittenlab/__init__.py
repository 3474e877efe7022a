"""Numerical laboratory for the Witten Laplacian on weighted flat geometries.

Submodules
----------
geometry
    Grids, metric/potential families, measures and curvature tensors.
operators
    Divergence-form operator assembly, heat propagation, Bochner formula.
entropy
    Entropy functionals, their time derivatives and dissipation integrals.
inequalities
    Pointwise semigroup inequalities, Harnack bounds, interpolation checks.
oracle
    Closed-form Ornstein-Uhlenbeck and Euclidean references.
cli
    Config-driven runs, convergence studies and reports.
"""

from . import _backend

__version__ = "0.1.0"

backend = _backend.name
