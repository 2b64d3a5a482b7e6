"""Finite-difference laboratory for ``det D^2u = 1``, ``u = 0`` on the boundary of a convex domain.

Modules
-------
geometry   convex domains, boundary curvatures, sublevel regions
field      grids, Shortley-Weller stencils, finite-difference jets
symfunc    elementary symmetric functions and their derivative matrices
solver     closed-form quadratic solutions and a damped Newton solver
curvature  level-set curvatures, the P-functions phi and psi, rigidity residual
verify     maximum-principle, curvature-bound and rigidity checks
cli        command-line driver
"""
from . import curvature, field, geometry, solver, symfunc, verify
from .errors import MalabError

__version__ = "0.1.0"

__all__ = ["curvature", "field", "geometry", "solver", "symfunc", "verify", "MalabError"]
