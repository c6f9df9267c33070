"""Solution maps and boundary-data reconstruction for semilinear elliptic PDE.

Desk-scale numerical machinery for equations of the form
``laplace(u) + a(x, u) = 0`` on the unit square: linearized solvers with
Fredholm kernel corrections, local solution maps parametrized by linearized
solutions, Cauchy-data experiments, and least-squares recovery of the
nonlinearity from simulated boundary measurements.
"""

__version__ = "0.1.0"

from .grid import BoundaryField, Field, Grid

__all__ = ["Grid", "Field", "BoundaryField", "__version__"]
