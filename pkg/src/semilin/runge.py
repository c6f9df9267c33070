"""Linearized solutions with prescribed point values, and Runge approximation.

Both operations realize density statements by penalized least squares over
global boundary data: a target point value is hit by a rank-one normal
equation, and a local solution on a sub-rectangle is approximated by global
solutions under a coefficient budget.  The optimizers only ever combine
fields that solve the global linearized equation, so every returned field
satisfies the equation to solver precision regardless of the optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import Field, Grid, laplacian
from .schrodinger import SchrodingerSolver, fourier_boundary_basis

POINT_VALUE_RTOL = 1e-6
MU_FACTOR = 1e-8


class PointValueError(RuntimeError):
    """Target point value unreachable within the coefficient budget."""

    def __init__(self, message: str, best_achieved: float):
        super().__init__(message)
        self.best_achieved = best_achieved


class SubdomainError(ValueError):
    """Sub-rectangle is invalid or disconnects the domain complement."""


@dataclass
class PointValueSolution:
    field: Field
    achieved: float
    boundary_norm: float
    mu_used: float


def _solution_family(q: Field, basis_size: int, solver: SchrodingerSolver | None):
    if solver is None:
        solver = SchrodingerSolver(q)
    basis = fourier_boundary_basis(q.grid, basis_size)
    return [solver.dirichlet(f) for f in basis]


def point_value_solution(
    q: Field,
    x0: tuple[int, int],
    target: float,
    basis_size: int = 32,
    mu: float | None = None,
    solver: SchrodingerSolver | None = None,
    family: list | None = None,
) -> PointValueSolution:
    """Linearized solution with prescribed value at the node x0.

    Minimizes the squared miss at x0 plus mu times the squared coefficient
    norm over the Fourier boundary family.  If the requested relative accuracy
    is not reached, mu is reduced; a genuinely unreachable target (nodal
    degeneracy of the family) raises with the best achieved value.
    """
    i, j = x0
    n = q.grid.n
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"node {x0} outside the grid")
    if family is None:
        family = _solution_family(q, basis_size, solver)
    c = np.array([v.values[i, j] for v in family])
    if mu is None:
        mu = MU_FACTOR * len(family)  # orthonormal basis: Gram trace = size
    if target == 0.0:
        return PointValueSolution(Field.zeros(q.grid), 0.0, 0.0, mu)
    cc = float(c @ c)
    mu_used = mu
    for _ in range(4):
        g = c * (target / (cc + mu_used))
        achieved = float(c @ g)
        if abs(achieved - target) <= POINT_VALUE_RTOL * abs(target):
            field = Field.zeros(q.grid)
            for gk, vk in zip(g, family):
                field = field + float(gk) * vk
            return PointValueSolution(field, achieved, float(np.linalg.norm(g)), mu_used)
        mu_used *= 1e-3
    best = float(target * cc / (cc + mu_used))
    raise PointValueError(
        f"point value {target} unreachable at node {x0}: best achieved {best:.6e} "
        "(node may be close to a nodal set of the family)",
        best_achieved=best,
    )


def _check_subrect(grid: Grid, rect: tuple[int, int, int, int]) -> None:
    i0, i1, j0, j1 = rect
    n = grid.n
    if not (0 <= i0 < i1 < n and 0 <= j0 < j1 < n):
        raise SubdomainError(f"invalid sub-rectangle {rect} on n = {n}")
    if (i0 == 0 and i1 == n - 1) or (j0 == 0 and j1 == n - 1):
        raise SubdomainError(
            f"sub-rectangle {rect} spans the domain; its complement is disconnected"
        )


@dataclass
class RungeResult:
    field: Field
    sup_error: float
    l2_error: float
    coefficient_norm: float
    budget: float


def runge_approximate(
    q: Field,
    rect: tuple[int, int, int, int],
    u_target: Field,
    budget: float,
    basis_size: int = 32,
    solver: SchrodingerSolver | None = None,
    family: list | None = None,
    mu_grid_size: int = 25,
) -> RungeResult:
    """Best global-solution approximation of a local solution on a sub-rectangle.

    Tikhonov least squares in the L2 norm over the sub-rectangle, scanned over
    a fixed regularization path; among path solutions with coefficient norm
    within the budget, the one with the smallest sup error is returned.  The
    candidate set only grows with the budget, so the reported error is
    monotone nonincreasing in it.
    """
    grid = q.grid
    _check_subrect(grid, rect)
    i0, i1, j0, j1 = rect
    # local solution check on nodes whose whole stencil lies in the rectangle
    sub = u_target.values[i0 : i1 + 1, j0 : j1 + 1]
    if i1 - i0 >= 2 and j1 - j0 >= 2:
        h2 = grid.h ** 2
        lap = (
            sub[2:, 1:-1] + sub[:-2, 1:-1] + sub[1:-1, 2:] + sub[1:-1, :-2] - 4.0 * sub[1:-1, 1:-1]
        ) / h2
        res = lap + q.values[i0 + 1 : i1, j0 + 1 : j1] * sub[1:-1, 1:-1]
        if np.max(np.abs(res)) > 1e-8 * max(1.0, float(np.max(np.abs(sub)))):
            raise SubdomainError(
                f"target has linearized residual {np.max(np.abs(res)):.3e} on the "
                "sub-rectangle interior; not a local solution"
            )
    if family is None:
        family = _solution_family(q, basis_size, solver)

    cols = np.column_stack([v.values[i0 : i1 + 1, j0 : j1 + 1].ravel() for v in family])
    t = sub.ravel()
    u_mat, sing, vt = np.linalg.svd(cols, full_matrices=False)
    ut_t = u_mat.T @ t
    smax2 = sing[0] ** 2 if sing[0] > 0 else 1.0
    mus = np.logspace(np.log10(smax2) - 14, np.log10(smax2) + 2, mu_grid_size)

    best: RungeResult | None = None
    for mu in mus:
        g = vt.T @ (sing / (sing ** 2 + mu) * ut_t)
        gn = float(np.linalg.norm(g))
        if gn > budget:
            continue
        approx = cols @ g
        sup_err = float(np.max(np.abs(approx - t)))
        if best is None or sup_err < best.sup_error:
            l2 = float(grid.h * np.sqrt(np.sum((approx - t) ** 2)))
            fld = Field.zeros(grid)
            for gk, vk in zip(g, family):
                fld = fld + float(gk) * vk
            best = RungeResult(fld, sup_err, l2, gn, budget)
    if best is None:
        # even g = 0 is feasible; report it honestly
        sup_err = float(np.max(np.abs(t)))
        l2 = float(grid.h * np.sqrt(np.sum(t ** 2)))
        best = RungeResult(Field.zeros(grid), sup_err, l2, 0.0, budget)
    return best


def local_solution(q: Field, rect: tuple[int, int, int, int], datum_fn) -> Field:
    """Discrete solution of the linearized equation on a sub-rectangle only.

    Solves the Dirichlet problem on the rectangle with boundary values
    datum_fn(x, y) sampled on the rectangle's edge nodes.  The returned global
    field is zero outside the rectangle and is a local solution in the
    discrete sense: exactly the right-hand input for runge_approximate.
    """
    grid = q.grid
    _check_subrect(grid, rect)
    i0, i1, j0, j1 = rect
    ni = i1 - i0 + 1
    nj = j1 - j0 + 1
    if ni < 3 or nj < 3:
        raise SubdomainError("sub-rectangle too small for an interior solve")
    h2 = grid.h ** 2
    x, y = grid.coords()
    vals = np.zeros((ni, nj))
    # boundary ring of the rectangle
    for ii in range(ni):
        for jj in range(nj):
            if ii in (0, ni - 1) or jj in (0, nj - 1):
                vals[ii, jj] = datum_fn(x[i0 + ii, j0 + jj], y[i0 + ii, j0 + jj])
    mi, mj = ni - 2, nj - 2
    ones_i = np.ones(mi)
    ones_j = np.ones(mj)
    d2i = sp.diags([ones_i[:-1], -2 * ones_i, ones_i[:-1]], [-1, 0, 1]) / h2
    d2j = sp.diags([ones_j[:-1], -2 * ones_j, ones_j[:-1]], [-1, 0, 1]) / h2
    lap = sp.kron(d2i, sp.identity(mj)) + sp.kron(sp.identity(mi), d2j)
    qd = sp.diags(q.values[i0 + 1 : i1, j0 + 1 : j1].ravel())
    mat = (lap + qd).tocsc()
    ring = np.zeros((ni, nj))
    ring[0, :] = vals[0, :]
    ring[-1, :] = vals[-1, :]
    ring[:, 0] = vals[:, 0]
    ring[:, -1] = vals[:, -1]
    coupling = (
        ring[2:, 1:-1] + ring[:-2, 1:-1] + ring[1:-1, 2:] + ring[1:-1, :-2]
    ) / h2
    rhs = -coupling.ravel()
    vals[1:-1, 1:-1] = splu(mat).solve(rhs).reshape(mi, mj)
    out = np.zeros((grid.n, grid.n))
    out[i0 : i1 + 1, j0 : j1 + 1] = vals
    return Field(grid, out)
