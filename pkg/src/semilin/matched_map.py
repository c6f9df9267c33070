"""Second solution map: solutions of a second nonlinearity matched in Cauchy data.

The construction needs two linear tools for a potential q: a projection P
onto the range of laplace + q over fields with zero Cauchy data, and the
inverse G of laplace + q on that range.  Both come from one clamped
fourth-order solve.  The matched map itself runs a Picard iteration on the
correction r with u2 = u1 - r, so that u2 solves the second equation while
keeping the Cauchy data of u1 exactly (the corrections produced by G have
zero trace and mirror-sense zero normal derivative by construction).
"""

from __future__ import annotations

import numpy as np

from .cauchy import cauchy_pair
from .grid import Field, laplacian
from .nonlinearity import Nonlinearity
from .schrodinger import SchrodingerSolver
from .solution_map import (
    ContractionError,
    NotSolutionError,
    SolveReport,
    _fit_rate,
    interior_residual,
    solution_map_S,
)
from .sparse_ops import assemble_bilaplacian_clamped, factorize

P_IDEMPOTENCE_TOL = 1e-8
G_RANGE_TOL = 1e-6
MATCH_CAUCHY_TOL = 1e-10
MATCHED_RESIDUAL_TOL = 1e-7
MATCHED_RATE_CAP = 0.9


class NotInRangeError(ValueError):
    """Input field is not in the zero-Cauchy-data range of laplace + q."""


class ClampedSolver:
    """Shared factorization of the clamped square of laplace + q."""

    def __init__(self, q: Field):
        self.q = q
        self.grid = q.grid
        self._fourth = factorize(assemble_bilaplacian_clamped(q))

    def _apply_schrodinger_full(self, u: Field) -> np.ndarray:
        """(laplace + q) u on interior nodes, using the boundary ring of u."""
        return (
            laplacian(u).values[1:-1, 1:-1]
            + self.q.values[1:-1, 1:-1] * u.values[1:-1, 1:-1]
        ).ravel()

    def _clamped_y(self, u: Field) -> np.ndarray:
        """Interior values of the clamped solution of (laplace+q)^2 y = (laplace+q) u."""
        return self._fourth.solve(self._apply_schrodinger_full(u))

    def _schrodinger_of_clamped(self, y_int: np.ndarray) -> Field:
        """(laplace + q) y as a full field, for clamped y given by interior values.

        Boundary values follow the mirror-ghost convention: at an edge node the
        value is twice the adjacent interior value over h^2, zero at corners.
        """
        grid = self.grid
        n = grid.n
        h2 = grid.h ** 2
        y = np.zeros((n, n))
        y[1:-1, 1:-1] = y_int.reshape(n - 2, n - 2)
        out = np.zeros((n, n))
        lap = (
            y[2:, 1:-1] + y[:-2, 1:-1] + y[1:-1, 2:] + y[1:-1, :-2] - 4.0 * y[1:-1, 1:-1]
        ) / h2
        out[1:-1, 1:-1] = lap + self.q.values[1:-1, 1:-1] * y[1:-1, 1:-1]
        out[0, 1:-1] = 2.0 * y[1, 1:-1] / h2
        out[n - 1, 1:-1] = 2.0 * y[n - 2, 1:-1] / h2
        out[1:-1, 0] = 2.0 * y[1:-1, 1] / h2
        out[1:-1, n - 1] = 2.0 * y[1:-1, n - 2] / h2
        return Field(grid, out)

    def project(self, u: Field) -> Field:
        """P(u): the zero-Cauchy-range component of u."""
        return self._schrodinger_of_clamped(self._clamped_y(u))

    def inverse_on_range(self, z: Field) -> Field:
        """G(z): the clamped y with (laplace + q) y = z, for z in the range."""
        pz = self.project(z)
        defect = (pz - z).sup()
        if defect > G_RANGE_TOL * max(z.sup(), 1e-30):
            raise NotInRangeError(
                f"projection defect {defect:.3e} exceeds {G_RANGE_TOL:.0e} * |z|; "
                "input is not in the zero-Cauchy-data range"
            )
        y = np.zeros((self.grid.n, self.grid.n))
        y[1:-1, 1:-1] = self._clamped_y(z).reshape(self.grid.n - 2, self.grid.n - 2)
        return Field(self.grid, y)

    def project_and_invert(self, u: Field) -> Field:
        """G(P(u)) in one fourth-order solve."""
        y = np.zeros((self.grid.n, self.grid.n))
        y[1:-1, 1:-1] = self._clamped_y(u).reshape(self.grid.n - 2, self.grid.n - 2)
        return Field(self.grid, y)


def clamped_projection_P(q: Field, u: Field, solver: ClampedSolver | None = None) -> Field:
    """Projection onto the range of laplace + q over zero-Cauchy-data fields."""
    if solver is None:
        solver = ClampedSolver(q)
    return solver.project(u)


def zero_cauchy_inverse_G(q: Field, z: Field, solver: ClampedSolver | None = None) -> Field:
    """Inverse of laplace + q on its zero-Cauchy-data range.

    The returned field has exactly zero trace; its normal derivative vanishes
    in the mirror-ghost sense of the clamped discretization, and the one-sided
    boundary stencil of it decays at second order in h.
    """
    if solver is None:
        solver = ClampedSolver(q)
    return solver.inverse_on_range(z)


def matched_solution_T(
    a1: Nonlinearity,
    a2: Nonlinearity,
    w1: Field,
    w2: Field,
    v: Field,
    solver1: SchrodingerSolver | None = None,
    clamped: ClampedSolver | None = None,
    tol: float = 1e-12,
    max_iter: int = 200,
    residual_tol: float = MATCHED_RESIDUAL_TOL,
    cauchy_tol: float = 1e-8,
) -> tuple[Field, SolveReport]:
    """Solution of the second equation with the Cauchy data of S_{a1,w1}(v).

    Picard iteration on r = G P(q2 r + a2(x, u1 - r) - a1(x, u1)) starting at
    w1 - w2; returns u2 = u1 - r.  Both the residual for a2 and the
    Cauchy-data match against u1 are asserted on the output.  The default
    residual tolerance is attainable when the sides agree up to gauge; for
    genuinely different nonlinearities the discrete range projection leaves
    an O(h^2) defect and callers must widen residual_tol accordingly.
    """
    for name, (a, w) in {"w1": (a1, w1), "w2": (a2, w2)}.items():
        res = interior_residual(a, w)
        if res > 1e-8 * max(1.0, w.sup()):
            raise NotSolutionError(f"{name} has residual {res:.3e}; not a base solution")
    base_mismatch = cauchy_pair(w1).sup_diff(cauchy_pair(w2))
    if base_mismatch > MATCH_CAUCHY_TOL:
        raise NotSolutionError(
            f"base solutions differ in Cauchy data by {base_mismatch:.3e} "
            f"(need <= {MATCH_CAUCHY_TOL:.0e})"
        )

    q2 = a2.eval(w2, 1)
    if clamped is None:
        clamped = ClampedSolver(q2)
    u1, s_report = solution_map_S(a1, w1, v, solver=solver1)

    r = w1 - w2
    updates: list[float] = []
    iterations = 0
    for k in range(max_iter):
        expr = q2 * r + a2.eval(u1 - r) - a1.eval(u1)
        r_new = clamped.project_and_invert(expr)
        upd = (r_new - r).sup()
        updates.append(upd)
        iterations = k + 1
        if len(updates) == 5:
            early = _fit_rate(updates)
            if early is not None and early >= MATCHED_RATE_CAP:
                raise ContractionError(
                    f"matched-map Picard iteration expanding with rate {early:.3f}; "
                    "the direction v is too large",
                    rate=early,
                )
        r = r_new
        if upd <= tol * max(1.0, r.sup()):
            break
    else:
        rate = _fit_rate(updates)
        raise ContractionError(
            f"matched-map iteration did not converge in {max_iter} steps",
            rate=rate if rate is not None else float("nan"),
        )

    u2 = u1 - r
    resid = interior_residual(a2, u2)
    if resid > MATCHED_RESIDUAL_TOL * max(1.0, u2.sup()):
        raise NotSolutionError(
            f"matched solution has residual {resid:.3e} for the second nonlinearity"
        )
    mismatch = cauchy_pair(u2).sup_diff(cauchy_pair(u1))
    if mismatch > 1e-8:
        raise NotSolutionError(
            f"matched solution drifts from the Cauchy data of u1 by {mismatch:.3e}"
        )
    report = SolveReport(
        iterations=iterations,
        final_update_norm=updates[-1] if updates else 0.0,
        contraction_rate=_fit_rate(updates),
        residual=resid,
        delta_used=s_report.delta_used,
    )
    return u2, report
