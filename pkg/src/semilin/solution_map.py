"""Local solution maps: nonlinear solves, the quadratic remainder, and the
parametrization u = w + v + Q(v) of solutions near a fixed solution w by
small solutions v of the linearized equation.

Q(v) is the fixed point of a contraction built from the canonical linearized
solver; its trace lies in the span of the kernel Neumann traces, it is
orthogonal to the kernel, and it is quadratically small in v.  The converse
map recovers v from a nearby solution, and the Frechet derivative of the map
is realized by symmetric divided differences so that its defining property
stays a genuine cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    BoundaryField,
    Field,
    embed_boundary,
    laplacian,
    surrogate_norm,
    trace,
    with_boundary,
)
from .nonlinearity import Nonlinearity
from .schrodinger import SchrodingerSolver
from .sparse_ops import (
    SingularOperatorError,
    assemble_schrodinger,
    factorize,
    interior_to_field,
    solve,
)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
PICARD_TOL = 1e-12
PICARD_MAX_ITER = 200
PICARD_RATE_CAP = 0.9
LINEARIZED_RESIDUAL_TOL = 1e-9
SOLUTION_RESIDUAL_TOL = 1e-8


class NewtonConvergenceError(RuntimeError):
    pass


class SingularJacobianError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class ContractionError(RuntimeError):
    """Picard iteration diverging; the linearized direction is too large."""

    def __init__(self, message: str, rate: float):
        super().__init__(message)
        self.rate = rate


class NotLinearizedSolutionError(ValueError):
    pass


class NotSolutionError(ValueError):
    pass


class DeltaExceededError(ValueError):
    pass


class StepUnderflowError(ValueError):
    pass


@dataclass
class SolveReport:
    """Diagnostics attached to every solver output.

    The residual is recomputed from the returned field, independently of the
    iteration that produced it.  delta_used records the radius of the ball in
    which the iterates verifiably stayed.
    """

    iterations: int
    final_update_norm: float
    contraction_rate: float | None
    residual: float
    delta_used: float | None = None
    quadratic_ratio: float | None = None
    residual_history: tuple = ()

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_update_norm": self.final_update_norm,
            "contraction_rate": self.contraction_rate,
            "residual": self.residual,
            "delta_used": self.delta_used,
            "quadratic_ratio": self.quadratic_ratio,
            "residual_history": list(self.residual_history),
        }


def interior_residual(a: Nonlinearity, u: Field) -> float:
    """Sup norm of laplace(u) + a(x, u) over interior nodes."""
    res = laplacian(u).values[1:-1, 1:-1] + a.eval(u).values[1:-1, 1:-1]
    return float(np.max(np.abs(res)))


def linearized_residual(q: Field, v: Field) -> float:
    res = laplacian(v).values[1:-1, 1:-1] + q.values[1:-1, 1:-1] * v.values[1:-1, 1:-1]
    return float(np.max(np.abs(res)))


def newton_solve(
    a: Nonlinearity,
    f: BoundaryField,
    u0: Field | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> tuple[Field, SolveReport]:
    """Damped Newton solve of laplace(u) + a(x, u) = 0 with Dirichlet data f.

    The boundary values are imposed exactly; the initial guess defaults to the
    harmonic lift of f.  Raises on non-convergence or a resonant Jacobian.
    """
    grid = f.grid
    if u0 is None:
        zero_q = Field.zeros(grid)
        lift = solve(assemble_schrodinger(zero_q), -laplacian(embed_boundary(f)).interior())
        u = interior_to_field(grid, lift, boundary_values=f.values)
    else:
        u = with_boundary(u0, f)

    history = []
    update_norm = 0.0
    for it in range(max_iter + 1):
        res = laplacian(u).values[1:-1, 1:-1] + a.eval(u).values[1:-1, 1:-1]
        rn = float(np.max(np.abs(res)))
        history.append(rn)
        if rn <= tol * max(1.0, u.sup()):
            return u, SolveReport(
                iterations=it,
                final_update_norm=update_norm,
                contraction_rate=None,
                residual=rn,
                residual_history=tuple(history),
            )
        if it == max_iter:
            break
        jac = assemble_schrodinger(a.eval(u, 1))
        try:
            d = solve(jac, -res.ravel())
        except SingularOperatorError as exc:
            raise SingularJacobianError(
                f"resonant linearization at Newton iterate {it}: {exc}", iteration=it
            ) from exc
        step = interior_to_field(grid, d)
        t = 1.0
        while t >= 2.0 ** -12:
            cand = u + t * step
            new_rn = interior_residual(a, cand)
            if new_rn <= (1.0 - 1e-4 * t) * rn:
                u = cand
                update_norm = t * step.sup()
                break
            t *= 0.5
        else:
            raise NewtonConvergenceError(
                f"line search failed at iterate {it} with residual {rn:.3e}"
            )
    raise NewtonConvergenceError(
        f"no convergence in {max_iter} iterations; last residual {history[-1]:.3e}"
    )


def remainder_R(a: Nonlinearity, w: Field, h: Field) -> Field:
    """Quadratic remainder of the linearization of a at w, evaluated on h.

    The parameter integral of [d_u a(x, w + t h) - d_u a(x, w)] h collapses in
    closed form to a(x, w + h) - a(x, w) - d_u a(x, w) h, which is exact for
    every term kind in the closed-form representation.
    """
    return a.eval(w + h) - a.eval(w) - a.eval(w, 1) * h


def _fit_rate(updates: list[float]) -> float | None:
    vals = [u for u in updates if u > 0.0]
    if len(vals) < 2:
        return None
    logs = np.log(vals)
    k = np.arange(len(logs))
    slope = np.polyfit(k, logs, 1)[0]
    return float(np.exp(slope))


def fixed_point_Q(
    a: Nonlinearity,
    w: Field,
    v: Field,
    solver: SchrodingerSolver | None = None,
    tol: float = PICARD_TOL,
    max_iter: int = PICARD_MAX_ITER,
    r0: Field | None = None,
) -> tuple[Field, SolveReport]:
    """Picard iteration for the quadratically small correction r = Q(v).

    At the fixed point r solves laplace(r) + q r = -R(v + r) with trace in the
    span of the kernel Neumann traces and r orthogonal to the kernel.  Raises
    ContractionError with the measured rate when the first iterations expand.
    The starting guess r0 only affects the transient; the fixed point in the
    contraction ball is unique.
    """
    q = a.eval(w, 1)
    if solver is None:
        solver = SchrodingerSolver(q)
    grid = w.grid
    r = Field.zeros(grid) if r0 is None else r0
    updates: list[float] = []
    iterations = 0
    for k in range(max_iter):
        rhs = remainder_R(a, w, v + r)
        r_new, _, _ = solver.gq(rhs, None)
        r_new = -1.0 * r_new
        upd = (r_new - r).sup()
        updates.append(upd)
        iterations = k + 1
        if len(updates) == 5:
            early = _fit_rate(updates)
            if early is not None and early >= PICARD_RATE_CAP:
                raise ContractionError(
                    f"Picard iteration expanding with measured rate {early:.3f}; "
                    "the direction exceeds the contraction ball",
                    rate=early,
                )
        r = r_new
        if upd <= tol * max(1.0, r.sup()):
            break
    else:
        rate = _fit_rate(updates)
        raise ContractionError(
            f"no Picard convergence in {max_iter} iterations "
            f"(rate estimate {rate if rate is not None else float('nan'):.3f})",
            rate=rate if rate is not None else float("nan"),
        )

    resid = float(
        np.max(
            np.abs(
                laplacian(r).values[1:-1, 1:-1]
                + q.values[1:-1, 1:-1] * r.values[1:-1, 1:-1]
                + remainder_R(a, w, v + r).values[1:-1, 1:-1]
            )
        )
    )
    sn_v = surrogate_norm(v)
    sn_r = surrogate_norm(r)
    report = SolveReport(
        iterations=iterations,
        final_update_norm=updates[-1],
        contraction_rate=_fit_rate(updates),
        residual=resid,
        delta_used=max(sn_v, sn_r),
        quadratic_ratio=(sn_r / sn_v ** 2) if sn_v > 0 else None,
    )
    return r, report


def solution_map_S(
    a: Nonlinearity,
    w: Field,
    v: Field,
    solver: SchrodingerSolver | None = None,
) -> tuple[Field, SolveReport]:
    """u = w + v + Q(v); maps linearized solutions to nonlinear solutions."""
    q = a.eval(w, 1)
    vres = linearized_residual(q, v)
    if vres > LINEARIZED_RESIDUAL_TOL * max(1.0, v.sup()):
        raise NotLinearizedSolutionError(
            f"direction has linearized residual {vres:.3e}; not a solution of the "
            "linearized equation"
        )
    r, report = fixed_point_Q(a, w, v, solver=solver)
    u = w + v + r
    resid = interior_residual(a, u)
    if resid > SOLUTION_RESIDUAL_TOL * max(1.0, u.sup()):
        raise NotSolutionError(
            f"solution-map output has residual {resid:.3e}; check that w solves "
            "the nonlinear equation to solver precision"
        )
    report.residual = resid
    return u, report


def inverse_solution_map(
    a: Nonlinearity,
    w: Field,
    u: Field,
    solver: SchrodingerSolver | None = None,
    delta: float = 0.5,
) -> Field:
    """Recover the linearized parameter v with u = S(v).

    v is the kernel projection of u - w plus the canonical solution with the
    boundary values of u - w.
    """
    ures = interior_residual(a, u)
    if ures > SOLUTION_RESIDUAL_TOL * max(1.0, u.sup()):
        raise NotSolutionError(f"input has nonlinear residual {ures:.3e}")
    diff = u - w
    if surrogate_norm(diff) > delta:
        raise DeltaExceededError(
            f"distance {surrogate_norm(diff):.3e} from the base solution exceeds "
            f"delta = {delta}"
        )
    q = a.eval(w, 1)
    if solver is None:
        solver = SchrodingerSolver(q)
    v, _, _ = solver.gq(None, trace(diff))
    if solver.basis.m > 0:
        v = v + solver.basis.project_domain(diff)
    return v


def ds_derivative(
    a: Nonlinearity,
    w: Field,
    v: Field,
    h: Field,
    t: float,
    solver: SchrodingerSolver | None = None,
) -> Field:
    """Frechet derivative of the solution map by symmetric divided differences.

    Output solves the equation linearized at S(v) up to O(t^2) plus solver
    tolerance, which tests the derivative property rather than building it in.
    """
    if t < 1e-8:
        raise StepUnderflowError(f"step {t} below 1e-8; differences would be noise")
    if solver is None:
        solver = SchrodingerSolver(a.eval(w, 1))
    up, _ = solution_map_S(a, w, v + t * h, solver=solver)
    um, _ = solution_map_S(a, w, v + (-t) * h, solver=solver)
    return (1.0 / (2.0 * t)) * (up - um)


def fit_in_contraction_ball(
    a: Nonlinearity,
    w: Field,
    v: Field,
    solver: SchrodingerSolver | None = None,
    rate_target: float = 0.5,
    max_halvings: int = 12,
) -> tuple[Field, SolveReport]:
    """Halve the direction until the Picard iteration certifies the target rate.

    Realizes the adaptive choice of the contraction ball: starting from the
    given direction, the scale is halved until the measured rate is at most
    rate_target.
    """
    if solver is None:
        solver = SchrodingerSolver(a.eval(w, 1))
    scale = 1.0
    last_exc: Exception | None = None
    for _ in range(max_halvings):
        try:
            r, report = fixed_point_Q(a, w, scale * v, solver=solver)
            rate = report.contraction_rate
            if rate is None or rate <= rate_target:
                return scale * v, report
        except ContractionError as exc:
            last_exc = exc
        scale *= 0.5
    raise ContractionError(
        f"could not certify rate <= {rate_target} after {max_halvings} halvings "
        f"({last_exc})",
        rate=float("nan"),
    )
