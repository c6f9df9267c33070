import numpy as np
import pytest

from semilin.grid import BoundaryField, Field, Grid, trace
from semilin.nonlinearity import Nonlinearity, PowerTerm
from semilin.schrodinger import SchrodingerSolver, dirichlet_solve, fourier_boundary_basis
from semilin.solution_map import (
    ContractionError,
    DeltaExceededError,
    NotLinearizedSolutionError,
    StepUnderflowError,
    ds_derivative,
    fit_in_contraction_ball,
    fixed_point_Q,
    interior_residual,
    inverse_solution_map,
    newton_solve,
    remainder_R,
    solution_map_S,
)
from semilin.sparse_ops import discrete_laplacian_eigenvalue


def cubic_decay():
    return Nonlinearity.from_terms(PowerTerm(-1.0, 3))


def quadratic_mix():
    return Nonlinearity.from_terms(PowerTerm(1.0, 1), PowerTerm(0.3, 2))


def fourier_datum(grid, amplitude, k=1):
    s = grid.boundary_arclength()
    return BoundaryField(grid, amplitude * np.sin(np.pi * k * s / 2.0))


def harmonic_direction(grid, scale=1.0):
    # x is harmonic and stencil-exact, hence an exact linearized solution at q=0
    return Field.from_function(grid, lambda x, y: scale * x)


class TestNewtonSolve:
    def test_linear_problem_solves_in_one_iteration(self):
        g = Grid(17)
        a = Nonlinearity.from_terms(PowerTerm(-2.0, 1))
        f = BoundaryField.from_function(g, lambda x, y: np.cos(x + y))
        u, rep = newton_solve(a, f)
        assert rep.iterations <= 1
        assert interior_residual(a, u) <= 1e-10 * max(1.0, u.sup())
        assert np.array_equal(trace(u).values, f.values)

    def test_monotone_cubic_zero_data(self):
        g = Grid(17)
        u, _ = newton_solve(cubic_decay(), BoundaryField.zeros(g))
        assert u.sup() <= 1e-12

    def test_cubic_with_fourier_data_quadratic_convergence(self):
        g = Grid(33)
        u, rep = newton_solve(cubic_decay(), fourier_datum(g, 0.5))
        assert rep.residual <= 1e-10 * max(1.0, u.sup())
        hist = rep.residual_history
        # quadratic tail: the exponent of the residual roughly doubles
        doubled = any(
            1e-15 < hist[k + 1] and hist[k] < 1e-2
            and np.log(hist[k + 1]) / np.log(hist[k]) > 1.5
            for k in range(1, len(hist) - 1)
        )
        assert doubled, f"no quadratic tail in {hist}"


class TestRemainder:
    def test_linear_nonlinearity_vanishes(self):
        g = Grid(9)
        a = Nonlinearity.linear(Field.from_function(g, lambda x, y: 1 + x))
        rng = np.random.default_rng(0)
        w = Field(g, rng.standard_normal((g.n, g.n)))
        h = Field(g, rng.standard_normal((g.n, g.n)))
        assert remainder_R(a, w, h).sup() <= 1e-14

    def test_square_at_zero_base(self):
        g = Grid(9)
        a = Nonlinearity.from_terms(PowerTerm(1.0, 2))
        h = Field.from_function(g, lambda x, y: x - 2 * y)
        out = remainder_R(a, Field.zeros(g), h)
        assert np.max(np.abs(out.values - h.values ** 2)) < 1e-14

    def test_cube_at_unit_base(self):
        g = Grid(9)
        a = Nonlinearity.from_terms(PowerTerm(1.0, 3))
        h = Field.from_function(g, lambda x, y: 0.5 * x * y)
        out = remainder_R(a, Field.constant(g, 1.0), h)
        expect = 3.0 * h.values ** 2 + h.values ** 3
        assert np.max(np.abs(out.values - expect)) < 1e-14


class TestFixedPoint:
    def test_zero_direction_gives_zero(self):
        g = Grid(17)
        w, _ = newton_solve(quadratic_mix(), BoundaryField.constant(g, 0.1))
        r, rep = fixed_point_Q(quadratic_mix(), w, Field.zeros(g))
        assert r.sup() == 0.0

    def test_linear_gives_zero_for_any_direction(self):
        g = Grid(17)
        q = Field.constant(g, -1.0)
        a = Nonlinearity.linear(q)
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.5))
        v = dirichlet_solve(q, fourier_datum(g, 0.3))
        r, _ = fixed_point_Q(a, w, v)
        assert r.sup() <= 1e-12

    def test_cubic_slope_is_three(self):
        # odd nonlinearity at w = 0: remainder is cubic, log-log slope 3
        g = Grid(33)
        a = cubic_decay()
        w = Field.zeros(g)
        solver = SchrodingerSolver(a.eval(w, 1))
        v0 = harmonic_direction(g)
        ts = np.array([0.0125, 0.025, 0.05, 0.1])
        norms = []
        for t in ts:
            r, _ = fixed_point_Q(a, w, float(t) * v0, solver=solver)
            norms.append(r.sup())
        slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
        assert abs(slope - 3.0) <= 0.15

    def test_contraction_rate_below_half_for_small_direction(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        solver = SchrodingerSolver(a.eval(w, 1))
        v = dirichlet_solve(a.eval(w, 1), fourier_datum(g, 0.05))
        r, rep = fixed_point_Q(a, w, v, solver=solver)
        assert rep.contraction_rate is None or rep.contraction_rate <= 0.5

    def test_contraction_failure_for_large_direction(self):
        g = Grid(17)
        a = cubic_decay()
        w = Field.zeros(g)
        v = harmonic_direction(g, scale=40.0)
        with pytest.raises(ContractionError) as exc:
            fixed_point_Q(a, w, v)
        assert exc.value.rate >= 0.9 or np.isnan(exc.value.rate)

    def test_uniqueness_under_different_starts(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        solver = SchrodingerSolver(a.eval(w, 1))
        v = dirichlet_solve(a.eval(w, 1), fourier_datum(g, 0.05))
        r1, _ = fixed_point_Q(a, w, v, solver=solver)
        rng = np.random.default_rng(1)
        r0 = Field(g, 1e-2 * rng.standard_normal((g.n, g.n)))
        r2, _ = fixed_point_Q(a, w, v, solver=solver, r0=r0)
        assert (r1 - r2).sup() <= 1e-9

    def test_adaptive_halving_reaches_target_rate(self):
        g = Grid(17)
        a = cubic_decay()
        w = Field.zeros(g)
        v = harmonic_direction(g, scale=8.0)
        scaled, rep = fit_in_contraction_ball(a, w, v)
        assert rep.contraction_rate is None or rep.contraction_rate <= 0.5
        assert scaled.sup() < v.sup()


class TestSolutionMap:
    def test_zero_direction_returns_base(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        u, _ = solution_map_S(a, w, Field.zeros(g))
        assert (u - w).sup() == 0.0

    def test_linear_is_affine(self):
        g = Grid(17)
        q = Field.constant(g, -1.0)
        a = Nonlinearity.linear(q)
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.5))
        v = dirichlet_solve(q, fourier_datum(g, 0.3))
        u, _ = solution_map_S(a, w, v)
        assert (u - (w + v)).sup() <= 1e-12

    def test_rejects_non_linearized_direction(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        bad = Field.from_function(g, lambda x, y: x ** 3)
        with pytest.raises(NotLinearizedSolutionError):
            solution_map_S(a, w, bad)

    def test_matches_independent_newton_solve(self):
        g = Grid(33)
        a = Nonlinearity.from_terms(PowerTerm(1.0, 2))
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        q = a.eval(w, 1)
        v = dirichlet_solve(q, fourier_datum(g, 0.05))
        u, _ = solution_map_S(a, w, v)
        u_ref, _ = newton_solve(a, trace(u), u0=u)
        assert (u - u_ref).sup() <= 1e-7

    def test_quadratic_slope_for_generic_nonlinearity(self):
        g = Grid(33)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        q = a.eval(w, 1)
        solver = SchrodingerSolver(q)
        v0 = solver.dirichlet(fourier_datum(g, 1.0))
        ts = np.array([0.0125, 0.025, 0.05, 0.1])
        norms = []
        for t in ts:
            r, _ = fixed_point_Q(a, w, float(t) * v0, solver=solver)
            norms.append(r.sup())
        slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
        assert abs(slope - 2.0) <= 0.15


class TestInverse:
    def test_base_solution_maps_to_zero(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        v = inverse_solution_map(a, w, w)
        assert v.sup() <= 1e-12

    def test_linear_case_exact(self):
        g = Grid(17)
        q = Field.constant(g, -1.0)
        a = Nonlinearity.linear(q)
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.5))
        v0 = dirichlet_solve(q, fourier_datum(g, 0.2))
        v = inverse_solution_map(a, w, w + v0)
        assert (v - v0).sup() <= 1e-10

    def test_round_trip_quadratic(self):
        g = Grid(33)
        a = Nonlinearity.from_terms(PowerTerm(1.0, 2))
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        q = a.eval(w, 1)
        solver = SchrodingerSolver(q)
        v0 = solver.dirichlet(fourier_datum(g, 0.05))
        u, _ = solution_map_S(a, w, v0, solver=solver)
        v = inverse_solution_map(a, w, u, solver=solver)
        u_back, _ = solution_map_S(a, w, v, solver=solver)
        assert (u_back - u).sup() <= 1e-7

    def test_round_trip_resonant_kernel(self):
        # nonlinearity whose linearization at w = 0 is exactly resonant
        g = Grid(17)
        lam = discrete_laplacian_eigenvalue(g, 1, 1)
        a = Nonlinearity.from_terms(PowerTerm(lam, 1), PowerTerm(-1.0, 3))
        w = Field.zeros(g)
        q = a.eval(w, 1)
        solver = SchrodingerSolver(q)
        assert solver.basis.m == 1
        psi = solver.basis.psi[0]
        vg, _, _ = solver.gq(None, fourier_datum(g, 0.02))
        v0 = vg + 0.05 * psi
        u, _ = solution_map_S(a, w, v0, solver=solver)
        v = inverse_solution_map(a, w, u, solver=solver)
        u_back, _ = solution_map_S(a, w, v, solver=solver)
        assert (u_back - u).sup() <= 1e-7

    def test_delta_guard(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        far = w + Field.constant(g, 5.0)
        with pytest.raises((DeltaExceededError, Exception)):
            inverse_solution_map(a, w, far, delta=0.5)


class TestDerivative:
    def test_identity_at_zero_with_step_halving(self):
        g = Grid(33)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        q = a.eval(w, 1)
        solver = SchrodingerSolver(q)
        h = solver.dirichlet(fourier_datum(g, 0.5))
        errs = []
        for t in (0.08, 0.04):
            d = ds_derivative(a, w, Field.zeros(g), h, t, solver=solver)
            errs.append((d - h).sup())
        ratio = errs[0] / errs[1]
        assert abs(ratio - 4.0) <= 0.5

    def test_linear_case_exact_for_any_direction(self):
        g = Grid(17)
        q = Field.constant(g, -1.0)
        a = Nonlinearity.linear(q)
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.5))
        solver = SchrodingerSolver(q)
        v = solver.dirichlet(fourier_datum(g, 0.1))
        h = solver.dirichlet(fourier_datum(g, 0.3, k=2))
        d = ds_derivative(a, w, v, h, 0.05, solver=solver)
        assert (d - h).sup() <= 1e-10

    def test_output_solves_perturbed_linearized_equation(self):
        g = Grid(33)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        solver = SchrodingerSolver(a.eval(w, 1))
        v = solver.dirichlet(fourier_datum(g, 0.05))
        h = solver.dirichlet(fourier_datum(g, 0.05, k=2))
        u_v, _ = solution_map_S(a, w, v, solver=solver)
        qv = a.eval(u_v, 1)
        t = 0.02
        d = ds_derivative(a, w, v, h, t, solver=solver)
        from semilin.solution_map import linearized_residual

        res = linearized_residual(qv, d)
        assert res <= 50.0 * t ** 2 + 1e-8

    def test_step_underflow(self):
        g = Grid(17)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        with pytest.raises(StepUnderflowError):
            ds_derivative(a, w, Field.zeros(g), Field.zeros(g), 1e-9)

    def test_isomorphism_surjectivity(self):
        # a random linearized solution of the perturbed potential is hit by
        # the derivative, via the construction in the surjectivity proof
        g = Grid(33)
        a = quadratic_mix()
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        solver = SchrodingerSolver(a.eval(w, 1))
        v = solver.dirichlet(fourier_datum(g, 0.05))
        u_v, _ = solution_map_S(a, w, v, solver=solver)
        qv = a.eval(u_v, 1)
        solver_v = SchrodingerSolver(qv)
        h_tilde = solver_v.dirichlet(fourier_datum(g, 0.05, k=2))
        # recover h with DS(v) h = h_tilde by differentiating the composition
        t = 0.02
        up, _ = solution_map_S(a, u_v, float(t) * h_tilde, solver=solver_v)
        um, _ = solution_map_S(a, u_v, float(-t) * h_tilde, solver=solver_v)
        vp = inverse_solution_map(a, w, up, solver=solver)
        vm = inverse_solution_map(a, w, um, solver=solver)
        h = (1.0 / (2 * t)) * (vp - vm)
        d = ds_derivative(a, w, v, h, t, solver=solver)
        assert (d - h_tilde).sup() <= 1e-4
