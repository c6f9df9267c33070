import numpy as np
import pytest

from semilin.cauchy import cauchy_pair
from semilin.grid import BoundaryField, Field, Grid, bump_field, normal_derivative, trace
from semilin.matched_map import (
    ClampedSolver,
    NotInRangeError,
    clamped_projection_P,
    matched_solution_T,
    zero_cauchy_inverse_G,
)
from semilin.nonlinearity import Nonlinearity, PowerTerm
from semilin.schrodinger import SchrodingerSolver, dirichlet_solve, fourier_boundary_basis
from semilin.solution_map import interior_residual, newton_solve, solution_map_S


def fourier_datum(grid, amplitude, k=1):
    s = grid.boundary_arclength()
    return BoundaryField(grid, amplitude * np.sin(np.pi * k * s / 2.0))


def sample_potential(grid):
    return Field.from_function(grid, lambda x, y: -1.0 + 0.4 * np.sin(2 * x + y))


class TestClampedProjection:
    def test_fixes_its_range(self):
        g = Grid(17)
        q = sample_potential(g)
        solver = ClampedSolver(q)
        rng = np.random.default_rng(0)
        u = Field(g, rng.standard_normal((g.n, g.n)))
        z = solver.project(u)
        assert (solver.project(z) - z).sup() <= 1e-8 * max(1.0, u.sup())

    def test_kills_linearized_solutions(self):
        g = Grid(17)
        q = sample_potential(g)
        v = dirichlet_solve(q, fourier_datum(g, 1.0))
        p = clamped_projection_P(q, v)
        assert p.sup() <= 1e-8 * max(1.0, v.sup())

    def test_idempotence_on_random_fields(self):
        g = Grid(17)
        q = sample_potential(g)
        solver = ClampedSolver(q)
        rng = np.random.default_rng(1)
        for _ in range(3):
            u = Field(g, rng.standard_normal((g.n, g.n)))
            p1 = solver.project(u)
            p2 = solver.project(p1)
            assert (p2 - p1).sup() <= 1e-8 * max(1.0, u.sup())

    def test_linearity(self):
        g = Grid(17)
        q = sample_potential(g)
        solver = ClampedSolver(q)
        rng = np.random.default_rng(2)
        u = Field(g, rng.standard_normal((g.n, g.n)))
        v = Field(g, rng.standard_normal((g.n, g.n)))
        lhs = solver.project(2.0 * u + (-0.5) * v)
        rhs = 2.0 * solver.project(u) + (-0.5) * solver.project(v)
        assert (lhs - rhs).sup() <= 1e-9 * max(1.0, lhs.sup())


class TestZeroCauchyInverse:
    def test_zero_maps_to_zero(self):
        g = Grid(17)
        q = sample_potential(g)
        y = zero_cauchy_inverse_G(q, Field.zeros(g))
        assert y.sup() == 0.0

    def test_inverse_satisfies_equation_and_boundary(self):
        g = Grid(17)
        q = sample_potential(g)
        solver = ClampedSolver(q)
        rng = np.random.default_rng(3)
        u = Field(g, rng.standard_normal((g.n, g.n)))
        z = solver.project(u)
        y = solver.inverse_on_range(z)
        assert np.max(np.abs(trace(y).values)) == 0.0
        # equation holds on interior nodes
        resid = solver._schrodinger_of_clamped(y.interior()) - z
        assert resid.sup() <= 1e-7 * max(1.0, z.sup())

    def test_one_sided_normal_derivative_second_order(self):
        # z is built from the same smooth clamped profile on every grid
        norms = []
        for n in (17, 33, 65):
            g = Grid(n)
            q = Field.zeros(g)
            solver = ClampedSolver(q)
            y0 = Field.from_function(
                g, lambda x, y: (x * (1 - x)) ** 2 * (y * (1 - y)) ** 2 * 100.0
            )
            z = solver.project(y0)
            y = solver.inverse_on_range(z)
            norms.append(normal_derivative(y).sup() / max(y.sup(), 1e-30))
        assert norms[0] / norms[2] > 6.0  # at least first order over two halvings
        assert norms[2] < 1e-2

    def test_round_trip_on_clamped_fields(self):
        g = Grid(17)
        q = sample_potential(g)
        solver = ClampedSolver(q)
        # a clamped field: compact support keeps the discrete Cauchy data zero
        y0 = bump_field(g, amplitude=1.0, radius=0.3)
        z = solver._schrodinger_of_clamped(y0.interior())
        y = solver.inverse_on_range(z)
        assert (y - y0).sup() <= 1e-7 * max(1.0, y0.sup())

    def test_rejects_fields_off_the_range(self):
        g = Grid(17)
        q = sample_potential(g)
        v = dirichlet_solve(q, fourier_datum(g, 1.0))  # in the kernel of P
        with pytest.raises(NotInRangeError):
            zero_cauchy_inverse_G(q, v)


class TestMatchedSolutionMap:
    def quadratic(self):
        return Nonlinearity.from_terms(PowerTerm(1.0, 2))

    def test_identical_nonlinearities_reduce_to_S(self):
        g = Grid(17)
        a = Nonlinearity.from_terms(PowerTerm(1.0, 1), PowerTerm(0.3, 2))
        w, _ = newton_solve(a, BoundaryField.constant(g, 0.1))
        solver = SchrodingerSolver(a.eval(w, 1))
        v = solver.dirichlet(fourier_datum(g, 0.05))
        u1, _ = solution_map_S(a, w, v, solver=solver)
        u2, rep = matched_solution_T(a, a, w, w, v, solver1=solver)
        assert (u2 - u1).sup() <= 1e-10
        assert rep.iterations <= 3

    def test_gauge_pair_recovers_shifted_solution(self):
        g = Grid(33)
        a1 = self.quadratic()
        phi = bump_field(g, amplitude=0.2, radius=0.28)
        a2 = a1.gauge_transform(phi)
        w1, _ = newton_solve(a1, BoundaryField.constant(g, 0.1))
        w2, _ = newton_solve(a2, trace(w1), u0=w1 - phi)
        solver = SchrodingerSolver(a1.eval(w1, 1))
        v = solver.dirichlet(fourier_datum(g, 0.04))
        u1, _ = solution_map_S(a1, w1, v, solver=solver)
        u2, rep = matched_solution_T(a1, a2, w1, w2, v, solver1=solver)
        assert (u2 - (u1 - phi)).sup() <= 1e-7
        assert cauchy_pair(u2).sup_diff(cauchy_pair(u1)) <= 1e-8
        assert interior_residual(a2, u2) <= 1e-7 * max(1.0, u2.sup())

    def test_derivative_at_zero_is_identity(self):
        # same first linearization: q2 = q1, so T'(0) v = v within O(t^2)
        g = Grid(33)
        a1 = self.quadratic()
        phi = bump_field(g, amplitude=0.2, radius=0.28)
        a2 = a1.gauge_transform(phi)
        w1, _ = newton_solve(a1, BoundaryField.constant(g, 0.1))
        w2, _ = newton_solve(a2, trace(w1), u0=w1 - phi)
        q1 = a1.eval(w1, 1)
        q2 = a2.eval(w2, 1)
        assert (q1 - q2).sup() <= 1e-9
        solver = SchrodingerSolver(q1)
        from semilin.matched_map import ClampedSolver as CS

        clamped = CS(q2)
        h = solver.dirichlet(fourier_datum(g, 1.0))
        errs = []
        for t in (0.08, 0.04):
            up, _ = matched_solution_T(a1, a2, w1, w2, float(t) * h, solver1=solver, clamped=clamped)
            um, _ = matched_solution_T(a1, a2, w1, w2, float(-t) * h, solver1=solver, clamped=clamped)
            d = (1.0 / (2 * t)) * (up - um)
            errs.append((d - h).sup())
        assert errs[0] / errs[1] > 3.0

    def test_correction_independent_of_direction(self):
        # the difference u2 - u1 equals the same gauge field for every v
        g = Grid(33)
        a1 = self.quadratic()
        phi = bump_field(g, amplitude=0.2, radius=0.28)
        a2 = a1.gauge_transform(phi)
        w1, _ = newton_solve(a1, BoundaryField.constant(g, 0.1))
        w2, _ = newton_solve(a2, trace(w1), u0=w1 - phi)
        solver = SchrodingerSolver(a1.eval(w1, 1))
        from semilin.matched_map import ClampedSolver as CS

        clamped = CS(a2.eval(w2, 1))
        rng = np.random.default_rng(9)
        phis = []
        for k in range(10):
            coeff = rng.standard_normal(3)
            s = g.boundary_arclength()
            datum = BoundaryField(
                g,
                0.03
                * (
                    coeff[0] * np.sin(np.pi * s / 2)
                    + coeff[1] * np.cos(np.pi * s / 2)
                    + coeff[2] * np.sin(np.pi * s)
                ),
            )
            v = solver.dirichlet(datum)
            u1, _ = solution_map_S(a1, w1, v, solver=solver)
            u2, _ = matched_solution_T(a1, a2, w1, w2, v, solver1=solver, clamped=clamped)
            phis.append(u2 - u1)
        base = phis[0]
        assert max((p - base).sup() for p in phis[1:]) <= 1e-5
