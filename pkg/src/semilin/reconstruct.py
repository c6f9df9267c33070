"""Inverse-problem pipelines: recovery of the nonlinearity from boundary data.

The measurement side is a nonlinear Dirichlet-to-Neumann oracle; the known
side is computed from a candidate nonlinearity.  First-order linearization
turns the difference of linearized DN matrices into a linear integral
equation against products of linearized solutions, solved by Tikhonov least
squares with an L-curve rule.  Sweeping the linearization point along a
family of solutions with prescribed point values covers a tube around the
base solution, where the recovered u-derivative is integrated back into the
nonlinearity.  Higher-order divided differences of the solution maps give
the k-th order integral identities and the k-th Taylor recovery.
"""

from __future__ import annotations

import hashlib
import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .cauchy import cauchy_pair
from .grid import (
    BoundaryField,
    Field,
    Grid,
    _trapezoid_weights,
    inner_boundary,
    integrate_domain,
    laplacian,
    normal_derivative,
    trace,
)
from .matched_map import ClampedSolver, matched_solution_T
from .nonlinearity import Nonlinearity
from .runge import point_value_solution
from .schrodinger import DNMatrix, SchrodingerSolver, dn_map, fourier_boundary_basis
from .solution_map import (
    NotLinearizedSolutionError,
    interior_residual,
    linearized_residual,
    newton_solve,
    solution_map_S,
)

DD_STEP_DEFAULT = 1e-2
HYPOTHESIS_TOL = 1e-10


class HypothesisViolationError(RuntimeError):
    """Observed boundary data contradicts the assumed data-set inclusion."""


class UncoveredNodeError(KeyError):
    """Queried a node and offset outside the covered reachable tube."""


# ---------------------------------------------------------------------------
# measurement oracle


class DNOracle:
    """Nonlinear boundary-measurement oracle for a hidden nonlinearity.

    Maps Dirichlet data to the Neumann data of the corresponding solution,
    with optional additive measurement noise that is deterministic for a
    fixed input and seed.
    """

    def __init__(
        self,
        a: Nonlinearity,
        grid: Grid,
        noise: float = 0.0,
        seed: int = 0,
        base_hint: Field | None = None,
    ):
        self.a = a
        self.grid = grid
        self.noise = noise
        self.seed = seed
        self.base_hint = base_hint
        self.calls = 0

    def __call__(self, g: BoundaryField) -> BoundaryField:
        u, _ = newton_solve(self.a, g, u0=self.base_hint)
        self.calls += 1
        nd = normal_derivative(u)
        if self.noise > 0.0:
            digest = hashlib.blake2b(g.values.tobytes(), digest_size=8).digest()
            rng = np.random.default_rng([self.seed, int.from_bytes(digest, "big")])
            nd = nd + BoundaryField(self.grid, self.noise * rng.standard_normal(self.grid.boundary_count))
        return nd


def linearized_dn_matrix(
    oracle, g0: BoundaryField, basis: list, eps: float = DD_STEP_DEFAULT
) -> DNMatrix:
    """Central-difference linearization of the oracle at the base datum g0."""
    grid = g0.grid
    cols = []
    for f in basis:
        plus = oracle(g0 + eps * f)
        minus = oracle(g0 + (-eps) * f)
        d = (1.0 / (2.0 * eps)) * (plus - minus)
        cols.append([inner_boundary(d, b) for b in basis])
    return DNMatrix(basis=list(basis), matrix=np.array(cols).T, q=None, label="oracle")


# ---------------------------------------------------------------------------
# Tikhonov least squares with gradient seminorm and L-curve rule


@dataclass
class RecoveryReport:
    reg_used: float
    lcurve: list
    effective_rank: int
    rows: int
    lcurve_fixed: bool = False

    def to_dict(self) -> dict:
        return {
            "reg_used": self.reg_used,
            "lcurve": [[float(a), float(b), float(c)] for a, b, c in self.lcurve],
            "effective_rank": self.effective_rank,
            "rows": self.rows,
            "lcurve_fixed": self.lcurve_fixed,
        }


def _gradient_penalty(grid: Grid) -> sp.csr_matrix:
    """Stacked forward differences on the full node grid, both axes."""
    n = grid.n
    eye = sp.identity(n, format="csr")
    d1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    dx = sp.kron(d1, eye)
    dy = sp.kron(eye, d1)
    return sp.vstack([dx, dy]).tocsr()


class _TikhonovPath:
    """Shared data for solving min |Gx - d|^2 + reg |D x|^2 over a reg path.

    Works in data space: with L = D^T D + eps I factorized once, the whole
    regularization path reduces to one eigendecomposition of G L^{-1} G^T.
    """

    def __init__(self, grid: Grid, rows: np.ndarray):
        self.grid = grid
        self.rows = rows
        d = _gradient_penalty(grid)
        lmat = (d.T @ d + 1e-8 * sp.identity(grid.n ** 2)).tocsc()
        lu = splu(lmat)
        self.w = np.column_stack([lu.solve(r) for r in rows])  # L^{-1} G^T
        k = rows @ self.w
        k = 0.5 * (k + k.T)
        self.eigvals, self.eigvecs = np.linalg.eigh(k)
        self.eigvals = np.maximum(self.eigvals, 0.0)

    def solve(self, data: np.ndarray, reg: float) -> np.ndarray:
        qd = self.eigvecs.T @ data
        alpha = self.eigvecs @ (qd / (self.eigvals + reg))
        return self.w @ alpha

    def curve_point(self, data: np.ndarray, reg: float) -> tuple[float, float]:
        qd = self.eigvecs.T @ data
        resid = np.linalg.norm(reg * qd / (self.eigvals + reg))
        semi = np.sqrt(np.sum(self.eigvals * (qd / (self.eigvals + reg)) ** 2))
        return float(resid), float(semi)

    def effective_rank(self) -> int:
        lmax = self.eigvals[-1] if len(self.eigvals) else 0.0
        return int(np.sum(self.eigvals > 1e-12 * max(lmax, 1e-300)))


def _lcurve_corner(points: list, plateau_factor: float = 1.5) -> int:
    """Corner of a discrete L-curve, for regularization weights in ascending order.

    Picks the top of the vertical branch: the largest weight whose residual
    stays within plateau_factor of the smallest residual on the grid.  Below
    that point the fit no longer improves and the seminorm only absorbs
    noise; above it the residual grows, which is the horizontal branch.
    """
    resids = np.array([max(r, 1e-300) for r, _ in points])
    floor = resids.min()
    ok = np.flatnonzero(resids <= plateau_factor * floor)
    return int(ok[-1]) if len(ok) else int(np.argmin(resids))


def _solve_regularized(
    grid: Grid,
    rows: np.ndarray,
    data: np.ndarray,
    reg: float | None,
    lcurve_points: int = 10,
) -> tuple[Field, RecoveryReport]:
    path = _TikhonovPath(grid, rows)
    lmax = float(path.eigvals[-1]) if len(path.eigvals) else 1.0
    rank = path.effective_rank()
    if rank < min(rows.shape):
        warnings.warn(
            f"rank deficiency: effective rank {rank} below row count {rows.shape[0]}",
            RuntimeWarning,
            stacklevel=2,
        )
    if reg is None:
        regs = lmax * np.logspace(-15, -3, lcurve_points)
        pts = [path.curve_point(data, r) for r in regs]
        k = _lcurve_corner(pts)
        reg_used = float(regs[k])
        lcurve = [(float(r), p[0], p[1]) for r, p in zip(regs, pts)]
        fixed = False
    else:
        reg_used = float(reg)
        p = path.curve_point(data, reg_used)
        lcurve = [(reg_used, p[0], p[1])]
        fixed = True
    x = path.solve(data, reg_used)
    fld = Field(grid, x.reshape(grid.n, grid.n))
    return fld, RecoveryReport(reg_used, lcurve, rank, rows.shape[0], fixed)


def _product_rows(grid: Grid, products: list) -> np.ndarray:
    wts = _trapezoid_weights(grid).ravel()
    return np.array([wts * p.values.ravel() for p in products])


def recover_potential_difference(
    dn_a: DNMatrix,
    dn_b: DNMatrix,
    q_ref: Field,
    reg: float | None = None,
    solver: SchrodingerSolver | None = None,
) -> tuple[Field, RecoveryReport]:
    """Least-squares potential difference from two linearized DN matrices.

    Pairs the DN difference with products of reference solutions over all
    basis pairs and inverts with a gradient-seminorm Tikhonov penalty; the
    regularization weight comes from a discrete L-curve unless given.
    """
    if len(dn_a.basis) != len(dn_b.basis):
        raise ValueError("DN matrices use different boundary bases")
    basis = dn_a.basis
    grid = q_ref.grid
    if solver is None:
        solver = SchrodingerSolver(q_ref)
    sols = [solver.dirichlet(f) for f in basis]
    diff = dn_a.matrix - dn_b.matrix
    diff = 0.5 * (diff + diff.T)  # pairings of the symmetrized difference
    products = []
    data = []
    for i in range(len(basis)):
        for j in range(i, len(basis)):
            products.append(sols[i] * sols[j])
            data.append(diff[j, i])
    rows = _product_rows(grid, products)
    return _solve_regularized(grid, rows, np.array(data), reg)


# ---------------------------------------------------------------------------
# first-order sweep over the reachable tube


@dataclass
class ReachableSlice:
    """Recovered u-derivative of the nonlinearity on a tube around the base.

    values[l] estimates the derivative at offset lambda_grid[l] from the base
    solution; coverage marks the nodes where the sweep actually bracketed the
    offset.  Uncovered entries hold nan.
    """

    lambda_grid: np.ndarray
    values: np.ndarray
    coverage: np.ndarray
    base: Field

    def __post_init__(self):
        lg = np.asarray(self.lambda_grid, dtype=float)
        if not np.all(np.diff(lg) > 0):
            raise ValueError("lambda grid must be strictly increasing")
        if not np.any(lg == 0.0):
            raise ValueError("lambda grid must include 0")
        if np.any(self.coverage & ~np.isfinite(self.values)):
            raise ValueError("covered entries must hold finite values")

    def coverage_fraction(self, l: int | None = None) -> float:
        sel = self.coverage if l is None else self.coverage[l]
        inner = sel[..., 1:-1, 1:-1]
        return float(np.mean(inner))

    def export_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("l,lambda,i,j,covered,value\n")
            n = self.base.grid.n
            for l, lam in enumerate(self.lambda_grid):
                for i in range(n):
                    for j in range(n):
                        cov = bool(self.coverage[l, i, j])
                        val = self.values[l, i, j]
                        fh.write(
                            f"{l},{float(lam)!r},{i},{j},{int(cov)},"
                            f"{(float(val) if cov else float('nan'))!r}\n"
                        )


def first_linearization_scan(
    oracle,
    a_known: Nonlinearity,
    w: Field,
    lambda_max: float,
    lambda_steps: int,
    basis_size: int = 24,
    eps: float = DD_STEP_DEFAULT,
    reg: float | None = None,
    centers: list | None = None,
    point_target: float = 4.0,
    reach_quantile: float = 0.02,
) -> ReachableSlice:
    """Sweep recovery of the u-derivative of the hidden nonlinearity.

    For each sweep parameter t, the known side produces the base solution
    u_t and its linearized DN matrix; the oracle is linearized at the trace
    of u_t; their difference is inverted for the potential mismatch.  The
    per-node curves (u_t(x) - w(x), recovered value) are regridded onto the
    lambda grid by monotone linear interpolation; nodes whose sweep does not
    bracket an offset stay uncovered there.
    """
    grid = w.grid
    q0 = a_known.eval(w, 1)
    if lambda_steps % 2 == 0:
        lambda_steps += 1
    lam_grid = np.linspace(-lambda_max, lambda_max, lambda_steps)
    lam_grid[lambda_steps // 2] = 0.0
    if centers is None:
        centers = [(grid.n // 2, grid.n // 2)]
    basis = fourier_boundary_basis(grid, basis_size)

    values = np.full((lambda_steps, grid.n, grid.n), np.nan)
    coverage = np.zeros((lambda_steps, grid.n, grid.n), dtype=bool)

    for center in centers:
        solver0 = SchrodingerSolver(q0)
        vc = point_value_solution(q0, center, point_target, solver=solver0).field
        active = np.abs(vc.values) >= max(
            np.quantile(np.abs(vc.values), reach_quantile), 1e-8
        )
        scale = float(np.quantile(np.abs(vc.values[active]), 0.5))
        t_max = 1.2 * lambda_max / max(
            float(np.quantile(np.abs(vc.values[active]), 0.1)), 1e-8
        )
        ts = np.linspace(-t_max, t_max, lambda_steps)
        ts[lambda_steps // 2] = 0.0

        z_sweep = np.empty((len(ts), grid.n, grid.n))
        rho_sweep = np.empty((len(ts), grid.n, grid.n))
        for k, t in enumerate(ts):
            if t == 0.0:
                u_t = w
            else:
                u_t, _ = solution_map_S(a_known, w, float(t) * vc, solver=solver0)
            q_t = a_known.eval(u_t, 1)
            solver_t = SchrodingerSolver(q_t)
            dn_known = dn_map(q_t, basis, solver=solver_t)
            dn_orac = linearized_dn_matrix(oracle, trace(u_t), basis, eps=eps)
            dq, _ = recover_potential_difference(
                dn_orac, dn_known, q_t, reg=reg, solver=solver_t
            )
            z_sweep[k] = u_t.values - w.values
            rho_sweep[k] = q_t.values + dq.values

        mid = lambda_steps // 2
        for i in range(grid.n):
            for j in range(grid.n):
                # offset zero is always covered through the t = 0 sample
                if not coverage[mid, i, j]:
                    values[mid, i, j] = rho_sweep[mid, i, j]
                    coverage[mid, i, j] = True
                z = z_sweep[:, i, j]
                dz = np.diff(z)
                if np.all(dz > 0):
                    zs, rs = z, rho_sweep[:, i, j]
                elif np.all(dz < 0):
                    zs, rs = z[::-1], rho_sweep[::-1, i, j]
                else:
                    continue  # non-monotone sweep at this node; leave masked
                for l, lam in enumerate(lam_grid):
                    if coverage[l, i, j] or lam < zs[0] or lam > zs[-1]:
                        continue
                    values[l, i, j] = np.interp(lam, zs, rs)
                    coverage[l, i, j] = True

    return ReachableSlice(lam_grid, values, coverage, w)


class NonlinearityEstimate:
    """Reconstructed nonlinearity on the covered tube around the base solution.

    The value at offset zero is the negated discrete Laplacian of the base
    solution; away from zero the recovered u-derivative is integrated by the
    trapezoidal rule along the offset grid.
    """

    def __init__(self, slice_: ReachableSlice, w: Field):
        self.slice = slice_
        self.base = w
        self.base_value = -1.0 * laplacian(w).values
        lam = slice_.lambda_grid
        vals = slice_.values
        mid = int(np.argwhere(lam == 0.0)[0, 0])
        n = w.grid.n
        steps = len(lam)
        cum = np.zeros((steps, n, n))
        cov = np.zeros((steps, n, n), dtype=bool)
        cov[mid] = slice_.coverage[mid]
        for l in range(mid + 1, steps):
            dlam = lam[l] - lam[l - 1]
            cum[l] = cum[l - 1] + 0.5 * dlam * (vals[l] + vals[l - 1])
            cov[l] = cov[l - 1] & slice_.coverage[l]
        for l in range(mid - 1, -1, -1):
            dlam = lam[l + 1] - lam[l]
            cum[l] = cum[l + 1] - 0.5 * dlam * (vals[l] + vals[l + 1])
            cov[l] = cov[l + 1] & slice_.coverage[l]
        self._cum = cum
        self._cov = cov
        self._mid = mid

    @property
    def lambda_grid(self) -> np.ndarray:
        return self.slice.lambda_grid

    def offset_field(self, lam: float) -> tuple[Field, np.ndarray]:
        """a_hat(x, w + lam) and its coverage mask, for lam on the offset grid."""
        lg = self.lambda_grid
        idx = np.argmin(np.abs(lg - lam))
        if abs(lg[idx] - lam) > 1e-12:
            raise UncoveredNodeError(f"offset {lam} not on the lambda grid")
        vals = self.base_value + self._cum[idx]
        return Field(self.base.grid, np.nan_to_num(vals)), self._cov[idx].copy()

    def value(self, i: int, j: int, lam: float) -> float:
        fld, cov = self.offset_field(lam)
        if not cov[i, j]:
            raise UncoveredNodeError(f"node ({i}, {j}) uncovered at offset {lam}")
        return float(fld.values[i, j])


def assemble_nonlinearity(slice_: ReachableSlice, w: Field) -> NonlinearityEstimate:
    return NonlinearityEstimate(slice_, w)


# ---------------------------------------------------------------------------
# gauge recovery


@dataclass
class GaugeRecovery:
    phi: Field
    w2: Field
    neumann_mismatch: float


def recover_gauge_phi(
    oracle,
    a2: Nonlinearity,
    w1: Field,
    neumann_tol: float = 1e-6,
) -> GaugeRecovery:
    """Gauge field between the oracle's base solution and the candidate model.

    Solves the candidate equation with the Dirichlet data of w1 and checks the
    Neumann data against the oracle; a mismatch above tolerance means the
    assumed Cauchy-data inclusion fails.
    """
    observed = oracle(trace(w1))
    w2, _ = newton_solve(a2, trace(w1), u0=w1)
    mismatch = (normal_derivative(w2) - observed).sup()
    if mismatch > neumann_tol:
        raise HypothesisViolationError(
            f"Neumann mismatch {mismatch:.3e} above {neumann_tol:.0e}: the oracle "
            "data is not reproduced by any nearby candidate solution"
        )
    return GaugeRecovery(phi=w2 - w1, w2=w2, neumann_mismatch=mismatch)


# ---------------------------------------------------------------------------
# higher-order linearization


@dataclass
class DividedDifference:
    field: Field
    error_estimate: float
    noise_floor_hit: bool
    step_used: float


def _mixed_difference(evaluate, directions: list, eps: float, grid: Grid) -> Field:
    k = len(directions)
    acc = np.zeros((grid.n, grid.n))
    for signs in itertools.product((1.0, -1.0), repeat=k):
        arg = Field.zeros(grid)
        for s, v in zip(signs, directions):
            arg = arg + (s * eps) * v
        acc = acc + float(np.prod(signs)) * evaluate(arg).values
    return Field(grid, acc / (2.0 * eps) ** k)


def divided_difference_solution(
    a: Nonlinearity,
    w: Field,
    directions: list,
    eps: float = DD_STEP_DEFAULT,
    halvings: int = 1,
    solver: SchrodingerSolver | None = None,
) -> DividedDifference:
    """Mixed k-th derivative of the solution map at zero, by central differences.

    Costs 2^k solves per level; the Richardson halving estimates the O(eps^2)
    error, and a second halving detects the solver noise floor.
    """
    k = len(directions)
    if not 1 <= k <= 5:
        raise ValueError(f"order {k} outside 1..5")
    q = a.eval(w, 1)
    if solver is None:
        solver = SchrodingerSolver(q)
    for v in directions:
        res = linearized_residual(q, v)
        if res > 1e-9 * max(1.0, v.sup()):
            raise NotLinearizedSolutionError(
                f"direction residual {res:.3e} too large for divided differences"
            )

    def evaluate(arg: Field) -> Field:
        u, _ = solution_map_S(a, w, arg, solver=solver)
        return u

    grid = w.grid
    levels = [eps / 2 ** m for m in range(halvings + 1)]
    fields = [_mixed_difference(evaluate, directions, e, grid) for e in levels]
    diffs = [(fields[m + 1] - fields[m]).sup() for m in range(len(fields) - 1)]
    err = diffs[-1] / 3.0 if diffs else 0.0
    noise = len(diffs) >= 2 and diffs[-1] > 0.5 * diffs[-2]
    return DividedDifference(
        field=fields[-1],
        error_estimate=err,
        noise_floor_hit=noise,
        step_used=levels[-1],
    )


@dataclass
class HigherOrderIdentity:
    """Both routes to the k-th order integral identity.

    value_direct is the quoted integral computed from the exact derivatives;
    value_boundary comes from the divided differences of the two solution
    maps through the identity's defining equation.  The Cauchy-data norms of
    the difference field f certify the boundary conditions of that equation.
    """

    value_direct: float
    value_boundary: float | None
    f_trace_norm: float | None
    f_neumann_norm: float | None
    dd_error_estimate: float | None


def higher_order_identity(
    a1: Nonlinearity,
    a2: Nonlinearity,
    w1: Field,
    w2: Field,
    k: int,
    solutions: list,
    eps: float = 5e-2,
    boundary_route: bool = True,
    solver1: SchrodingerSolver | None = None,
    clamped: ClampedSolver | None = None,
) -> HigherOrderIdentity:
    """Integral of the k-th derivative mismatch against k+1 linearized solutions.

    Requires the derivative-matching hypothesis up to order k-1; each of the
    k+1 fields must solve the common linearized equation.  The boundary route
    cross-validates through the divided differences of the two solution maps.
    """
    if not 2 <= k <= 5:
        raise ValueError(f"order k = {k} outside 2..5")
    if len(solutions) != k + 1:
        raise ValueError(f"need k + 1 = {k + 1} solutions, got {len(solutions)}")
    for l in range(1, k):
        gap = (a1.eval(w1, l) - a2.eval(w2, l)).sup()
        if gap > HYPOTHESIS_TOL:
            raise HypothesisViolationError(
                f"derivative order {l} differs by {gap:.3e} between the sides"
            )
    q = a1.eval(w1, 1)
    for v in solutions:
        res = linearized_residual(q, v)
        if res > 1e-9 * max(1.0, v.sup()):
            raise NotLinearizedSolutionError(
                f"field with linearized residual {res:.3e} passed as a solution"
            )

    grid = w1.grid
    prod = Field.constant(grid, 1.0)
    for v in solutions:
        prod = prod * v
    gap_k = a1.eval(w1, k) - a2.eval(w2, k)
    value_direct = integrate_domain(gap_k * prod)

    if not boundary_route:
        return HigherOrderIdentity(value_direct, None, None, None, None)

    if solver1 is None:
        solver1 = SchrodingerSolver(q)
    if clamped is None:
        clamped = ClampedSolver(a2.eval(w2, 1))

    def correction(arg: Field) -> Field:
        u1, _ = solution_map_S(a1, w1, arg, solver=solver1)
        u2, _ = matched_solution_T(a1, a2, w1, w2, arg, solver1=solver1, clamped=clamped)
        return u1 - u2

    dirs = solutions[:k]
    v_last = solutions[k]
    fields = []
    for e in (eps, eps / 2):
        fields.append(_mixed_difference(correction, dirs, e, grid))
    dd_err = (fields[1] - fields[0]).sup() / 3.0
    f = fields[1]
    lap_f = laplacian(f)
    lhs = Field(grid, lap_f.values + q.values * f.values)
    value_boundary = -integrate_domain(lhs * v_last)
    return HigherOrderIdentity(
        value_direct=value_direct,
        value_boundary=value_boundary,
        f_trace_norm=trace(f).sup(),
        f_neumann_norm=normal_derivative(f).sup(),
        dd_error_estimate=dd_err,
    )


# ---------------------------------------------------------------------------
# k-th Taylor coefficient recovery from DN oracles


def recover_kth_taylor(
    oracle_a,
    oracle_b,
    q_common: Field,
    k: int,
    reg: float | None = None,
    probe_size: int = 10,
    test_size: int = 24,
    eps: float = 5e-2,
) -> tuple[Field, RecoveryReport]:
    """Difference of k-th u-derivatives at the base from two DN oracles.

    Pairs k-th divided differences of the oracles over probe directions with
    the full test basis, producing the integral of the unknown difference
    against products of k + 1 linearized solutions, then inverts as in the
    first-order recovery.
    """
    if not 2 <= k <= 5:
        raise ValueError(f"order k = {k} outside 2..5")
    grid = q_common.grid
    solver = SchrodingerSolver(q_common)
    basis = fourier_boundary_basis(grid, test_size)
    sols = [solver.dirichlet(f) for f in basis]
    zero = BoundaryField.zeros(grid)

    def oracle_dd(oracle, idxs) -> BoundaryField:
        acc = np.zeros(grid.boundary_count)
        for signs in itertools.product((1.0, -1.0), repeat=k):
            g = zero
            for s, m in zip(signs, idxs):
                g = g + (s * eps) * basis[m]
            acc = acc + float(np.prod(signs)) * oracle(g).values
        return BoundaryField(grid, acc / (2.0 * eps) ** k)

    products = []
    data = []
    for idxs in itertools.combinations_with_replacement(range(probe_size), k):
        dd = oracle_dd(oracle_a, idxs) - oracle_dd(oracle_b, idxs)
        base_prod = Field.constant(grid, 1.0)
        for m in idxs:
            base_prod = base_prod * sols[m]
        for j in range(test_size):
            products.append(base_prod * sols[j])
            data.append(-inner_boundary(dd, basis[j]))
    rows = _product_rows(grid, products)
    return _solve_regularized(grid, rows, np.array(data), reg)


def relative_l2_error(recovered: Field, truth: Field, mask: np.ndarray | None = None) -> float:
    """L2 error over the (optionally masked) interior, relative to the truth."""
    wts = _trapezoid_weights(recovered.grid)
    diff2 = wts * (recovered.values - truth.values) ** 2
    ref2 = wts * truth.values ** 2
    if mask is not None:
        diff2 = np.where(mask, diff2, 0.0)
        ref2 = np.where(mask, ref2, 0.0)
    return float(np.sqrt(np.sum(diff2) / max(np.sum(ref2), 1e-300)))
