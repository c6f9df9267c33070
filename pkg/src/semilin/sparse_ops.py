"""Sparse operator assembly, direct solves, and smallest-eigenpair computation.

Operators act on the interior nodes of a grid, flattened row-major over
i = 1..n-2, j = 1..n-2, with Dirichlet values eliminated into the right-hand
side.  Factorizations are immutable and may be shared across solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import Field, Grid

# an eigenvalue counts as Fredholm-kernel iff |lambda| <= KERNEL_TOL_FACTOR * ||A||_inf
KERNEL_TOL_FACTOR = 1e-6

SOLVE_RESIDUAL_FACTOR = 1e-10


class SingularOperatorError(RuntimeError):
    """Direct solve failed because the operator is singular within kernel tolerance."""

    def __init__(self, message: str, near_null_dim: int | None = None):
        super().__init__(message)
        self.near_null_dim = near_null_dim


class EigenConvergenceError(RuntimeError):
    """Eigenpair iteration did not reach the requested residual."""

    def __init__(self, message: str, achieved_residual: float):
        super().__init__(message)
        self.achieved_residual = achieved_residual


@dataclass
class SparseOperator:
    """CSR operator on interior nodes with an explicit symmetry flag."""

    grid: Grid
    matrix: sp.csr_matrix
    symmetric: bool
    _norm_inf: float | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm_inf(self) -> float:
        if self._norm_inf is None:
            self._norm_inf = float(np.max(np.abs(self.matrix).sum(axis=1)))
        return self._norm_inf

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def export_csv(self, path) -> None:
        """Coordinate-triplet dump (row, col, value) for offline inspection."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r},{c},{float(v)!r}\n")


def _check_symmetry(m: sp.csr_matrix) -> bool:
    d = m - m.T
    return len(d.data) == 0 or float(np.max(np.abs(d.data))) <= 1e-14 * max(
        1.0, float(np.max(np.abs(m.data)))
    )


def assemble_schrodinger(q: Field) -> SparseOperator:
    """Interior discretization of laplace + q with Dirichlet elimination."""
    grid = q.grid
    n = grid.n
    m = n - 2
    h2 = grid.h ** 2
    ones = np.ones(m)
    d2 = sp.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1], format="csr") / h2
    eye = sp.identity(m, format="csr")
    lap = sp.kron(d2, eye) + sp.kron(eye, d2)
    mat = (lap + sp.diags(q.values[1:-1, 1:-1].ravel())).tocsr()
    mat.eliminate_zeros()
    return SparseOperator(grid, mat, symmetric=True)


def assemble_bilaplacian_clamped(q: Field) -> SparseOperator:
    """Clamped discretization of (laplace + q)^2 on interior nodes.

    The square is built from the interior Schroedinger matrix plus a diagonal
    ghost correction: boundary values of the inner application are recovered
    from mirror ghosts (y(-h) = y(h), encoding zero normal derivative at
    second order, with y = 0 on the boundary), which at an edge node reduces
    to 2*y_p/h^2 for the adjacent interior node p.  This reproduces the
    classical 13-point clamped stencil.
    """
    grid = q.grid
    n = grid.n
    m = n - 2
    h4 = grid.h ** 4
    a = assemble_schrodinger(q).matrix
    ii, jj = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
    count = (
        (ii == 1).astype(float)
        + (ii == n - 2).astype(float)
        + (jj == 1).astype(float)
        + (jj == n - 2).astype(float)
    )
    ghost = sp.diags(2.0 * count.ravel() / h4)
    mat = (a @ a + ghost).tocsr()
    mat.eliminate_zeros()
    assert _check_symmetry(mat)
    return SparseOperator(grid, mat, symmetric=True)


class Factorization:
    """Immutable LU factorization of a SparseOperator.

    Solves do not check residuals; use the module-level ``solve`` for the
    checked contract.  Shift is nonzero only when the exact factorization
    failed on a singular matrix.
    """

    def __init__(self, op: SparseOperator, shift: float = 0.0):
        self.op = op
        self.shift = shift
        mat = op.matrix.tocsc()
        if shift != 0.0:
            mat = mat + shift * sp.identity(op.dimension, format="csc")
        self._lu = splu(mat)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


def factorize(op: SparseOperator) -> Factorization:
    try:
        return Factorization(op)
    except RuntimeError:
        return Factorization(op, shift=1e-12 * op.norm_inf)


def solve(op: SparseOperator, b: np.ndarray, fact: Factorization | None = None) -> np.ndarray:
    """Direct solve with the residual contract; diagnoses near-singularity."""
    b = np.asarray(b, dtype=float)
    if fact is None:
        fact = factorize(op)
    x = fact.solve(b)
    resid = float(np.max(np.abs(op.apply(x) - b)))
    xmax = float(np.max(np.abs(x), initial=0.0))
    bmax = float(np.max(np.abs(b), initial=0.0))
    bound = SOLVE_RESIDUAL_FACTOR * (op.norm_inf * xmax + bmax)
    # amplification beyond 1/(kernel tolerance) means an eigenvalue inside it
    amplified = xmax > bmax / (KERNEL_TOL_FACTOR * op.norm_inf)
    if not np.all(np.isfinite(x)) or resid > max(bound, 1e-300) or amplified:
        dim = _near_null_dimension(op)
        if dim != 0:
            raise SingularOperatorError(
                f"operator is numerically singular within kernel tolerance "
                f"(near-null dimension {dim}, solve residual {resid:.3e})",
                near_null_dim=dim,
            )
    return x


def _near_null_dimension(op: SparseOperator, cap: int = 6) -> int:
    tol = KERNEL_TOL_FACTOR * op.norm_inf
    try:
        pairs = smallest_eigenpairs(op, cap, tol=1e-8)
    except EigenConvergenceError:
        return -1
    return sum(1 for lam, _ in pairs if abs(lam) <= tol)


def smallest_eigenpairs(
    op: SparseOperator,
    k: int,
    tol: float = 1e-12,
    max_iter: int = 400,
    seed: int = 1234,
) -> list[tuple[float, np.ndarray]]:
    """k eigenpairs of smallest magnitude by shift-invert iteration with deflation.

    Residuals satisfy ||A v - lam v||_2 <= tol * ||A||_inf and the returned
    eigenvectors are orthonormal.  Raises EigenConvergenceError with the
    achieved residual on non-convergence.
    """
    if not op.symmetric:
        raise ValueError("smallest_eigenpairs requires a symmetric operator")
    if k < 1 or k > op.dimension:
        raise ValueError(f"invalid eigenpair count {k}")
    mat = op.matrix
    norm = op.norm_inf
    fact = factorize(op)
    rng = np.random.default_rng(seed)
    vals: list[float] = []
    vecs: list[np.ndarray] = []

    def deflate(x: np.ndarray) -> np.ndarray:
        for v in vecs:
            x = x - np.dot(v, x) * v
        return x

    for _ in range(k):
        x = deflate(rng.standard_normal(op.dimension))
        x /= np.linalg.norm(x)
        lam = float(x @ (mat @ x))
        resid = np.inf
        prev = np.inf
        stalled = 0
        for _ in range(max_iter):
            y = fact.solve(x)
            y = deflate(deflate(y))
            ny = np.linalg.norm(y)
            if not np.isfinite(ny) or ny == 0.0:
                x = deflate(rng.standard_normal(op.dimension))
                x /= np.linalg.norm(x)
                continue
            x = y / ny
            ax = mat @ x
            lam = float(x @ ax)
            resid = float(np.linalg.norm(ax - lam * x))
            if resid <= 0.1 * tol * norm:
                break
            # clustered eigenvalues stall the fixed shift; hand over to RQI
            stalled = stalled + 1 if resid > 0.8 * prev else 0
            prev = resid
            if stalled >= 5:
                break
        if resid > 0.1 * tol * norm:
            x, lam, resid = _rayleigh_polish(mat, norm, x, lam, deflate)
        if resid > tol * norm:
            raise EigenConvergenceError(
                f"eigenpair residual {resid:.3e} above {tol:.1e} * ||A||_inf = {tol * norm:.3e}",
                achieved_residual=resid,
            )
        vals.append(lam)
        vecs.append(x)

    order = np.argsort([abs(v) for v in vals], kind="stable")
    return [(vals[i], vecs[i]) for i in order]


def _rayleigh_polish(mat, norm, x, lam, deflate, rounds: int = 10):
    """Rayleigh-quotient iteration; cubically convergent near an eigenpair."""
    resid = float(np.linalg.norm(mat @ x - lam * x))
    misses = 0
    for _ in range(rounds):
        shifted = (mat - lam * sp.identity(mat.shape[0], format="csr")).tocsc()
        try:
            lu = splu(shifted)
        except RuntimeError:
            lu = splu((shifted + 1e-13 * norm * sp.identity(mat.shape[0], format="csc")).tocsc())
        y = lu.solve(x)
        y = deflate(deflate(y))
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0.0:
            break
        cand = y / ny
        c_lam = float(cand @ (mat @ cand))
        c_resid = float(np.linalg.norm(mat @ cand - c_lam * cand))
        if c_resid < resid:
            x, lam, resid = cand, c_lam, c_resid
            misses = 0
        else:
            misses += 1
            if misses >= 2:
                break
    return x, lam, resid


def discrete_laplacian_eigenvalue(grid: Grid, j: int, k: int) -> float:
    """Eigenvalue of the negated five-point Dirichlet Laplacian for mode (j, k)."""
    h = grid.h
    s = np.sin(j * np.pi * h / 2.0) ** 2 + np.sin(k * np.pi * h / 2.0) ** 2
    return float(4.0 / h ** 2 * s)


def interior_to_field(grid: Grid, vec: np.ndarray, boundary_values: np.ndarray | None = None) -> Field:
    """Assemble a Field from flattened interior values plus optional boundary ring."""
    n = grid.n
    out = np.zeros((n, n))
    out[1:-1, 1:-1] = np.asarray(vec, dtype=float).reshape(n - 2, n - 2)
    if boundary_values is not None:
        ij = grid.boundary_order
        out[ij[:, 0], ij[:, 1]] = boundary_values
    return Field(grid, out)
