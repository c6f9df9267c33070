"""Linearized solver with Fredholm kernel corrections.

For a potential q the Dirichlet problem for laplace + q may fail to be
well-posed: the operator has a finite-dimensional kernel spanned by fields
with zero trace.  This module detects that kernel, builds the finite-rank
boundary correction that restores solvability, produces the canonical
solution orthogonal to the kernel, and assembles linearized
Dirichlet-to-Neumann matrices over a Fourier boundary basis.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import (
    BoundaryField,
    Field,
    Grid,
    embed_boundary,
    inner_boundary,
    inner_domain,
    laplacian,
    normal_derivative,
    surrogate_norm,
    trace,
)
from .sparse_ops import (
    KERNEL_TOL_FACTOR,
    Factorization,
    SparseOperator,
    assemble_schrodinger,
    factorize,
    interior_to_field,
    smallest_eigenpairs,
)

GQ_ORTHOGONALITY_TOL = 1e-8
GQ_RESIDUAL_TOL = 1e-9


class ResonantPotentialError(RuntimeError):
    """The potential has a nontrivial kernel; use gq_solve instead."""


class KernelDimensionError(RuntimeError):
    """More kernel directions than the detection cap; potential is ill-posed here."""


@dataclass(frozen=True)
class KernelBasis:
    """Kernel fields of laplace + q with orthonormalized Neumann traces.

    The fields psi_j have exactly zero trace; their Neumann traces are
    orthonormal in the boundary inner product.  m = 0 is the well-posed case.
    """

    q: Field
    psi: tuple[Field, ...]
    neumann_traces: tuple[BoundaryField, ...]
    eigenvalues: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.psi)

    def domain_orthonormal_fields(self) -> list[Field]:
        """Kernel basis re-orthonormalized in the domain inner product."""
        if self.m == 0:
            return []
        gram = np.array([[inner_domain(a, b) for b in self.psi] for a in self.psi])
        chol = np.linalg.cholesky(gram)
        inv = np.linalg.inv(chol)
        out = []
        for i in range(self.m):
            f = Field.zeros(self.q.grid)
            for j in range(i + 1):
                f = f + inv[i, j] * self.psi[j]
            out.append(f)
        return out

    def project_domain(self, u: Field) -> Field:
        """Domain-inner-product projection of u onto the kernel span."""
        out = Field.zeros(self.q.grid)
        for f in self.domain_orthonormal_fields():
            out = out + inner_domain(u, f) * f
        return out


def kernel_basis(q: Field, max_dim: int = 6) -> KernelBasis:
    """Detect the Fredholm kernel of laplace + q and orthonormalize its traces."""
    op = assemble_schrodinger(q)
    tol = KERNEL_TOL_FACTOR * op.norm_inf
    k = 2
    pairs = smallest_eigenpairs(op, k)
    while all(abs(lam) <= tol for lam, _ in pairs) and k < max_dim:
        k = min(k + 2, max_dim)
        pairs = smallest_eigenpairs(op, k)
    kernel = [(lam, v) for lam, v in pairs if abs(lam) <= tol]
    if len(kernel) == len(pairs):
        raise KernelDimensionError(
            f"kernel dimension reached the detection cap {max_dim}"
        )
    if not kernel:
        return KernelBasis(q, (), (), ())

    fields = [interior_to_field(q.grid, v) for _, v in kernel]
    traces = [normal_derivative(f) for f in fields]
    # Gram-Schmidt on the Neumann traces, applying the same combinations to
    # the fields so that stored traces stay the exact normal derivatives
    out_fields: list[Field] = []
    out_traces: list[BoundaryField] = []
    for f, t in zip(fields, traces):
        for g, s in zip(out_fields, out_traces):
            c = inner_boundary(t, s)
            t = t - c * s
            f = f - c * g
        nrm = np.sqrt(inner_boundary(t, t))
        if nrm <= 1e-12:
            raise KernelDimensionError("kernel field with numerically zero Neumann trace")
        out_fields.append((1.0 / nrm) * f)
        out_traces.append((1.0 / nrm) * t)
    lams = tuple(lam for lam, _ in kernel)
    return KernelBasis(q, tuple(out_fields), tuple(out_traces), lams)


def compute_phi(F: Field | None, f: BoundaryField | None, basis: KernelBasis) -> BoundaryField:
    """Finite-rank boundary correction, by the quadrature pairing formula.

    Sum over the kernel of (domain pairing of F with psi_j plus boundary
    pairing of f with the Neumann trace) times the Neumann trace.
    """
    grid = basis.q.grid
    out = BoundaryField.zeros(grid)
    for psi_j, t_j in zip(basis.psi, basis.neumann_traces):
        c = 0.0
        if F is not None:
            c += inner_domain(F, psi_j)
        if f is not None:
            c += inner_boundary(f, t_j)
        out = out + c * t_j
    return out


@dataclass
class GqReport:
    residual: float
    orthogonality: float
    trace_defect: float
    stability_ratio: float
    kernel_dim: int

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "orthogonality": self.orthogonality,
            "trace_defect": self.trace_defect,
            "stability_ratio": self.stability_ratio,
            "kernel_dim": self.kernel_dim,
        }


class SchrodingerSolver:
    """Shared assembly, factorization, and kernel data for one potential.

    Use this when solving repeatedly with the same q (DN maps, Picard loops);
    the module-level functions build a throwaway instance.
    """

    def __init__(self, q: Field, basis: KernelBasis | None = None):
        self.q = q
        self.grid = q.grid
        self.operator = assemble_schrodinger(q)
        self.basis = kernel_basis(q) if basis is None else basis
        if self.basis.m == 0:
            self._fact = factorize(self.operator)
            self._bordered = None
        else:
            self._fact = None
            psi_cols = np.column_stack([p.interior() for p in self.basis.psi])
            a = self.operator.matrix
            m = self.basis.m
            bordered = sp.bmat(
                [[a, sp.csr_matrix(psi_cols)], [sp.csr_matrix(psi_cols.T), None]],
                format="csc",
            )
            self._bordered = splu(bordered)
            self._psi_cols = psi_cols
            # solvability data: interior pairing of each Neumann-trace datum
            # against an orthonormalized interior kernel basis
            qmat, _ = np.linalg.qr(psi_cols)
            self._kernel_q = qmat
            rhs_cols = np.column_stack(
                [self._boundary_rhs(t) for t in self.basis.neumann_traces]
            )
            self._solvability = qmat.T @ rhs_cols

    def _boundary_rhs(self, g: BoundaryField) -> np.ndarray:
        """Interior right-hand side produced by eliminating boundary values g."""
        return -laplacian(embed_boundary(g)).values[1:-1, 1:-1].ravel()

    def discrete_phi(self, F: Field | None, f: BoundaryField | None) -> BoundaryField:
        """Boundary correction making the interior system exactly solvable.

        Agrees with compute_phi to second order in h; returned by gq_solve so
        that the trace identity and the interior residual hold at solver
        precision simultaneously.
        """
        if self.basis.m == 0:
            return BoundaryField.zeros(self.grid)
        b = np.zeros(self.grid.interior_count)
        if F is not None:
            b += F.interior()
        if f is not None:
            b += self._boundary_rhs(f)
        beta = self._kernel_q.T @ b
        coeff = np.linalg.solve(self._solvability, beta)
        out = BoundaryField.zeros(self.grid)
        for c, t in zip(coeff, self.basis.neumann_traces):
            out = out + float(c) * t
        return out

    def gq(self, F: Field | None, f: BoundaryField | None) -> tuple[Field, BoundaryField, GqReport]:
        """Canonical solution orthogonal to the kernel, with its correction."""
        grid = self.grid
        phi = self.discrete_phi(F, f)
        g = (f - phi) if f is not None else (-1.0) * phi
        b = np.zeros(grid.interior_count)
        if F is not None:
            b += F.interior()
        b += self._boundary_rhs(g)
        if self.basis.m == 0:
            x = self._fact.solve(b)
        else:
            rhs = np.concatenate([b, np.zeros(self.basis.m)])
            sol = self._bordered.solve(rhs)
            x = sol[: grid.interior_count]
            # strip any kernel component the bordered solve left at roundoff
            x = x - self._kernel_q @ (self._kernel_q.T @ x)
        u = interior_to_field(grid, x, boundary_values=g.values)
        report = self._report(u, F, f, g)
        return u, phi, report

    def dirichlet(self, f: BoundaryField) -> Field:
        """Well-posed Dirichlet solve; raises on a resonant potential."""
        if self.basis.m > 0:
            raise ResonantPotentialError(
                f"potential has kernel dimension {self.basis.m}; use gq_solve"
            )
        b = self._boundary_rhs(f)
        x = self._fact.solve(b)
        return interior_to_field(self.grid, x, boundary_values=f.values)

    def _report(self, u, F, f, g) -> GqReport:
        resid_field = laplacian(u).values[1:-1, 1:-1] + self.q.values[1:-1, 1:-1] * u.values[1:-1, 1:-1]
        if F is not None:
            resid_field = resid_field - F.values[1:-1, 1:-1]
        residual = float(np.max(np.abs(resid_field)))
        orth = 0.0
        for psi_j in self.basis.psi:
            orth = max(orth, abs(inner_domain(u, psi_j)))
        trace_defect = float(np.max(np.abs(trace(u).values - g.values)))
        denom = 0.0
        if F is not None:
            denom += F.sup()
        if f is not None:
            denom += f.sup()
        ratio = surrogate_norm(u) / denom if denom > 0 else 0.0
        return GqReport(residual, orth, trace_defect, ratio, self.basis.m)


def gq_solve(q: Field, F: Field | None, f: BoundaryField | None, basis: KernelBasis | None = None):
    """One-shot canonical solve; returns (u, phi, report)."""
    return SchrodingerSolver(q, basis=basis).gq(F, f)


def dirichlet_solve(q: Field, f: BoundaryField) -> Field:
    return SchrodingerSolver(q).dirichlet(f)


# ---------------------------------------------------------------------------
# boundary bases and DN matrices


def fourier_boundary_basis(grid: Grid, size: int) -> list[BoundaryField]:
    """First `size` Fourier modes over the arclength parametrization.

    Orthonormal in the boundary inner product; discrete orthogonality is exact
    as long as the highest frequency stays below the Nyquist limit.
    """
    count = grid.boundary_count
    if size < 1 or size >= count:
        raise ValueError(f"basis size {size} out of range for {count} boundary nodes")
    s = grid.boundary_arclength()
    out = [BoundaryField.constant(grid, 0.5)]
    k = 1
    while len(out) < size:
        angle = np.pi * k * s / 2.0
        if k >= count // 2:
            raise ValueError("basis size exceeds the Nyquist limit of the boundary grid")
        out.append(BoundaryField(grid, np.sin(angle) / np.sqrt(2.0)))
        if len(out) < size:
            out.append(BoundaryField(grid, np.cos(angle) / np.sqrt(2.0)))
        k += 1
    return out


@dataclass
class DNMatrix:
    """Neumann responses of a boundary basis under one linearized problem.

    Column i holds the expansion of the Neumann data of the solution with
    Dirichlet datum basis[i], in the same basis.
    """

    basis: list[BoundaryField]
    matrix: np.ndarray
    q: Field | None = None
    label: str = ""

    @property
    def size(self) -> int:
        return len(self.basis)

    def save(self, path) -> None:
        """CSV body with a JSON header line (basis size, q hash, grid n)."""
        grid = self.basis[0].grid
        header = {
            "basis_size": self.size,
            "grid_n": grid.n,
            "q_hash": _field_hash(self.q) if self.q is not None else None,
            "label": self.label,
        }
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            for row in self.matrix:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _field_hash(f: Field) -> str:
    return hashlib.sha256(np.ascontiguousarray(f.values).tobytes()).hexdigest()[:16]


def dn_map(q: Field, basis: list[BoundaryField], solver: SchrodingerSolver | None = None) -> DNMatrix:
    """Linearized DN matrix over a boundary basis; requires a trivial kernel."""
    if solver is None:
        solver = SchrodingerSolver(q)
    if solver.basis.m > 0:
        raise ResonantPotentialError(
            f"potential has kernel dimension {solver.basis.m}; DN map undefined"
        )
    gram = np.array([[inner_boundary(a, b) for b in basis] for a in basis])
    cols = []
    for f in basis:
        du = normal_derivative(solver.dirichlet(f))
        cols.append([inner_boundary(du, b) for b in basis])
    matrix = np.linalg.solve(gram, np.array(cols).T)
    return DNMatrix(basis=list(basis), matrix=matrix, q=q)


def dn_pairing(dn: DNMatrix, i: int, j: int) -> float:
    """Boundary pairing of the response to basis[i] against basis[j]."""
    gram_j = [inner_boundary(dn.basis[j], b) for b in dn.basis]
    return float(np.dot(gram_j, dn.matrix[:, i]))
