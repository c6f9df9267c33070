"""Cauchy pairs, sampling of local Cauchy-data sets, and stability ratios.

The stability operations realize the quantitative uniqueness statements as
empirical experiments: the ratio of an interior norm to the corresponding
Cauchy-data norms is computed per sample and recorded; the continuum
constants are never asserted against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    BoundaryField,
    Field,
    boundary_surrogate_norm,
    normal_derivative,
    surrogate_norm,
    trace,
)
from .nonlinearity import Nonlinearity
from .schrodinger import SchrodingerSolver
from .solution_map import (
    ContractionError,
    NotSolutionError,
    interior_residual,
    linearized_residual,
    solution_map_S,
)

SEMILINEAR_INPUT_TOL = 1e-8


@dataclass(frozen=True)
class CauchyPair:
    """Boundary trace and outward normal derivative of one solution."""

    dirichlet: BoundaryField
    neumann: BoundaryField

    def sup_diff(self, other: "CauchyPair") -> float:
        return max(
            (self.dirichlet - other.dirichlet).sup(),
            (self.neumann - other.neumann).sup(),
        )


def cauchy_pair(u: Field) -> CauchyPair:
    return CauchyPair(trace(u), normal_derivative(u))


@dataclass
class CauchySampleEntry:
    pair: CauchyPair
    datum: BoundaryField
    norm: float


@dataclass
class CauchySample:
    """Sampled local Cauchy-data set around a base solution."""

    entries: list
    delta: float
    skipped: int

    def export_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("sample,norm\n")
            for k, e in enumerate(self.entries):
                fh.write(f"{k},{float(e.norm)!r}\n")


def sample_cauchy_set(
    a: Nonlinearity,
    w: Field,
    delta: float,
    basis: list,
    count: int,
    seed: int,
) -> CauchySample:
    """Cauchy pairs of `count` solutions within surrogate distance delta of w.

    Directions are random combinations over the linearized-solution family
    generated by the boundary basis (plus the kernel fields when the
    linearization is resonant), scaled to respect delta.  Deterministic for a
    fixed seed; contraction failures are skipped and counted.
    """
    if delta == 0.0:
        return CauchySample([CauchySampleEntry(cauchy_pair(w), trace(w), 0.0)], 0.0, 0)
    q = a.eval(w, 1)
    solver = SchrodingerSolver(q)
    directions = []
    for f in basis:
        v, _, _ = solver.gq(None, f)
        directions.append(v)
    directions.extend(solver.basis.psi)

    entries: list[CauchySampleEntry] = []
    skipped = 0
    for idx in range(count):
        rng = np.random.default_rng([seed, idx])
        coeff = rng.standard_normal(len(directions))
        v = Field.zeros(w.grid)
        for c, d in zip(coeff, directions):
            v = v + float(c) * d
        nv = surrogate_norm(v)
        if nv == 0.0:
            skipped += 1
            continue
        v = (0.5 * delta / nv) * v
        entry = None
        for _ in range(4):
            try:
                u, _ = solution_map_S(a, w, v, solver=solver)
            except ContractionError:
                v = 0.5 * v
                continue
            nrm = surrogate_norm(u - w)
            if nrm <= delta:
                entry = CauchySampleEntry(cauchy_pair(u), trace(u), nrm)
                break
            v = (0.8 * delta / nrm) * v
        if entry is None:
            skipped += 1
        else:
            entries.append(entry)
    return CauchySample(entries, delta, skipped)


def stability_ratio_linear(q: Field, u: Field) -> float:
    """Interior norm over Cauchy-data norms plus linearized residual.

    Finite for every field when the potential is nonresonant; homogeneous of
    degree zero, so exactly scaling invariant.
    """
    num = surrogate_norm(u)
    den = (
        boundary_surrogate_norm(trace(u))
        + boundary_surrogate_norm(normal_derivative(u))
        + linearized_residual(q, u)
    )
    if den < 1e-14:
        return math.inf if num > 1e-10 else 0.0
    return num / den


def stability_ratio_semilinear(a: Nonlinearity, u: Field, u0: Field) -> float:
    """Stability ratio of two solutions of the same nonlinear equation.

    Both inputs must solve the equation to solver precision.  Returns 0 under
    the 0/0 convention and an infinite sentinel on a uniqueness violation,
    which must never occur for valid inputs.
    """
    for name, fld in (("u", u), ("u0", u0)):
        res = interior_residual(a, fld)
        if res > SEMILINEAR_INPUT_TOL * max(1.0, fld.sup()):
            raise NotSolutionError(
                f"{name} has nonlinear residual {res:.3e}; inputs must solve the equation"
            )
    diff = u - u0
    num = surrogate_norm(diff)
    den = boundary_surrogate_norm(trace(diff)) + boundary_surrogate_norm(
        normal_derivative(diff)
    )
    if den < 1e-14:
        return math.inf if num > 1e-10 else 0.0
    return num / den


def ratio_table_csv(rows: list, path) -> None:
    """Ensemble export: sample id, numerator, denominator, ratio, M."""
    with open(path, "w") as fh:
        fh.write("sample,numerator,denominator,ratio,M\n")
        for k, (num, den, ratio, m) in enumerate(rows):
            fh.write(
                f"{k},{float(num)!r},{float(den)!r},{float(ratio)!r},{float(m)!r}\n"
            )
