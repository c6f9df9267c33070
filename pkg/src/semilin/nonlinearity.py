"""Closed-form nonlinearities a(x, z) with exact z-derivatives and gauge shifts.

A nonlinearity is a sum of power and sine terms with constant or Field
coefficients.  Derivatives in z are exact up to order six, which keeps the
higher-order divided-difference experiments free of interpolation error.
An optional gauge shift phi (zero Cauchy data) turns a into
laplace(phi) + a(x, z + phi); its discrete Laplacian is cached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid, laplacian, normal_derivative, trace

MAX_DERIVATIVE_ORDER = 6

GAUGE_CAUCHY_TOL = 1e-12

_FALLING = {}


class DerivativeOrderError(ValueError):
    """Requested z-derivative order above the supported cap."""


class GaugeDataError(ValueError):
    """Gauge shift does not have numerically zero Cauchy data."""


def _falling_factorial(m: int, l: int) -> float:
    key = (m, l)
    if key not in _FALLING:
        out = 1.0
        for i in range(l):
            out *= m - i
        _FALLING[key] = out
    return _FALLING[key]


def _coeff_values(coeff, grid: Grid):
    if isinstance(coeff, Field):
        if coeff.grid != grid:
            raise ValueError("coefficient field lives on a different grid")
        return coeff.values
    return float(coeff)


@dataclass(frozen=True)
class PowerTerm:
    """coeff(x) * z^m with m in 0..6."""

    coeff: object
    m: int

    def __post_init__(self):
        if not 0 <= self.m <= MAX_DERIVATIVE_ORDER:
            raise ValueError(f"power {self.m} outside 0..{MAX_DERIVATIVE_ORDER}")

    def deriv(self, order: int, z: np.ndarray, grid: Grid) -> np.ndarray:
        if order > self.m:
            return np.zeros_like(z)
        c = _falling_factorial(self.m, order)
        return _coeff_values(self.coeff, grid) * c * z ** (self.m - order)


@dataclass(frozen=True)
class SineTerm:
    """coeff(x) * sin(omega * z)."""

    coeff: object
    omega: float

    def deriv(self, order: int, z: np.ndarray, grid: Grid) -> np.ndarray:
        cyc = order % 4
        w = self.omega
        arg = w * z
        if cyc == 0:
            base = np.sin(arg)
        elif cyc == 1:
            base = np.cos(arg)
        elif cyc == 2:
            base = -np.sin(arg)
        else:
            base = -np.cos(arg)
        return _coeff_values(self.coeff, grid) * w ** order * base


@dataclass(frozen=True)
class Nonlinearity:
    """Sum of closed-form terms, optionally composed with a gauge shift."""

    terms: tuple
    gauge_shift: Field | None = None
    gauge_laplacian: Field | None = None

    @classmethod
    def from_terms(cls, *terms) -> "Nonlinearity":
        return cls(tuple(terms))

    @classmethod
    def linear(cls, q) -> "Nonlinearity":
        """a(x, u) = q(x) * u."""
        return cls((PowerTerm(q, 1),))

    @classmethod
    def polynomial(cls, coeffs) -> "Nonlinearity":
        """a(x, u) = sum coeffs[m] * u^m over the list index m."""
        return cls(tuple(PowerTerm(c, m) for m, c in enumerate(coeffs) if not _is_zero(c)))

    def eval(self, z: Field, order: int = 0) -> Field:
        """Pointwise z-derivative of the (gauged) nonlinearity at z(x)."""
        if order < 0 or order > MAX_DERIVATIVE_ORDER:
            raise DerivativeOrderError(
                f"derivative order {order} outside 0..{MAX_DERIVATIVE_ORDER}"
            )
        grid = z.grid
        zz = z.values if self.gauge_shift is None else z.values + self.gauge_shift.values
        out = np.zeros_like(zz)
        for term in self.terms:
            out = out + term.deriv(order, zz, grid)
        if order == 0 and self.gauge_laplacian is not None:
            out = out + self.gauge_laplacian.values
        return Field(grid, out)

    def gauge_transform(self, phi: Field) -> "Nonlinearity":
        """Compose with a gauge shift phi having zero discrete Cauchy data."""
        check_zero_cauchy_data(phi)
        lap_phi = laplacian(phi)
        if self.gauge_shift is None:
            return Nonlinearity(self.terms, phi, lap_phi)
        return Nonlinearity(
            self.terms, self.gauge_shift + phi, self.gauge_laplacian + lap_phi
        )

    def to_config(self) -> dict:
        terms = []
        for t in self.terms:
            coeff = t.coeff.values.tolist() if isinstance(t.coeff, Field) else float(t.coeff)
            if isinstance(t, PowerTerm):
                terms.append({"kind": "power", "m": t.m, "coeff": coeff})
            else:
                terms.append({"kind": "sine", "omega": t.omega, "coeff": coeff})
        gauge = "none" if self.gauge_shift is None else self.gauge_shift.values.tolist()
        return {"terms": terms, "gauge": gauge}


def _is_zero(c) -> bool:
    return not isinstance(c, Field) and float(c) == 0.0


def check_zero_cauchy_data(phi: Field, tol: float = GAUGE_CAUCHY_TOL) -> None:
    t = trace(phi).sup()
    nd = normal_derivative(phi).sup()
    if t > tol or nd > tol:
        raise GaugeDataError(
            f"gauge shift has Cauchy data (trace {t:.2e}, normal derivative {nd:.2e}) "
            f"above {tol:.0e}; use a field supported away from the boundary"
        )


def nonlinearity_from_config(obj: dict, grid: Grid, fields: dict | None = None) -> Nonlinearity:
    """Build a Nonlinearity from the JSON schema used by the CLI.

    Coefficients are numbers, named field references, or inline value arrays.
    The gauge entry is "none", a field reference, or an inline array.
    """
    fields = fields or {}

    def resolve(spec):
        if isinstance(spec, str):
            return fields[spec]
        if isinstance(spec, list):
            return Field(grid, np.asarray(spec, dtype=float))
        return float(spec)

    terms = []
    for t in obj["terms"]:
        coeff = resolve(t["coeff"])
        if t["kind"] == "power":
            terms.append(PowerTerm(coeff, int(t["m"])))
        elif t["kind"] == "sine":
            terms.append(SineTerm(coeff, float(t["omega"])))
        else:
            raise ValueError(f"unknown term kind {t['kind']!r}")
    nl = Nonlinearity(tuple(terms))
    gauge = obj.get("gauge", "none")
    if gauge != "none":
        shift = fields[gauge] if isinstance(gauge, str) else Field(grid, np.asarray(gauge, dtype=float))
        nl = nl.gauge_transform(shift)
    return nl
