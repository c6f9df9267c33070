"""Unit-square discretization: grids, scalar fields, traces, discrete norms.

The domain is the closed unit square sampled on an n-by-n tensor grid with
spacing h = 1/(n-1); node (i, j) sits at (i*h, j*h).  Boundary nodes are
ordered counterclockwise starting at the origin, so boundary data are plain
periodic arrays of length 4(n-1).  All operations here are pure functions of
immutable inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Two fields living on different grids were combined."""


class Grid:
    """Uniform n-by-n tensor grid on the closed unit square.

    Attributes:
        n: nodes per side (n >= 9).
        h: spacing, exactly 1/(n-1).
    """

    __slots__ = ("n", "h", "_boundary_ij")

    def __init__(self, n: int):
        n = int(n)
        if n < 9:
            raise ValueError(f"need n >= 9 nodes per side, got {n}")
        self.n = n
        self.h = 1.0 / (n - 1)
        self._boundary_ij: np.ndarray | None = None

    @property
    def boundary_order(self) -> np.ndarray:
        """(4(n-1), 2) int array of (i, j) node indices, counterclockwise from (0,0)."""
        if self._boundary_ij is None:
            n = self.n
            bottom = [(i, 0) for i in range(n - 1)]
            right = [(n - 1, j) for j in range(n - 1)]
            top = [(i, n - 1) for i in range(n - 1, 0, -1)]
            left = [(0, j) for j in range(n - 1, 0, -1)]
            self._boundary_ij = np.array(bottom + right + top + left, dtype=np.intp)
        return self._boundary_ij

    @property
    def boundary_count(self) -> int:
        return 4 * (self.n - 1)

    @property
    def interior_count(self) -> int:
        return (self.n - 2) ** 2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays X, Y with X[i, j] = i*h, Y[i, j] = j*h."""
        t = np.linspace(0.0, 1.0, self.n)
        return np.meshgrid(t, t, indexing="ij")

    def boundary_coords(self) -> tuple[np.ndarray, np.ndarray]:
        ij = self.boundary_order
        return ij[:, 0] * self.h, ij[:, 1] * self.h

    def boundary_arclength(self) -> np.ndarray:
        """Arclength parameter of the boundary nodes, s in [0, 4)."""
        return self.h * np.arange(self.boundary_count)

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and other.n == self.n

    def __hash__(self) -> int:
        return hash(("Grid", self.n))

    def __repr__(self) -> str:
        return f"Grid(n={self.n})"


def _check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True)
class Field:
    """Scalar values on every node of the grid, boundary included."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"expected shape {(self.grid.n,) * 2}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros((grid.n, grid.n)))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full((grid.n, grid.n), float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        x, y = grid.coords()
        return cls(grid, np.broadcast_to(fn(x, y), (grid.n, grid.n)).astype(float))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def interior(self) -> np.ndarray:
        """Interior values flattened row-major over i = 1..n-2, j = 1..n-2."""
        return self.values[1:-1, 1:-1].ravel().copy()

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


@dataclass(frozen=True)
class BoundaryField:
    """Scalar values on the boundary nodes, stored in boundary order."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.boundary_count,):
            raise ValueError(
                f"expected {self.grid.boundary_count} boundary values, got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("boundary field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: Grid) -> "BoundaryField":
        return cls(grid, np.zeros(grid.boundary_count))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "BoundaryField":
        return cls(grid, np.full(grid.boundary_count, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "BoundaryField":
        x, y = grid.boundary_coords()
        return cls(grid, np.broadcast_to(fn(x, y), (grid.boundary_count,)).astype(float))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other: "BoundaryField") -> "BoundaryField":
        _check_same_grid(self, other)
        return BoundaryField(self.grid, self.values + other.values)

    def __sub__(self, other: "BoundaryField") -> "BoundaryField":
        _check_same_grid(self, other)
        return BoundaryField(self.grid, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, BoundaryField):
            _check_same_grid(self, other)
            return BoundaryField(self.grid, self.values * other.values)
        return BoundaryField(self.grid, self.values * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "BoundaryField":
        return BoundaryField(self.grid, -self.values)


def bump_field(
    grid: Grid,
    amplitude: float = 1.0,
    center: tuple[float, float] = (0.5, 0.5),
    radius: float = 0.3,
) -> Field:
    """Smooth bump exactly zero outside the disk of the given radius.

    Uses the classical mollifier profile exp(1 - 1/(1 - r^2)).  Because the
    values vanish identically outside the support, a bump whose support stays
    at least two cells away from the boundary has exactly zero discrete
    Cauchy data, as required of gauge shifts.
    """
    cx, cy = center
    x, y = grid.coords()
    r2 = ((x - cx) ** 2 + (y - cy) ** 2) / radius ** 2
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(r2 < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    return Field(grid, amplitude * vals)


# ---------------------------------------------------------------------------
# differential operators


def laplacian(u: Field) -> Field:
    """Five-point discrete Laplacian; boundary nodes of the output are 0."""
    h2 = u.grid.h ** 2
    v = u.values
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (
        v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4.0 * v[1:-1, 1:-1]
    ) / h2
    return Field(u.grid, out)


def trace(u: Field) -> BoundaryField:
    """Restriction of a field to the boundary, in boundary order."""
    ij = u.grid.boundary_order
    return BoundaryField(u.grid, u.values[ij[:, 0], ij[:, 1]].copy())


def embed_boundary(f: BoundaryField) -> Field:
    """Field equal to f on the boundary and 0 on the interior."""
    out = np.zeros((f.grid.n, f.grid.n))
    ij = f.grid.boundary_order
    out[ij[:, 0], ij[:, 1]] = f.values
    return Field(f.grid, out)


def with_boundary(u: Field, f: BoundaryField) -> Field:
    """Copy of u with its boundary ring replaced by f."""
    _check_same_grid(u, f)
    out = u.values.copy()
    ij = u.grid.boundary_order
    out[ij[:, 0], ij[:, 1]] = f.values
    return Field(u.grid, out)


def normal_derivative(u: Field) -> BoundaryField:
    """Outward normal derivative by the second-order one-sided 3-point stencil.

    Corner nodes take the average of the two adjacent edge stencils.
    """
    n = u.grid.n
    h2 = 2.0 * u.grid.h
    v = u.values
    d_bottom = (3.0 * v[:, 0] - 4.0 * v[:, 1] + v[:, 2]) / h2
    d_top = (3.0 * v[:, n - 1] - 4.0 * v[:, n - 2] + v[:, n - 3]) / h2
    d_left = (3.0 * v[0, :] - 4.0 * v[1, :] + v[2, :]) / h2
    d_right = (3.0 * v[n - 1, :] - 4.0 * v[n - 2, :] + v[n - 3, :]) / h2

    m = n - 1
    out = np.empty(4 * m)
    out[0:m] = d_bottom[0:m]
    out[m:2 * m] = d_right[0:m]
    out[2 * m:3 * m] = d_top[m:0:-1]
    out[3 * m:4 * m] = d_left[m:0:-1]
    # corners: average of the two incident edge stencils
    out[0] = 0.5 * (d_bottom[0] + d_left[0])
    out[m] = 0.5 * (d_bottom[m] + d_right[0])
    out[2 * m] = 0.5 * (d_right[m] + d_top[m])
    out[3 * m] = 0.5 * (d_top[0] + d_left[m])
    return BoundaryField(u.grid, out)


# ---------------------------------------------------------------------------
# quadratures and norms


def _trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return np.outer(w, w)


def inner_domain(f: Field, g: Field) -> float:
    """Composite trapezoidal approximation of the domain integral of f*g."""
    _check_same_grid(f, g)
    return float(np.sum(_trapezoid_weights(f.grid) * f.values * g.values))


def integrate_domain(f: Field) -> float:
    return float(np.sum(_trapezoid_weights(f.grid) * f.values))


def inner_boundary(f: BoundaryField, g: BoundaryField) -> float:
    """Trapezoidal boundary integral of f*g along the closed boundary curve.

    All boundary nodes are equally spaced by h on a closed curve, so the
    trapezoidal rule reduces to a uniform weight h per node.
    """
    _check_same_grid(f, g)
    return float(f.grid.h * np.sum(f.values * g.values))


def surrogate_norm(u: Field) -> float:
    """Discrete stand-in for a second-order Hoelder-free norm.

    Maximum of sup|u|, sup of forward difference quotients, and sup of
    second central difference quotients, along both axes.
    """
    h = u.grid.h
    v = u.values
    d1 = max(
        float(np.max(np.abs(np.diff(v, axis=0)))),
        float(np.max(np.abs(np.diff(v, axis=1)))),
    ) / h
    d2 = max(
        float(np.max(np.abs(v[2:, :] - 2.0 * v[1:-1, :] + v[:-2, :]))),
        float(np.max(np.abs(v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]))),
    ) / h ** 2
    return max(float(np.max(np.abs(v))), d1, d2)


def boundary_surrogate_norm(f: BoundaryField) -> float:
    """Same construction as surrogate_norm, along the periodic boundary order."""
    h = f.grid.h
    v = f.values
    d1 = float(np.max(np.abs(np.diff(v, append=v[0])))) / h
    roll_p = np.roll(v, -1)
    roll_m = np.roll(v, 1)
    d2 = float(np.max(np.abs(roll_p - 2.0 * v + roll_m))) / h ** 2
    return max(float(np.max(np.abs(v))), d1, d2)


def h1_norm(u: Field) -> float:
    """Discrete H1 norm: L2 norm plus L2 norm of the first difference quotients."""
    w = _trapezoid_weights(u.grid)
    l2 = float(np.sqrt(np.sum(w * u.values ** 2)))
    h = u.grid.h
    dx = np.diff(u.values, axis=0) / h
    dy = np.diff(u.values, axis=1) / h
    grad = float(np.sqrt(h * h * (np.sum(dx ** 2) + np.sum(dy ** 2))))
    return l2 + grad


# ---------------------------------------------------------------------------
# serialization: CSV rows (i, j, value) and JSON container {n, values}


def field_to_csv(u: Field, path) -> None:
    ij = np.indices((u.grid.n, u.grid.n))
    with open(path, "w") as fh:
        for i, j, val in zip(ij[0].ravel(), ij[1].ravel(), u.values.ravel()):
            fh.write(f"{i},{j},{float(val)!r}\n")


def field_from_csv(path) -> Field:
    rows = _read_csv_rows(path)
    n = int(round(np.sqrt(len(rows))))
    if n * n != len(rows):
        raise ValueError(f"{path}: {len(rows)} rows is not a square node count")
    vals = np.empty((n, n))
    for i, j, v in rows:
        vals[i, j] = v
    return Field(Grid(n), vals)


def boundary_to_csv(f: BoundaryField, path) -> None:
    ij = f.grid.boundary_order
    with open(path, "w") as fh:
        for (i, j), val in zip(ij, f.values):
            fh.write(f"{i},{j},{float(val)!r}\n")


def boundary_from_csv(path) -> BoundaryField:
    rows = _read_csv_rows(path)
    n = len(rows) // 4 + 1
    if 4 * (n - 1) != len(rows):
        raise ValueError(f"{path}: {len(rows)} rows is not a boundary node count")
    grid = Grid(n)
    vals = np.empty(len(rows))
    lookup = {(i, j): k for k, (i, j) in enumerate(map(tuple, grid.boundary_order))}
    for i, j, v in rows:
        vals[lookup[(i, j)]] = v
    return BoundaryField(grid, vals)


def _read_csv_rows(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j, v = line.split(",")
            rows.append((int(i), int(j), float(v)))
    return rows


def field_to_json(u: Field) -> str:
    return json.dumps({"n": u.grid.n, "values": [v.hex() for v in u.values.ravel()]})


def field_from_json(text: str) -> Field:
    obj = json.loads(text)
    n = int(obj["n"])
    vals = np.array([float.fromhex(v) for v in obj["values"]]).reshape(n, n)
    return Field(Grid(n), vals)


def boundary_to_json(f: BoundaryField) -> str:
    return json.dumps({"n": f.grid.n, "values": [v.hex() for v in f.values]})


def boundary_from_json(text: str) -> BoundaryField:
    obj = json.loads(text)
    vals = np.array([float.fromhex(v) for v in obj["values"]])
    return BoundaryField(Grid(int(obj["n"])), vals)
