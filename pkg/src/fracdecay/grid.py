"""Uniform box grids, complex grid functions and discrete norms.

Every grid carries interior nodes only.  Values on the boundary and in the
exterior of the box are identically zero, which is the common convention
for both the local (Dirichlet ghost nodes) and the nonlocal (exterior
condition) operators built on top of this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid on a box ``prod_k (a_k, b_k)`` in one or two dimensions.

    Interior nodes sit at ``a + i*h`` for ``i = 1..n`` with ``h = (b-a)/(n+1)``.
    """

    extent: tuple[tuple[float, float], ...]
    n: tuple[int, ...]

    def __post_init__(self):
        extent = tuple((float(a), float(b)) for a, b in self.extent)
        n = tuple(int(k) for k in self.n)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "n", n)
        if len(extent) not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got dim={len(extent)}")
        if len(n) != len(extent):
            raise ValueError("extent and n must have the same length")
        for (a, b), k in zip(extent, n):
            if k < 3:
                raise ValueError(f"need at least 3 interior nodes per axis, got {k}")
            if not b > a:
                raise ValueError(f"empty interval ({a}, {b})")

    @classmethod
    def interval(cls, n: int, a: float = 0.0, b: float = 1.0) -> "Grid":
        return cls(((a, b),), (n,))

    @classmethod
    def square(cls, n: int, a: float = 0.0, b: float = 1.0) -> "Grid":
        return cls(((a, b), (a, b)), (n, n))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (k + 1) for (a, b), k in zip(self.extent, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.extent]))

    def axes(self) -> list[np.ndarray]:
        """Interior node coordinates along each axis."""
        return [a + h * np.arange(1, k + 1) for (a, _), h, k in zip(self.extent, self.h, self.n)]

    def padded_axes(self) -> list[np.ndarray]:
        """Node coordinates including the two boundary nodes on each axis."""
        return [a + h * np.arange(0, k + 2) for (a, _), h, k in zip(self.extent, self.h, self.n)]

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def points(self) -> np.ndarray:
        """Interior nodes as an ``(size, dim)`` array in C order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=-1)

    def padded_points(self) -> np.ndarray:
        """All nodes of the padded grid (interior plus boundary ring), C order."""
        m = np.meshgrid(*self.padded_axes(), indexing="ij")
        return np.stack([c.ravel() for c in m], axis=-1)

    def refine(self, factor: int = 2) -> "Grid":
        """Grid whose nodes contain the current ones (``n+1`` scaled by ``factor``)."""
        return Grid(self.extent, tuple((k + 1) * factor - 1 for k in self.n))

    def first_eigenvalue(self) -> float:
        """Smallest eigenvalue of the discrete Dirichlet Laplacian on this grid."""
        total = 0.0
        for (a, b), h in zip(self.extent, self.h):
            total += 2.0 / h**2 * (1.0 - np.cos(np.pi * h / (b - a)))
        return total


@dataclass(frozen=True, eq=False)
class Field:
    """Complex grid function over the interior nodes of ``grid``."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.size != self.grid.size:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.size} nodes")
        v = v.reshape(self.grid.shape).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, fn(*grid.mesh()))

    def at(self, index: Sequence[int]) -> complex:
        """Value at an integer node index; indices outside ``1..n`` give 0.

        Indices follow the node numbering ``x = a + i*h``, so the boundary
        nodes are ``0`` and ``n+1``.
        """
        idx = tuple(int(i) for i in np.atleast_1d(index))
        if len(idx) != self.grid.dim:
            raise ValueError("index dimension does not match grid")
        if any(i < 1 or i > k for i, k in zip(idx, self.grid.n)):
            return 0j
        return complex(self.values[tuple(i - 1 for i in idx)])

    def padded(self) -> np.ndarray:
        """Values with one ring of zero ghost nodes on every side."""
        return np.pad(self.values, 1)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def is_real(self, rtol: float = 1e-12) -> bool:
        scale = max(np.max(np.abs(self.values)), np.finfo(float).tiny)
        return bool(np.max(np.abs(self.values.imag)) <= rtol * scale)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)


def _check_same_grid(f: Field, g: Field):
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")


def _validate_s(s: float):
    if not s >= 1:
        raise ValueError(f"Lebesgue exponent must satisfy s >= 1, got {s}")


def lp_norm(field: Field | np.ndarray, s: float, grid: Grid | None = None) -> float:
    """Discrete ``L^s`` norm with midpoint weight ``h^dim`` per node."""
    _validate_s(s)
    values, grid = _unpack(field, grid)
    a = np.abs(values)
    if not np.all(np.isfinite(a)):
        raise ValueError("field values must be finite")
    peak = a.max(initial=0.0)
    if peak == 0.0:
        return 0.0
    # scale out the peak so large s cannot overflow
    return float(peak * (np.sum((a / peak) ** s) * grid.cell_volume) ** (1.0 / s))


def inner(f: Field, g: Field) -> complex:
    """Discrete ``int conj(f) g``."""
    _check_same_grid(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.cell_volume)


def forward_differences(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Forward differences ``(u_{i+1} - u_i)/h`` along each axis, zero ghosts included.

    Along axis ``k`` the result has ``n_k + 1`` entries (one per edge, the
    two boundary edges included) and the interior extent on other axes.
    """
    out = []
    for axis, h in enumerate(grid.h):
        pad = [(0, 0)] * grid.dim
        pad[axis] = (1, 1)
        out.append(np.diff(np.pad(values, pad), axis=axis) / h)
    return out


def gradient_sq_norm(field: Field | np.ndarray, grid: Grid | None = None) -> float:
    """``||grad u||_{L^2}^2`` from forward differences over every edge."""
    values, grid = _unpack(field, grid)
    total = sum(np.sum(np.abs(d) ** 2) for d in forward_differences(values, grid))
    return float(total * grid.cell_volume)


def random_field(grid: Grid, seed: int, smoothness: int = 0, *, complex_valued: bool = False) -> Field:
    """Uniform noise in [-1, 1] followed by ``smoothness`` nearest-neighbour averaging passes.

    The averaging stencil treats exterior nodes as zero, so the smoothed
    field also tapers towards the boundary.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, grid.shape)
    if complex_valued:
        u = u + 1j * rng.uniform(-1.0, 1.0, grid.shape)
    for _ in range(int(smoothness)):
        u = _average(u, grid.dim)
    return Field(grid, u)


def _average(u: np.ndarray, dim: int) -> np.ndarray:
    p = np.pad(u, 1)
    if dim == 1:
        return (p[:-2] + p[1:-1] + p[2:]) / 3.0
    return (p[1:-1, 1:-1] + p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 5.0


def eigenfunction(grid: Grid, modes: Sequence[int] | None = None) -> Field:
    """Product of sines ``prod sin(k pi (x-a)/(b-a))``; an exact discrete Dirichlet eigenfunction."""
    modes = modes or (1,) * grid.dim
    vals = np.ones(grid.shape)
    for c, (a, b), k in zip(grid.mesh(), grid.extent, modes):
        vals = vals * np.sin(k * np.pi * (c - a) / (b - a))
    return Field(grid, vals)


def bump(grid: Grid, center: Sequence[float] | None = None, radius: float | None = None,
         amplitude: float = 1.0) -> Field:
    """Smooth compactly supported bump ``exp(1 - 1/(1-r^2))`` (peak ``amplitude``)."""
    if center is None:
        center = [(a + b) / 2 for a, b in grid.extent]
    if radius is None:
        radius = 0.35 * min(b - a for a, b in grid.extent)
    r2 = sum(((c - x0) / radius) ** 2 for c, x0 in zip(grid.mesh(), center))
    vals = np.zeros(grid.shape)
    inside = r2 < 1.0
    vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return Field(grid, vals)


def smoothed_indicator(grid: Grid, lo: float = 0.3, hi: float = 0.7, width: float = 0.1) -> Field:
    """Indicator of ``[lo, hi]^dim`` with C-infinity edges of the given width.

    Exactly zero outside ``[lo - width, hi + width]^dim``.
    """
    vals = np.ones(grid.shape)
    for c in grid.mesh():
        vals = vals * _smoothstep((c - lo + width) / width) * _smoothstep((hi + width - c) / width)
    return Field(grid, vals)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    def psi(y):
        out = np.zeros_like(y)
        pos = y > 0
        out[pos] = np.exp(-1.0 / y[pos])
        return out

    x = np.asarray(x, dtype=float)
    return psi(x) / (psi(x) + psi(1.0 - x))


def _unpack(field, grid):
    if isinstance(field, Field):
        return field.values, field.grid
    if grid is None:
        raise ValueError("a grid is required when passing a raw array")
    return np.asarray(field).reshape(grid.shape), grid
