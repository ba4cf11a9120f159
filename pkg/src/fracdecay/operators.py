"""Diffusion operators on exterior-zero grid functions.

Each operator is an immutable descriptor.  ``apply(op, field)`` returns the
operator sampled at the interior nodes.  Nonlocal operators are discretized
on the symmetric form ``sum_j w_ij (u_i - u_j)`` with midpoint weights
``w_ij = h^n |x_i - x_j|^{-n-beta}`` (self node excluded) plus the exact
integral of the kernel over the exterior of the box, where ``u = 0``.

Kernel normalization: fractional operators use the bare kernel
``|x-y|^{-n-2 sigma}`` unless ``normalization="standard"`` is requested, in
which case the usual constant ``C(n, sigma)`` of the integral fractional
Laplacian multiplies it.  The Riesz potential of the porous medium
operator always uses ``c(n, sigma) = Gamma(n/2 - sigma) / (4^sigma pi^{n/2} Gamma(sigma))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import integrate, special

from .grid import Field, Grid, forward_differences, gradient_sq_norm

# Gauss-Legendre nodes for the angular integrals over box sides (2D tails).
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


# --------------------------------------------------------------------------
# vector potentials


@dataclass(frozen=True)
class VectorPotential:
    """Magnetic potential ``A(x) = a0 + M x`` (``M`` optional)."""

    a0: tuple[float, ...]
    gradient: tuple[tuple[float, ...], ...] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape ``(..., dim)``."""
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.asarray(self.a0, dtype=float), x.shape).copy()
        if self.gradient is not None:
            out = out + x @ np.asarray(self.gradient, dtype=float).T
        return out

    @property
    def dim(self) -> int:
        return len(self.a0)

    def is_zero(self) -> bool:
        grad_zero = self.gradient is None or not np.any(np.asarray(self.gradient))
        return not np.any(np.asarray(self.a0)) and grad_zero


def as_potential(A, dim: int | None = None) -> VectorPotential:
    if isinstance(A, VectorPotential):
        return A
    a0 = tuple(float(a) for a in np.atleast_1d(A))
    if dim is not None and len(a0) == 1 and dim > 1:
        a0 = a0 * dim
    return VectorPotential(a0)


# --------------------------------------------------------------------------
# operator descriptors


def _check_sigma(sigma):
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")


@dataclass(frozen=True)
class Laplacian:
    d: float = 1.0

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("diffusivity d must be positive")


@dataclass(frozen=True)
class FractionalLaplacian:
    sigma: float
    d: float = 1.0
    normalization: str = "bare"

    def __post_init__(self):
        _check_sigma(self.sigma)
        if not self.d > 0:
            raise ValueError("diffusivity d must be positive")
        if self.normalization not in ("bare", "standard"):
            raise ValueError("normalization must be 'bare' or 'standard'")


@dataclass(frozen=True)
class PLaplacianPower:
    """``-div(|grad u^m|^{p-2} grad u^m)`` with ``u^m`` read as ``|u|^{m-1} u``."""

    p: float
    m: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.m > 0:
            raise ValueError("m must be positive")


@dataclass(frozen=True)
class FractionalPLaplacian:
    sigma: float
    p: float

    def __post_init__(self):
        _check_sigma(self.sigma)
        if not self.p > 1:
            raise ValueError("p must exceed 1")


@dataclass(frozen=True)
class SumFractionalPLaplacians:
    terms: tuple[tuple[float, float, float], ...]  # (beta, sigma, p)

    def __post_init__(self):
        terms = tuple(tuple(float(x) for x in t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("need at least one term")
        for beta, sigma, p in terms:
            if not beta > 0:
                raise ValueError("coefficients beta_j must be positive")
            FractionalPLaplacian(sigma, p)


@dataclass(frozen=True)
class AnisotropicFractional:
    axes: tuple[tuple[float, float], ...]  # (beta_j, sigma_j) per coordinate

    def __post_init__(self):
        axes = tuple(tuple(float(x) for x in a) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        for beta, sigma in axes:
            if not beta > 0:
                raise ValueError("coefficients beta_j must be positive")
            _check_sigma(sigma)


@dataclass(frozen=True)
class PorousMediumI:
    """``(-Delta)^sigma (|u|^{m-1} u)``."""

    sigma: float
    m: float = 1.0

    def __post_init__(self):
        _check_sigma(self.sigma)
        if not self.m > 0:
            raise ValueError("m must be positive")


@dataclass(frozen=True)
class PorousMediumII:
    """``-div(u grad(K * u))`` with the Riesz kernel ``K = c(n,sigma)|x|^{-(n-2 sigma)}``."""

    sigma: float

    def __post_init__(self):
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class KirchhoffClassical:
    m0: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.m0 < 0 or self.b < 0 or (self.m0 == 0 and self.b == 0):
            raise ValueError("need m0 >= 0, b >= 0, not both zero")

    @property
    def degenerate(self) -> bool:
        return self.m0 == 0


@dataclass(frozen=True)
class KirchhoffFractional:
    sigma: float
    M0: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        _check_sigma(self.sigma)
        if self.M0 < 0 or self.b < 0 or (self.M0 == 0 and self.b == 0):
            raise ValueError("need M0 >= 0, b >= 0, not both zero")

    @property
    def degenerate(self) -> bool:
        return self.M0 == 0


@dataclass(frozen=True)
class Magnetic:
    """``-(grad - iA)^2 u``."""

    A: VectorPotential | float | tuple = 0.0

    def __post_init__(self):
        object.__setattr__(self, "A", as_potential(self.A))


@dataclass(frozen=True)
class FractionalMagnetic:
    sigma: float
    A: VectorPotential | float | tuple = 0.0

    def __post_init__(self):
        _check_sigma(self.sigma)
        object.__setattr__(self, "A", as_potential(self.A))


@dataclass(frozen=True)
class MeanCurvature:
    """``-div(grad u / sqrt(1 + |grad u|^2))``."""


@dataclass(frozen=True)
class FractionalMeanCurvature:
    sigma: float

    def __post_init__(self):
        _check_sigma(self.sigma)


@dataclass(frozen=True, eq=False)
class MatrixOperator:
    """Arbitrary linear operator given by a dense matrix on the interior nodes."""

    matrix: np.ndarray


DiffusionOperator = Union[
    Laplacian, FractionalLaplacian, PLaplacianPower, FractionalPLaplacian,
    SumFractionalPLaplacians, AnisotropicFractional, PorousMediumI, PorousMediumII,
    KirchhoffClassical, KirchhoffFractional, Magnetic, FractionalMagnetic,
    MeanCurvature, FractionalMeanCurvature, MatrixOperator,
]

MENU = (
    Laplacian, FractionalLaplacian, PLaplacianPower, FractionalPLaplacian,
    SumFractionalPLaplacians, AnisotropicFractional, PorousMediumI, PorousMediumII,
    KirchhoffClassical, KirchhoffFractional, Magnetic, FractionalMagnetic,
    MeanCurvature, FractionalMeanCurvature,
)

LINEAR = (Laplacian, FractionalLaplacian, AnisotropicFractional, Magnetic,
          FractionalMagnetic, MatrixOperator)


def is_linear(op) -> bool:
    if isinstance(op, PorousMediumI):
        return op.m == 1.0
    if isinstance(op, PLaplacianPower):
        return op.p == 2.0 and op.m == 1.0
    if isinstance(op, FractionalPLaplacian):
        return op.p == 2.0
    return isinstance(op, LINEAR)


def is_kirchhoff(op) -> bool:
    return isinstance(op, (KirchhoffClassical, KirchhoffFractional))


def differential_order(op) -> float:
    """Order of the operator, used by the explicit stability bound."""
    if isinstance(op, (Laplacian, PLaplacianPower, KirchhoffClassical, Magnetic, MeanCurvature)):
        return 2.0
    if isinstance(op, (FractionalLaplacian, PorousMediumI, KirchhoffFractional, FractionalMagnetic)):
        return 2.0 * op.sigma
    if isinstance(op, FractionalPLaplacian):
        return op.sigma * op.p
    if isinstance(op, SumFractionalPLaplacians):
        return max(s * p for _, s, p in op.terms)
    if isinstance(op, AnisotropicFractional):
        return max(2.0 * s for _, s in op.axes)
    if isinstance(op, PorousMediumII):
        return 2.0 - 2.0 * op.sigma
    if isinstance(op, FractionalMeanCurvature):
        return 1.0 + op.sigma
    if isinstance(op, MatrixOperator):
        return 0.0
    raise TypeError(f"unknown operator {op!r}")


def check_compatible(op, grid: Grid):
    if isinstance(op, PorousMediumII) and not grid.dim > 2 * op.sigma:
        raise ValueError(f"porous medium kernel needs dim > 2 sigma (dim={grid.dim}, sigma={op.sigma})")
    if isinstance(op, AnisotropicFractional) and len(op.axes) != grid.dim:
        raise ValueError("anisotropic operator needs one (beta, sigma) pair per axis")
    if isinstance(op, (Magnetic, FractionalMagnetic)):
        A = op.A
        if A.dim != grid.dim and not (A.dim == 1 and A.gradient is None):
            raise ValueError("vector potential dimension does not match grid")
    if isinstance(op, MatrixOperator) and op.matrix.shape != (grid.size, grid.size):
        raise ValueError("matrix operator has the wrong shape for this grid")


# --------------------------------------------------------------------------
# kernel geometry


def fractional_constant(n: int, sigma: float) -> float:
    """``C(n, sigma)`` of the integral fractional Laplacian."""
    return float(4**sigma * special.gamma(n / 2 + sigma) / (np.pi ** (n / 2) * abs(special.gamma(-sigma))))


def riesz_constant(n: int, sigma: float) -> float:
    return float(special.gamma(n / 2 - sigma) / (4**sigma * np.pi ** (n / 2) * special.gamma(sigma)))


@lru_cache(maxsize=64)
def _side_geometry(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular quadrature of the box boundary as seen from each interior node (2D).

    Returns ``(d, cosphi, weights)`` of shape ``(N, 4, q)``: normal distance
    to each side, cosine of the angle from the normal at each quadrature
    node, and angular weights.  A ray at angle ``phi`` from the normal of a
    side leaves the box at distance ``d / cos(phi)``.
    """
    pts = grid.points()
    (a1, b1), (a2, b2) = grid.extent
    x, y = pts[:, 0], pts[:, 1]
    # for each side: normal distance and the two tangential offsets to its corners
    sides = [
        (b1 - x, y - a2, b2 - y),  # right
        (x - a1, y - a2, b2 - y),  # left
        (b2 - y, x - a1, b1 - x),  # top
        (y - a2, x - a1, b1 - x),  # bottom
    ]
    d_all, c_all, w_all = [], [], []
    for d, lo, hi in sides:
        phi1 = -np.arctan(lo / d)
        phi2 = np.arctan(hi / d)
        half = 0.5 * (phi2 - phi1)
        phi = 0.5 * (phi2 + phi1)[:, None] + half[:, None] * _GL_NODES[None, :]
        d_all.append(np.broadcast_to(d[:, None], phi.shape))
        c_all.append(np.cos(phi))
        w_all.append(half[:, None] * _GL_WEIGHTS[None, :])
    return (np.stack(d_all, axis=1), np.stack(c_all, axis=1), np.stack(w_all, axis=1))


@lru_cache(maxsize=64)
def exterior_tail(grid: Grid, beta: float) -> np.ndarray:
    """``int_{R^n minus box} |x_i - y|^{-n-beta} dy`` at every interior node (flat)."""
    if grid.dim == 1:
        (a, b), = grid.extent
        x = grid.axes()[0]
        return ((x - a) ** -beta + (b - x) ** -beta) / beta
    d, c, w = _side_geometry(grid)
    # rho = d / cos(phi), integral of rho^{-beta} over the angle
    return np.sum(w * (c / d) ** beta, axis=(1, 2)) / beta


@lru_cache(maxsize=64)
def _distances(grid: Grid) -> np.ndarray:
    pts = grid.points()
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


@lru_cache(maxsize=64)
def pair_weights(grid: Grid, beta: float) -> np.ndarray:
    """Dense ``w_ij = h^n |x_i - x_j|^{-n-beta}`` with zero diagonal."""
    r = _distances(grid)
    with np.errstate(divide="ignore"):
        w = grid.cell_volume * r ** (-(grid.dim + beta))
    np.fill_diagonal(w, 0.0)
    w.flags.writeable = False
    return w


@lru_cache(maxsize=64)
def fractional_matrix(grid: Grid, sigma: float) -> np.ndarray:
    """Bare-kernel matrix of ``(-Delta)^sigma`` with exterior condition (symmetric)."""
    w = pair_weights(grid, 2 * sigma)
    a = -w.copy()
    a[np.diag_indices_from(a)] = w.sum(axis=1) + exterior_tail(grid, 2 * sigma)
    a.flags.writeable = False
    return a


@lru_cache(maxsize=64)
def laplacian_matrix(grid: Grid) -> np.ndarray:
    """Dense ``-Delta_h`` with zero Dirichlet ghosts."""
    mats = []
    for k, h in zip(grid.n, grid.h):
        t = (2 * np.eye(k) - np.eye(k, k=1) - np.eye(k, k=-1)) / h**2
        mats.append(t)
    if grid.dim == 1:
        out = mats[0]
    else:
        out = np.kron(mats[0], np.eye(grid.n[1])) + np.kron(np.eye(grid.n[0]), mats[1])
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def magnetic_matrix(grid: Grid, A: VectorPotential) -> np.ndarray:
    """Gauge-covariant ``-(grad - iA)^2`` with link phases ``exp(-i A(mid) . (x_j - x_i))``."""
    A = as_potential(A.a0, grid.dim) if (A.dim == 1 and grid.dim > 1 and A.gradient is None) else A
    pts = grid.points()
    N = grid.size
    out = np.zeros((N, N), dtype=complex)
    idx = np.arange(N).reshape(grid.shape)
    for axis, h in enumerate(grid.h):
        out[np.arange(N), np.arange(N)] += 2.0 / h**2
        sl_i = [slice(None)] * grid.dim
        sl_j = [slice(None)] * grid.dim
        sl_i[axis] = slice(0, -1)
        sl_j[axis] = slice(1, None)
        i = idx[tuple(sl_i)].ravel()
        j = idx[tuple(sl_j)].ravel()
        mid = 0.5 * (pts[i] + pts[j])
        theta = np.sum(A(mid) * (pts[j] - pts[i]), axis=-1)
        link = np.exp(-1j * theta)
        out[i, j] -= link / h**2
        out[j, i] -= np.conj(link) / h**2
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def fractional_magnetic_matrix(grid: Grid, sigma: float, A: VectorPotential) -> np.ndarray:
    A = as_potential(A.a0, grid.dim) if (A.dim == 1 and grid.dim > 1 and A.gradient is None) else A
    pts = grid.points()
    w = pair_weights(grid, 2 * sigma)
    mid = 0.5 * (pts[:, None, :] + pts[None, :, :])
    theta = np.sum((pts[:, None, :] - pts[None, :, :]) * A(mid), axis=-1)
    out = -w * np.exp(1j * theta)
    out[np.diag_indices_from(out)] = w.sum(axis=1) + exterior_tail(grid, 2 * sigma)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def anisotropic_matrix(grid: Grid, axes: tuple) -> np.ndarray:
    mats = []
    for (a, b), k, (beta, sigma) in zip(grid.extent, grid.n, axes):
        mats.append(beta * fractional_matrix(Grid(((a, b),), (k,)), sigma))
    if grid.dim == 1:
        out = mats[0].copy()
    else:
        out = np.kron(mats[0], np.eye(grid.n[1])) + np.kron(np.eye(grid.n[0]), mats[1])
    out.flags.writeable = False
    return out


def _self_cell_integral(grid: Grid, exponent: float) -> float:
    """``int_cell |x|^{-exponent} dx`` over the cell centred at the origin."""
    if grid.dim == 1:
        h = grid.h[0]
        return 2.0 * (h / 2) ** (1 - exponent) / (1 - exponent)
    a, b = grid.h[0] / 2, grid.h[1] / 2
    q = 2.0 - exponent  # radial power after the Jacobian: int_0^R r^{1-exponent} dr = R^q / q
    tc = np.arctan2(b, a)
    f1 = integrate.quad(lambda t: (a / np.cos(t)) ** q, 0.0, tc)[0]
    f2 = integrate.quad(lambda t: (b / np.sin(t)) ** q, tc, np.pi / 2)[0]
    return 4.0 * (f1 + f2) / q


@lru_cache(maxsize=64)
def riesz_matrix(grid: Grid, sigma: float, padded: bool = False) -> np.ndarray:
    """Discrete Riesz potential ``(K * u)`` at interior (or padded) nodes from interior values."""
    if not grid.dim > 2 * sigma:
        raise ValueError(f"Riesz kernel needs dim > 2 sigma (dim={grid.dim}, sigma={sigma})")
    expo = grid.dim - 2 * sigma
    c = riesz_constant(grid.dim, sigma)
    src = grid.points()
    tgt = grid.padded_points() if padded else src
    r = np.sqrt(np.sum((tgt[:, None, :] - src[None, :, :]) ** 2, axis=-1))
    same = r < 1e-12 * min(grid.h)
    with np.errstate(divide="ignore"):
        k = c * grid.cell_volume * r ** (-expo)
    k[same] = c * _self_cell_integral(grid, expo)
    k.flags.writeable = False
    return k


# --------------------------------------------------------------------------
# mean-curvature profile


def mean_curvature_profile(r, n: int, sigma: float):
    """``F(r) = int_0^r (1 + tau^2)^{-(n+1+sigma)/2} dtau`` in closed form."""
    k = (n + 1 + sigma) / 2
    r = np.asarray(r, dtype=float)
    return r * special.hyp2f1(0.5, k, 1.5, -(r**2))


class _ExteriorCurvatureTable:
    """``G(z) = int_0^z F(q) q^{sigma-1} dq`` tabulated on a log grid."""

    def __init__(self, n: int, sigma: float, zmin: float = 1e-6, zmax: float = 1e6, num: int = 1201):
        self.sigma = sigma
        k = (n + 1 + sigma) / 2
        self.f_inf = float(np.sqrt(np.pi) * special.gamma(k - 0.5) / (2 * special.gamma(k)))
        z = np.geomspace(zmin, zmax, num)
        g = np.empty(num)
        g[0] = zmin ** (1 + sigma) / (1 + sigma)
        fn = lambda q: float(mean_curvature_profile(q, n, sigma)) * q ** (sigma - 1)  # noqa: E731
        for i in range(1, num):
            g[i] = g[i - 1] + integrate.quad(fn, z[i - 1], z[i], epsabs=0, epsrel=1e-10)[0]
        self.logz = np.log(z)
        self.logg = np.log(g)
        self.zmin, self.zmax, self.gmax = zmin, zmax, g[-1]

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        lo = (z > 0) & (z < self.zmin)
        mid = (z >= self.zmin) & (z <= self.zmax)
        hi = z > self.zmax
        out[lo] = z[lo] ** (1 + self.sigma) / (1 + self.sigma)
        out[mid] = np.exp(np.interp(np.log(z[mid]), self.logz, self.logg))
        out[hi] = self.gmax + self.f_inf * (z[hi] ** self.sigma - self.zmax**self.sigma) / self.sigma
        return out


@lru_cache(maxsize=16)
def _curvature_table(n: int, sigma: float) -> _ExteriorCurvatureTable:
    return _ExteriorCurvatureTable(n, sigma)


def _curvature_exterior(u: np.ndarray, grid: Grid, sigma: float) -> np.ndarray:
    """``int_{exterior} F(u_i / |x_i - y|) |x_i - y|^{-n-sigma} dy`` per node (u real, flat)."""
    table = _curvature_table(grid.dim, sigma)
    a = np.abs(u)
    out = np.zeros_like(u)
    nz = a > 0
    if grid.dim == 1:
        (lo, hi), = grid.extent
        x = grid.axes()[0]
        g = table(a / (x - lo)) + table(a / (hi - x))
    else:
        d, c, w = _side_geometry(grid)
        g = np.sum(w * table(a[:, None, None] * c / d), axis=(1, 2))
    out[nz] = np.sign(u[nz]) * a[nz] ** (-sigma) * g[nz]
    return out


# --------------------------------------------------------------------------
# local flux helpers


def _phi(z: np.ndarray, p: float) -> np.ndarray:
    """``|z|^{p-2} z`` with the value 0 at z = 0."""
    if p == 2.0:
        return z
    a = np.abs(z)
    out = np.zeros_like(z)
    nz = a > 0
    out[nz] = a[nz] ** (p - 2) * z[nz]
    return out


def _signed_power(u: np.ndarray, m: float) -> np.ndarray:
    if m == 1.0:
        return u
    a = np.abs(u)
    out = np.zeros_like(u)
    nz = a > 0
    out[nz] = a[nz] ** (m - 1) * u[nz]
    return out


def _edge_gradients(w: np.ndarray, grid: Grid) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per axis: (normal difference, squared gradient magnitude) on every edge."""
    normals = forward_differences(w, grid)
    if grid.dim == 1:
        return [(normals[0], np.abs(normals[0]) ** 2)]
    p = np.pad(w, 1)
    h1, h2 = grid.h
    # central differences at every padded node (zero outside the padded ring)
    cy = np.zeros_like(p)
    cy[:, 1:-1] = (p[:, 2:] - p[:, :-2]) / (2 * h2)
    cx = np.zeros_like(p)
    cx[1:-1, :] = (p[2:, :] - p[:-2, :]) / (2 * h1)
    tx = 0.5 * (cy[:-1, 1:-1] + cy[1:, 1:-1])  # tangential part on x-edges
    ty = 0.5 * (cx[1:-1, :-1] + cx[1:-1, 1:])
    gx, gy = normals
    return [(gx, np.abs(gx) ** 2 + np.abs(tx) ** 2), (gy, np.abs(gy) ** 2 + np.abs(ty) ** 2)]


def _divergence(fluxes: list[np.ndarray], grid: Grid) -> np.ndarray:
    out = 0
    for axis, (f, h) in enumerate(zip(fluxes, grid.h)):
        out = out + np.diff(f, axis=axis) / h
    return out


# --------------------------------------------------------------------------
# application


def gagliardo_seminorm_sq(field: Field, sigma: float) -> float:
    """``int int_{R^2n} |u(x)-u(y)|^2 / |x-y|^{n+2 sigma}`` with exterior-zero extension.

    Double sum over node pairs plus twice the analytic exterior part.
    """
    _check_sigma(sigma)
    grid = field.grid
    u = field.values.ravel()
    w = pair_weights(grid, 2 * sigma)
    inner_part = np.sum(np.abs(u[:, None] - u[None, :]) ** 2 * w)
    outer_part = 2.0 * np.sum(np.abs(u) ** 2 * exterior_tail(grid, 2 * sigma))
    return float((inner_part + outer_part) * grid.cell_volume)


def kirchhoff_prefactor(op, field: Field) -> float:
    """``m0 + b ||grad u||^2`` or ``M0 + b [u]_sigma^2``."""
    if isinstance(op, KirchhoffClassical):
        if op.b == 0:
            return float(op.m0)
        return float(op.m0 + op.b * gradient_sq_norm(field))
    if isinstance(op, KirchhoffFractional):
        if op.b == 0:
            return float(op.M0)
        return float(op.M0 + op.b * gagliardo_seminorm_sq(field, op.sigma))
    raise TypeError("prefactor is defined for Kirchhoff operators only")


def riesz_convolution(field: Field, sigma: float) -> Field:
    """Discrete Riesz potential ``u * c(n,sigma)|x|^{-(n-2 sigma)}`` at the interior nodes."""
    grid = field.grid
    k = riesz_matrix(grid, sigma)
    return Field(grid, k @ field.values.ravel())


def linear_matrix(op, grid: Grid) -> np.ndarray:
    """Dense matrix of a linear operator (the Kirchhoff operators give their unit-prefactor part)."""
    check_compatible(op, grid)
    if isinstance(op, Laplacian):
        return op.d * laplacian_matrix(grid)
    if isinstance(op, FractionalLaplacian):
        c = op.d * (fractional_constant(grid.dim, op.sigma) if op.normalization == "standard" else 1.0)
        return c * fractional_matrix(grid, op.sigma)
    if isinstance(op, KirchhoffClassical):
        return laplacian_matrix(grid)
    if isinstance(op, KirchhoffFractional):
        return fractional_matrix(grid, op.sigma)
    if isinstance(op, AnisotropicFractional):
        return anisotropic_matrix(grid, op.axes)
    if isinstance(op, Magnetic):
        if op.A.is_zero():
            return laplacian_matrix(grid).astype(complex)
        return magnetic_matrix(grid, op.A)
    if isinstance(op, FractionalMagnetic):
        if op.A.is_zero():
            return fractional_matrix(grid, op.sigma).astype(complex)
        return fractional_magnetic_matrix(grid, op.sigma, op.A)
    if isinstance(op, MatrixOperator):
        return op.matrix
    if isinstance(op, PLaplacianPower) and is_linear(op):
        return laplacian_matrix(grid)
    if isinstance(op, FractionalPLaplacian) and is_linear(op):
        return fractional_matrix(grid, op.sigma)
    if isinstance(op, PorousMediumI) and is_linear(op):
        return fractional_matrix(grid, op.sigma)
    raise TypeError(f"{type(op).__name__} is not linear")


def apply_values(op, u: np.ndarray, grid: Grid) -> np.ndarray:
    """Apply ``op`` to raw interior values (shape ``grid.shape``); returns the same shape."""
    u = np.asarray(u, dtype=complex).reshape(grid.shape)
    flat = u.ravel()

    if isinstance(op, (KirchhoffClassical, KirchhoffFractional)):
        pref = kirchhoff_prefactor(op, Field(grid, u))
        return pref * (linear_matrix(op, grid) @ flat).reshape(grid.shape)

    if isinstance(op, Laplacian):
        p = np.pad(u, 1)
        out = 0
        for axis, h in enumerate(grid.h):
            sl = [slice(1, -1)] * grid.dim
            lo, hi = list(sl), list(sl)
            lo[axis], hi[axis] = slice(0, -2), slice(2, None)
            out = out + (2 * u - p[tuple(lo)] - p[tuple(hi)]) / h**2
        return op.d * out

    if is_linear(op):
        return (linear_matrix(op, grid) @ flat).reshape(grid.shape)

    if isinstance(op, PLaplacianPower):
        w = _signed_power(u, op.m)
        fluxes = [_phi_scaled(g, mag, op.p) for g, mag in _edge_gradients(w, grid)]
        return -_divergence(fluxes, grid)

    if isinstance(op, MeanCurvature):
        fluxes = [g / np.sqrt(1.0 + mag) for g, mag in _edge_gradients(u, grid)]
        return -_divergence(fluxes, grid)

    if isinstance(op, FractionalPLaplacian):
        return _fractional_p(flat, grid, op.sigma, op.p).reshape(grid.shape)

    if isinstance(op, SumFractionalPLaplacians):
        out = sum(beta * _fractional_p(flat, grid, sigma, p) for beta, sigma, p in op.terms)
        return out.reshape(grid.shape)

    if isinstance(op, PorousMediumI):
        w = _signed_power(flat, op.m)
        return (fractional_matrix(grid, op.sigma) @ w).reshape(grid.shape)

    if isinstance(op, PorousMediumII):
        pressure = (riesz_matrix(grid, op.sigma, padded=True) @ flat).reshape(tuple(k + 2 for k in grid.n))
        up = np.pad(u, 1)
        fluxes = []
        for axis, h in enumerate(grid.h):
            sl_lo = [slice(1, -1)] * grid.dim
            sl_hi = [slice(1, -1)] * grid.dim
            sl_lo[axis], sl_hi[axis] = slice(0, -1), slice(1, None)
            u_edge = 0.5 * (up[tuple(sl_lo)] + up[tuple(sl_hi)])
            dp = (pressure[tuple(sl_hi)] - pressure[tuple(sl_lo)]) / h
            fluxes.append(u_edge * dp)
        return -_divergence(fluxes, grid)

    if isinstance(op, FractionalMeanCurvature):
        if np.any(np.abs(flat.imag) > 1e-12 * max(1.0, np.max(np.abs(flat)))):
            raise ValueError("fractional mean curvature is defined for real fields only")
        x = flat.real
        r = _distances(grid)
        np.fill_diagonal(r, 1.0)
        F = mean_curvature_profile((x[:, None] - x[None, :]) / r, grid.dim, op.sigma)
        kern = grid.cell_volume * r ** (-(grid.dim + op.sigma))
        np.fill_diagonal(kern, 0.0)
        out = np.sum(F * kern, axis=1) + _curvature_exterior(x, grid, op.sigma)
        return out.reshape(grid.shape).astype(complex)

    raise TypeError(f"unknown operator {op!r}")


def _phi_scaled(g: np.ndarray, mag_sq: np.ndarray, p: float) -> np.ndarray:
    """``|G|^{p-2} g`` where ``|G|^2 = mag_sq`` (0 where the gradient vanishes)."""
    if p == 2.0:
        return g
    out = np.zeros_like(g)
    nz = mag_sq > 0
    out[nz] = mag_sq[nz] ** ((p - 2) / 2) * g[nz]
    return out


def _fractional_p(u: np.ndarray, grid: Grid, sigma: float, p: float) -> np.ndarray:
    beta = sigma * p
    w = pair_weights(grid, beta)
    diff = u[:, None] - u[None, :]
    return np.sum(w * _phi(diff, p), axis=1) + exterior_tail(grid, beta) * _phi(u, p)


def apply(op, field: Field) -> Field:
    """``N[u]`` at the interior nodes.  Raises on incompatible grids or non-finite output."""
    check_compatible(op, field.grid)
    with np.errstate(over="ignore", invalid="ignore"):
        out = apply_values(op, field.values, field.grid)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{type(op).__name__} produced non-finite values")
    return Field(field.grid, out)


def coefficient_scale(op, grid: Grid, u: np.ndarray) -> float:
    """Rough amplitude of the effective diffusivity of ``op`` around ``u``.

    Used only to scale the explicit stability bound ``c_stab h^order / scale``.
    """
    u = np.asarray(u).reshape(grid.shape)
    amp = float(np.max(np.abs(u))) if u.size else 0.0
    amp = max(amp, 1e-300)
    if isinstance(op, Laplacian):
        return op.d
    if isinstance(op, FractionalLaplacian):
        c = fractional_constant(grid.dim, op.sigma) if op.normalization == "standard" else 1.0
        return 4.0 * op.d * c
    if isinstance(op, PLaplacianPower):
        w = _signed_power(u, op.m)
        gmax = max(np.sqrt(np.max(mag)) for _, mag in _edge_gradients(w, grid))
        g = max(gmax, 1e-300) ** (op.p - 2) if op.p >= 2 else max(gmax, 1.0) ** (op.p - 2)
        return max(1.0, (op.p - 1) * op.m * amp ** (op.m - 1) * g)
    if isinstance(op, FractionalPLaplacian):
        return 4.0 * max(1.0, (op.p - 1) * (2 * amp) ** (op.p - 2))
    if isinstance(op, SumFractionalPLaplacians):
        return 4.0 * sum(b * max(1.0, (p - 1) * (2 * amp) ** (p - 2)) for b, _, p in op.terms)
    if isinstance(op, AnisotropicFractional):
        return 4.0 * sum(b for b, _ in op.axes)
    if isinstance(op, PorousMediumI):
        return 4.0 * max(1.0, op.m * amp ** (op.m - 1))
    if isinstance(op, PorousMediumII):
        return 8.0 * riesz_constant(grid.dim, op.sigma) * amp
    if isinstance(op, (KirchhoffClassical, KirchhoffFractional)):
        return kirchhoff_prefactor(op, Field(grid, u)) * (4.0 if isinstance(op, KirchhoffFractional) else 1.0)
    if isinstance(op, Magnetic):
        return 1.0
    if isinstance(op, FractionalMagnetic):
        return 4.0
    if isinstance(op, (MeanCurvature, FractionalMeanCurvature)):
        return 4.0 if isinstance(op, FractionalMeanCurvature) else 1.0
    if isinstance(op, MatrixOperator):
        return float(np.max(np.abs(np.linalg.eigvals(op.matrix))))
    raise TypeError(f"unknown operator {op!r}")
