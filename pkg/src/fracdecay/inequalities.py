"""Numerical checks of the structural inequality
``||u||_s^{s-1+gamma} <= C int |u|^{s-2} Re{conj(u) N[u]}`` and of the
elementary inequalities behind it.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, special

from . import operators as ops
from .grid import Field, Grid, bump, eigenfunction, gradient_sq_norm, lp_norm, random_field

TOLERANCE = -1e-12


def energy_integral(field: Field, s: float, op, *, take_real: bool = True):
    """``int |u|^{s-2} Re{conj(u) N[u]}``, evaluated as ``|u|^{s-1} Re{(conj(u)/|u|) N[u]}``.

    Nodes where ``u = 0`` contribute 0.  With ``take_real=False`` the complex
    integral (without the real part) is returned.
    """
    if not s >= 1:
        raise ValueError("s must be >= 1")
    u = field.values
    n_u = ops.apply(op, field).values
    a = np.abs(u)
    phase = np.zeros_like(u)
    nz = a > 0
    phase[nz] = np.conj(u[nz]) / a[nz]
    integrand = a ** (s - 1) * phase * n_u
    if not np.all(np.isfinite(integrand)):
        raise FloatingPointError("non-finite energy integrand")
    total = np.sum(integrand) * field.grid.cell_volume
    return float(total.real) if take_real else complex(total)


@dataclass
class StructuralReport:
    s: float
    gamma: float
    samples: int
    energies: np.ndarray
    norm_powers: np.ndarray
    C_hat: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and np.isfinite(self.C_hat) and self.C_hat > 0


def structural_check(op, s: float, gamma: float, sample_fields: Iterable[Field]) -> StructuralReport:
    """Empirical constant ``C_hat = max ||u||^{s-1+gamma} / energy`` over the samples."""
    energies, powers = [], []
    for f in sample_fields:
        energies.append(energy_integral(f, s, op))
        powers.append(lp_norm(f, s) ** (s - 1 + gamma))
    energies = np.array(energies)
    powers = np.array(powers)
    if np.any(powers == 0):
        raise ValueError("sample fields must be nonzero")
    bad = energies <= 0
    c_hat = float(np.max(powers[~bad] / energies[~bad])) if np.any(~bad) else float("inf")
    return StructuralReport(float(s), float(gamma), len(energies), energies, powers, c_hat, int(bad.sum()))


# --------------------------------------------------------------------------
# sample generators


def sine_series(grid: Grid, rng: np.random.Generator, modes: int = 8, decay: float = 2.0,
                complex_valued: bool = False) -> Field:
    """Random finite sine series ``sum c_k sin(k pi x) / k^decay`` (tensor products in 2D)."""
    vals = np.zeros(grid.shape, dtype=complex)
    ks = np.arange(1, modes + 1)
    if grid.dim == 1:
        kk = [ks]
    else:
        kk = np.meshgrid(ks, ks, indexing="ij")
    coef = rng.standard_normal(kk[0].shape)
    if complex_valued:
        coef = coef + 1j * rng.standard_normal(kk[0].shape)
    coef = coef / np.prod([k.astype(float) for k in kk], axis=0) ** decay
    mesh = grid.mesh()
    for idx in np.ndindex(coef.shape):
        term = coef[idx]
        for c, (a, b), k in zip(mesh, grid.extent, (kk_[idx] for kk_ in kk)):
            term = term * np.sin(k * np.pi * (c - a) / (b - a))
        vals = vals + term
    return Field(grid, vals)


def sample_fields(grid: Grid, kind: str = "real", count: int = 24, seed: int = 0) -> list[Field]:
    """Deterministic sample set: eigenfunction, bumps, smoothed noise and sine series.

    ``kind`` is ``real``, ``complex`` or ``nonnegative``.
    """
    rng = np.random.default_rng(seed)
    out: list[Field] = []
    if kind == "nonnegative":
        out.append(bump(grid))
        out.append(eigenfunction(grid))
        for i in range(count - 2):
            if i % 2 == 0:
                lo = [a + 0.3 * (b - a) for a, b in grid.extent]
                hi = [a + 0.7 * (b - a) for a, b in grid.extent]
                center = rng.uniform(lo, hi)
                radius = rng.uniform(0.15, 0.3) * min(b - a for a, b in grid.extent)
                out.append(bump(grid, center, radius, rng.uniform(0.2, 2.0)))
            else:
                f = sine_series(grid, rng, modes=5)
                out.append(Field(grid, np.abs(f.values) ** 2 / np.max(np.abs(f.values) ** 2)))
        return out
    cplx = kind == "complex"
    if kind not in ("real", "complex"):
        raise ValueError(f"unknown sample kind {kind!r}")
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi)) if cplx else 1.0
    out.append(eigenfunction(grid) * phase)
    out.append(bump(grid) * phase)
    for i in range(count - 2):
        if i % 2 == 0:
            f = random_field(grid, int(rng.integers(2**31)), 2 + i % 3, complex_valued=cplx)
            out.append(f * (1.0 / np.max(np.abs(f.values))))
        else:
            out.append(sine_series(grid, rng, complex_valued=cplx))
    return out


# --------------------------------------------------------------------------
# theorem table


@dataclass(frozen=True)
class TableEntry:
    label: str
    op: object
    s: float
    gamma: float
    samples: str


def theorem_table() -> list[TableEntry]:
    """(operator, s, gamma) combinations for which the structural inequality is proved (1D)."""
    e = TableEntry
    return [
        e("laplacian", ops.Laplacian(), 2.0, 1.0, "real"),
        e("laplacian", ops.Laplacian(), 4.0, 1.0, "real"),
        e("fractional_laplacian", ops.FractionalLaplacian(0.5), 2.0, 1.0, "real"),
        e("fractional_laplacian", ops.FractionalLaplacian(0.3), 3.0, 1.0, "real"),
        e("magnetic", ops.Magnetic(1.0), 2.0, 1.0, "complex"),
        e("magnetic_linear", ops.Magnetic(ops.VectorPotential((0.5,), ((2.0,),))), 3.0, 1.0, "complex"),
        e("fractional_magnetic", ops.FractionalMagnetic(0.5, 1.0), 2.0, 1.0, "complex"),
        e("fractional_magnetic", ops.FractionalMagnetic(0.5, 1.0), 4.0, 1.0, "complex"),
        e("kirchhoff", ops.KirchhoffClassical(1.0, 0.5), 2.0, 1.0, "real"),
        e("kirchhoff_degenerate", ops.KirchhoffClassical(0.0, 1.0), 2.0, 3.0, "real"),
        e("kirchhoff_degenerate", ops.KirchhoffClassical(0.0, 1.0), 4.0, 3.0, "real"),
        e("fractional_kirchhoff", ops.KirchhoffFractional(0.5, 1.0, 0.5), 2.0, 1.0, "real"),
        e("fractional_kirchhoff_degenerate", ops.KirchhoffFractional(0.5, 0.0, 1.0), 2.0, 3.0, "real"),
        e("porous_riesz", ops.PorousMediumII(0.25), 2.0, 2.0, "nonnegative"),
        e("porous_riesz", ops.PorousMediumII(0.25), 3.0, 2.0, "nonnegative"),
        e("p_laplacian_power", ops.PLaplacianPower(3.0, 1.0), 2.0, 2.0, "real"),
        e("p_laplacian_power", ops.PLaplacianPower(2.0, 2.0), 2.0, 2.0, "real"),
        e("fractional_p_laplacian", ops.FractionalPLaplacian(0.5, 3.0), 2.0, 2.0, "real"),
        e("sum_fractional_p_laplacians", ops.SumFractionalPLaplacians(((1.0, 0.5, 3.0), (0.5, 0.3, 2.0))),
          2.0, 2.0, "real"),
        e("anisotropic", ops.AnisotropicFractional(((1.0, 0.5),)), 2.0, 1.0, "real"),
        e("porous_power", ops.PorousMediumI(0.5, 2.0), 2.0, 2.0, "real"),
        e("mean_curvature", ops.MeanCurvature(), 2.0, 1.0, "real"),
        e("fractional_mean_curvature", ops.FractionalMeanCurvature(0.5), 2.0, 1.0, "real"),
    ]


@dataclass
class TableResult:
    entry: TableEntry
    reports: dict[int, StructuralReport]

    @property
    def stability(self) -> float:
        c = [r.C_hat for r in self.reports.values()]
        return max(c) / min(c)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports.values()) and self.stability < 2.0


def run_theorem_table(resolutions: Sequence[int] = (99, 199), count: int = 24, seed: int = 0,
                      entries: Sequence[TableEntry] | None = None) -> list[TableResult]:
    out = []
    for entry in entries or theorem_table():
        reports = {}
        for n in resolutions:
            grid = Grid.interval(n)
            reports[n] = structural_check(entry.op, entry.s, entry.gamma, sample_fields(grid, entry.samples, count, seed))
        out.append(TableResult(entry, reports))
    return out


# --------------------------------------------------------------------------
# elementary inequalities


@dataclass
class IdentityResult:
    name: str
    passed: bool
    worst_margin: float
    worst_sample: dict
    samples: int


def _phi(z, s):
    """``|z|^{s-2} z`` with value 0 at z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    nz = z != 0
    out[nz] = np.abs(z[nz]) ** (s - 2) * z[nz]
    return out


def _margin(lhs_big, lhs_small):
    """Normalized margin of ``lhs_big >= lhs_small``."""
    scale = np.maximum(np.maximum(np.abs(lhs_big), np.abs(lhs_small)), np.finfo(float).tiny)
    return (lhs_big - lhs_small) / scale


def _st00(n, rng):
    d = rng.integers(1, 4, n)
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    al, be, t = (rng.standard_normal((n, 3)) * (np.arange(3) < d[:, None]) for _ in range(3))
    zero = rng.random(n) < 0.01
    a[zero] = b[zero] = 0.0
    big = (a**2 + b**2) * (np.sum((a[:, None] * t - be) ** 2, 1) + np.sum((b[:, None] * t + al) ** 2, 1))
    small = np.sum((a[:, None] * al + b[:, None] * be) ** 2, 1)
    return _margin(big, small), dict(a=a, b=b, alpha=al, beta=be, t=t, dim=d)


def _do1(n, rng):
    s = rng.uniform(1.0, 6.0, n)
    a, b = rng.standard_normal(n) * 3, rng.standard_normal(n) * 3
    eq = rng.random(n) < 0.01
    b[eq] = a[eq]
    val = (a - b) * (_phi(a, s) - _phi(b, s))
    scale = np.abs(a - b) * (np.abs(a) ** (s - 1) + np.abs(b) ** (s - 1))
    margin = val / np.maximum(scale, np.finfo(float).tiny)
    return margin, dict(a=a, b=b, s=s)


def kirch_exponents(s: float) -> tuple[float, float]:
    """``(p, r)`` with ``p = max(2, (s+2)/2)`` and ``r = (s+2)/(2p)``."""
    p = max(2.0, (s + 2) / 2)
    return p, (s + 2) / (2 * p)


def kirch_ratio(lam, s: float):
    """``g(lambda) = (1 - |lambda|^r)^{2p} / ((1-lambda)^3 (1 - |lambda|^{s-2} lambda))`` on (-1, 1)."""
    p, r = kirch_exponents(s)
    lam = np.asarray(lam, dtype=float)
    return (1 - np.abs(lam) ** r) ** (2 * p) / ((1 - lam) ** 3 * (1 - _phi(lam, s)))


def kirch_constant(s: float, points: int = 20001) -> float:
    """Upper bound of ``g`` on (-1, 1): dense grid, local refinement and the ``lambda -> 1`` limit."""
    if not s > 1:
        raise ValueError("the power inequality needs s > 1")
    p, r = kirch_exponents(s)
    lam = np.linspace(-1 + 1e-9, 1 - 1e-6, points)
    g = kirch_ratio(lam, s)
    i = int(np.argmax(g))
    lo, hi = lam[max(i - 1, 0)], lam[min(i + 1, points - 1)]
    res = optimize.minimize_scalar(lambda x: -kirch_ratio(x, s), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    best = max(float(g.max()), float(-res.fun))
    limit = r ** (2 * p) / (s - 1) if p == 2.0 else 0.0
    return max(best, limit) * (1 + 1e-6)


def _kirch_power(n, rng):
    s_values = np.linspace(1.01, 6.0, 200)
    consts = np.array([kirch_constant(x, 4001) for x in s_values])
    pick = rng.integers(0, s_values.size, n)
    s, c = s_values[pick], consts[pick]
    a, b = rng.standard_normal(n) * 2, rng.standard_normal(n) * 2
    swap = np.abs(b) > np.abs(a)
    a[swap], b[swap] = b[swap], a[swap]
    p = np.maximum(2.0, (s + 2) / 2)
    r = (s + 2) / (2 * p)
    lhs = np.abs(np.abs(a) ** r - np.abs(b) ** r) ** (2 * p)
    rhs = c * (a - b) ** 3 * (_phi(a, s) - _phi(b, s))
    return _margin(rhs, lhs), dict(a=a, b=b, s=s)


def _magnetic_pointwise(n, rng):
    d = rng.integers(1, 4, n)
    mask = np.arange(3) < d[:, None]
    x = rng.uniform(-2, 2, (n, 3)) * mask
    y = rng.uniform(-2, 2, (n, 3)) * mask
    a0 = rng.standard_normal((n, 3)) * mask
    grad = rng.standard_normal((n, 3, 3)) * mask[:, :, None] * mask[:, None, :]
    mid = 0.5 * (x + y)
    A = a0 + np.einsum("nij,nj->ni", grad, mid)
    theta = np.sum((x - y) * A, axis=1)
    ux = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    uy = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    zero = rng.random(n) < 0.01
    ux[zero] = 0
    lhs = np.real(np.conj(ux) * (ux - np.exp(1j * theta) * uy))
    rhs = np.abs(ux) * (np.abs(ux) - np.abs(uy))
    scale = np.maximum(np.abs(ux) * (np.abs(ux) + np.abs(uy)), np.finfo(float).tiny)
    return (lhs - rhs) / scale, dict(ux=ux, uy=uy, theta=theta, dim=d)


def _batched_sines(grid: Grid, count: int, rng, modes: int = 8) -> np.ndarray:
    """``count`` random sine series on ``grid`` as rows of a ``(count, size)`` array."""
    ks = np.arange(1, modes + 1)
    axes = grid.axes()
    basis_1d = [np.sin(np.outer(ks, np.pi * (x - a) / (b - a))) for x, (a, b) in zip(axes, grid.extent)]
    if grid.dim == 1:
        basis = basis_1d[0] / ks[:, None] ** rng.uniform(0.0, 2.0)
    else:
        basis = np.einsum("ki,lj->klij", *basis_1d).reshape(modes * modes, grid.size)
        kk = np.outer(ks, ks).ravel()
        basis = basis / kk[:, None] ** rng.uniform(0.0, 2.0)
    coef = rng.standard_normal((count, basis.shape[0]))
    return coef @ basis


def _poincare(n, rng):
    grids = [Grid.interval(k) for k in (5, 17, 40)] + [Grid.square(k) for k in (5, 12)]
    margins, info = [], []
    per = -(-n // len(grids))
    for g in grids:
        u = _batched_sines(g, per, rng)
        u[0] = eigenfunction(g).values.real.ravel()
        vals = u.reshape((per,) + g.shape)
        norm2 = np.sum(np.abs(u) ** 2, axis=1) * g.cell_volume
        diffs = [np.diff(np.pad(vals, [(0, 0)] + [(1, 1) if ax == k else (0, 0) for ax in range(g.dim)]),
                         axis=k + 1) / h for k, h in enumerate(g.h)]
        grad2 = sum(np.sum(np.abs(d) ** 2, axis=tuple(range(1, g.dim + 1))) for d in diffs) * g.cell_volume
        bound = grad2 / g.first_eigenvalue()
        margins.append(_margin(bound, norm2))
        info.extend([g.n] * per)
    return np.concatenate(margins)[:n], dict(grid=np.array(info[:n], dtype=object))


def fractional_sobolev_constant(n: int, sigma: float) -> float:
    """Sharp ``S`` in ``||u||_q^2 <= S [u]^2`` for the bare-kernel Gagliardo seminorm on ``R^n``.

    ``q = 2n/(n - 2 sigma)``; derived from the sharp constant for ``||(-Delta)^{sigma/2} u||_2``.
    """
    if not n > 2 * sigma:
        raise ValueError("need n > 2 sigma")
    sharp = (2 ** (-2 * sigma) * np.pi ** (-sigma) * special.gamma((n - 2 * sigma) / 2)
             / special.gamma((n + 2 * sigma) / 2) * (special.gamma(n) / special.gamma(n / 2)) ** (2 * sigma / n))
    return float(sharp * ops.fractional_constant(n, sigma) / 2)


def _sobolev_frac(n, rng):
    margins, info = [], []
    sigmas = (0.1, 0.25, 0.4)
    sizes = (15, 31, 63)
    per = -(-n // (len(sigmas) * len(sizes)))
    for sigma in sigmas:
        q = 2.0 / (1 - 2 * sigma)
        S = fractional_sobolev_constant(1, sigma)
        for k in sizes:
            g = Grid.interval(k)
            A = ops.fractional_matrix(g, sigma)
            u = _batched_sines(g, per, rng).real
            semi = 2 * np.einsum("ci,ij,cj->c", u, A, u) * g.cell_volume
            lq2 = (np.sum(np.abs(u) ** q, axis=1) * g.cell_volume) ** (2 / q)
            margins.append(_margin(S * semi, lq2))
            info.extend([(sigma, k)] * per)
    return np.concatenate(margins)[:n], dict(case=np.array(info[:n], dtype=object))


_IDENTITIES = {
    "st00": _st00,
    "do1": _do1,
    "kirch_power": _kirch_power,
    "magnetic_pointwise": _magnetic_pointwise,
    "poincare": _poincare,
    "sobolev_frac": _sobolev_frac,
}

IDENTITY_NAMES = tuple(_IDENTITIES)


def check_identity(name: str, n_samples: int = 100_000, seed: int = 0) -> IdentityResult:
    """Sample the named inequality and report the worst normalized margin (pass iff >= -1e-12)."""
    if name not in _IDENTITIES:
        raise ValueError(f"unknown inequality {name!r}; choose from {', '.join(_IDENTITIES)}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    margins, data = _IDENTITIES[name](n_samples, rng)
    i = int(np.argmin(margins))
    worst = {k: (v[i].tolist() if hasattr(v[i], "tolist") else v[i]) for k, v in data.items()}
    m = float(margins[i])
    return IdentityResult(name, m >= TOLERANCE, m, worst, int(len(margins)))
