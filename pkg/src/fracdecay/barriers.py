"""Scalar side: Mittag-Leffler values, explicit supersolution barriers, the scalar
mixed ODE ``lam1 D^alpha v + lam2 v' = -k v^gamma`` and discrete comparison checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .integrator import L1History, TimeDerivativeSpec, mixed_derivative_series

SERIES_RADIUS = 1.0


def mittag_leffler(alpha: float, x: float) -> float:
    """One-parameter ``E_alpha(x)`` for ``x <= 0``.

    Power series near the origin, integral representation
    ``E_a(-x) = sin(a pi)/(a pi) int_0^inf exp(-q^{1/a}) x / (q^2 + 2 q x cos(a pi) + x^2) dq``
    elsewhere.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if x > 0:
        raise ValueError("only nonpositive arguments are supported")
    if alpha == 1.0:
        return math.exp(x)
    if x == 0.0:
        return 1.0
    if -x <= SERIES_RADIUS:
        total, k = 0.0, 0
        while True:
            term = x**k / math.gamma(alpha * k + 1)
            total += term
            if abs(term) < 1e-17 * abs(total) or k > 200:
                return total
            k += 1
    y = -x
    c = math.cos(alpha * math.pi)

    def integrand(q):
        return math.exp(-(q ** (1.0 / alpha))) * y / (q * q + 2 * q * y * c + y * y)

    # the kernel peaks near q = y when alpha is close to 1
    pts = [y] if y < 50 else None
    upper = 50.0 ** alpha  # exp(-q^{1/a}) is below 1e-21 beyond this
    val = integrate.quad(integrand, 0.0, upper, points=pts, limit=200, epsabs=1e-15, epsrel=1e-12)[0]
    val *= math.sin(alpha * math.pi) / (alpha * math.pi)
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class BarrierSpec:
    """Explicit supersolution of ``lam1 D^alpha w + lam2 w' = -nu w^gamma`` (``C = 1/nu``)."""

    kind: str
    u0: float
    nu: float
    gamma: float
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("mixed_vz15", "classical_exp", "classical_power"):
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if not self.u0 > 0 or not self.nu > 0 or not self.gamma > 0:
            raise ValueError("u0, nu and gamma must be positive")
        if self.kind == "mixed_vz15" and (self.alpha is None or not 0 < self.alpha < 1):
            raise ValueError("mixed barrier needs alpha in (0, 1)")
        if self.kind == "classical_exp" and self.gamma > 1:
            raise ValueError("exponential barrier needs gamma <= 1")
        if self.kind == "classical_power" and not self.gamma > 1:
            raise ValueError("power barrier needs gamma > 1")

    @property
    def C(self) -> float:
        return 1.0 / self.nu

    @property
    def w0(self) -> float:
        if self.kind == "classical_power":
            g = self.gamma
            return max(self.u0, (self.C / (g - 1)) ** (1 / (g - 1)))
        return self.u0

    @property
    def t0(self) -> float:
        g = self.gamma
        if self.kind == "mixed_vz15":
            a = self.alpha
            lead = self.u0 ** (1 - g) / self.nu * (
                2**a / math.gamma(1 - a) + (a / g) * 2 ** (a + a / g) / math.gamma(2 - a))
            return max(lead, 1.0, a * self.u0 ** (1 - g) / (g * self.nu))
        if self.kind == "classical_exp":
            if g == 1:
                return 0.0
            return max(0.0, self.C / (1 - g) * (self.w0 ** (1 - g) - 1))
        return 1.0

    @property
    def K(self) -> float:
        if self.kind == "mixed_vz15":
            return self.u0 * self.t0 ** (self.alpha / self.gamma)
        if self.kind == "classical_exp":
            return self.theta0 * math.exp(self.t0 / self.C)
        return self.w0

    @property
    def theta0(self) -> float:
        """Value at ``t0`` of the exponential barrier (continuity of the two pieces)."""
        if self.kind != "classical_exp":
            raise AttributeError("theta0 is defined for the exponential barrier only")
        g = self.gamma
        if g == 1:
            return self.w0
        return self._ode_piece(self.t0)

    def _ode_piece(self, t):
        g = self.gamma
        base = np.maximum(self.w0 ** (1 - g) - (1 - g) * np.asarray(t, dtype=float) / self.C, 0.0)
        return base ** (1 / (1 - g))


def barrier_eval(spec: BarrierSpec, t):
    """Barrier value(s) at ``t >= 0`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("barrier is defined for t >= 0")
    t0 = spec.t0
    if spec.kind == "mixed_vz15":
        tail = spec.K * np.maximum(t, t0) ** (-spec.alpha / spec.gamma)
        out = np.where(t <= t0, spec.u0, tail)
    elif spec.kind == "classical_exp":
        head = spec.w0 if spec.gamma == 1 else spec._ode_piece(np.minimum(t, t0))
        out = np.where(t <= t0, head, spec.theta0 * np.exp((t0 - t) / spec.C))
    else:
        out = np.where(t <= 1.0, spec.w0, spec.w0 * np.maximum(t, 1.0) ** (-1.0 / (spec.gamma - 1)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScalarTrajectory:
    times: np.ndarray
    values: np.ndarray
    lam1: float
    lam2: float
    alpha: float
    k: float
    gamma: float
    normalization: str = "standard"

    @property
    def td(self) -> TimeDerivativeSpec:
        return TimeDerivativeSpec(self.lam1, self.lam2, self.alpha, self.normalization)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def solve_scalar_ode(lam1: float, lam2: float, alpha: float, k: float, gamma: float, v0: float,
                     T: float, dt: float, normalization: str = "standard") -> ScalarTrajectory:
    """Implicit L1 / Euler solution of ``lam1 D^alpha v + lam2 v' = -k v^gamma``.

    Each step solves the monotone equation ``a0 v + k v^gamma = rhs`` exactly,
    so no step size restriction applies; once ``v`` reaches 0 it stays there.
    """
    td = TimeDerivativeSpec(lam1, lam2, alpha, normalization)
    if v0 < 0:
        raise ValueError("v0 must be nonnegative")
    if not k > 0 or not gamma > 0:
        raise ValueError("k and gamma must be positive")
    if not 0 < dt < T:
        raise ValueError("need 0 < dt < T")
    steps = int(round(T / dt))
    a0 = td.leading_weight(dt)
    c = td.l1_scale(dt) * lam1 if lam1 > 0 else 0.0
    hist = L1History(alpha, 1, steps, dtype=float) if lam1 > 0 else None
    values = np.empty(steps + 1)
    values[0] = v = float(v0)
    for i in range(1, steps + 1):
        if v == 0.0:
            values[i:] = 0.0
            break
        rhs = a0 * v - (c * hist.tail_sum()[0] if hist is not None else 0.0)
        new = _solve_monotone(a0, k, gamma, rhs)
        if hist is not None:
            hist.push(np.array([new - v]))
        values[i] = v = new
    times = dt * np.arange(steps + 1)
    return ScalarTrajectory(times, values, lam1, lam2, alpha, k, gamma, normalization)


def _solve_monotone(a0: float, k: float, gamma: float, rhs: float) -> float:
    if rhs <= 0:
        return 0.0
    if gamma == 1:
        return rhs / (a0 + k)
    hi = rhs / a0
    return optimize.brentq(lambda v: a0 * v + k * v**gamma - rhs, 0.0, hi, xtol=1e-15 * hi, rtol=1e-15)


def barrier_trajectory(spec: BarrierSpec, times, lam1: float, lam2: float, k: float | None = None,
                       normalization: str = "standard") -> ScalarTrajectory:
    times = np.asarray(times, dtype=float)
    return ScalarTrajectory(times, np.asarray(barrier_eval(spec, times)), lam1, lam2,
                            spec.alpha if spec.alpha is not None else 0.5,
                            spec.nu if k is None else k, spec.gamma, normalization)


@dataclass(frozen=True)
class ComparisonReport:
    is_super: bool
    is_sub: bool
    ordered: bool
    hypothesis: bool
    worst_super_residual: float
    worst_sub_residual: float
    min_gap: float
    tolerance: float


def discrete_residual(traj: ScalarTrajectory, lam1=None, lam2=None, alpha=None, k=None, gamma=None,
                      normalization=None) -> np.ndarray:
    """``lam1 D^alpha f + lam2 (backward difference) + k f^gamma`` at ``t_1..t_K``."""
    td = TimeDerivativeSpec(traj.lam1 if lam1 is None else lam1, traj.lam2 if lam2 is None else lam2,
                            traj.alpha if alpha is None else alpha,
                            traj.normalization if normalization is None else normalization)
    k = traj.k if k is None else k
    gamma = traj.gamma if gamma is None else gamma
    f = np.asarray(traj.values, dtype=float)
    return mixed_derivative_series(f, td, traj.dt) + k * np.maximum(f[1:], 0.0) ** gamma


def _truncation(f: np.ndarray, lam2: float, dt: float) -> np.ndarray:
    """Backward-difference error ``lam2 dt |f''| / 2`` per node, estimated from second differences."""
    out = np.zeros(f.size - 1)
    out[1:] = 0.5 * lam2 * np.abs(f[2:] - 2 * f[1:-1] + f[:-2]) / dt
    return out


def check_comparison(w: ScalarTrajectory, v: ScalarTrajectory) -> ComparisonReport:
    """Residual signs of ``w`` (super) and ``v`` (sub) under ``v``'s equation, and their ordering.

    A node passes when its residual is within a fixed ``5 dt^{min(1, 2-alpha)}``
    plus the local backward-difference truncation of that trajectory.
    """
    if w.times.shape != v.times.shape or not np.allclose(w.times, v.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories must share a time grid")
    params = dict(lam1=v.lam1, lam2=v.lam2, alpha=v.alpha, k=v.k, gamma=v.gamma, normalization=v.normalization)
    dt = v.dt
    alpha = v.alpha if v.lam1 > 0 else 1.0
    tol = 5.0 * dt ** min(1.0, 2.0 - alpha)
    rw = discrete_residual(w, **params)
    rv = discrete_residual(v, **params)
    hypothesis = bool(w.values[0] > v.values[0])
    gap = w.values[1:] - v.values[1:]
    return ComparisonReport(
        is_super=bool(np.all(rw >= -(tol + _truncation(w.values, v.lam2, dt)))),
        is_sub=bool(np.all(rv <= tol + _truncation(v.values, v.lam2, dt))),
        ordered=bool(hypothesis and np.all(gap > 0)),
        hypothesis=hypothesis,
        worst_super_residual=float(rw.min()),
        worst_sub_residual=float(rv.max()),
        min_gap=float(gap.min()),
        tolerance=tol,
    )
