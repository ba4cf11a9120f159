"""L1 / backward-Euler marching for ``(lam1 d_t^alpha + lam2 d_t) u + N[u] = 0``.

The Caputo part uses the L1 scheme (piecewise-linear history, exact kernel
integration per interval)::

    D u_k = c * sum_{j<k} b_{k-1-j} (u_{j+1} - u_j),   b_l = (l+1)^{1-a} - l^{1-a},
    c = dt^{-a} / (1 - a)                      ("paper" normalization)
    c = dt^{-a} / Gamma(2 - a)                 ("standard" normalization)

Linear operators are treated implicitly with a single factorization, the
Kirchhoff family semi-implicitly (prefactor frozen at the old step) and
every other nonlinear operator explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import operators as ops
from .grid import Field, Grid, bump, eigenfunction, lp_norm, random_field, smoothed_indicator


class StabilityError(ValueError):
    """Explicit step size exceeds the configured stability bound."""


@dataclass(frozen=True)
class TimeDerivativeSpec:
    lam1: float
    lam2: float
    alpha: float = 0.5
    normalization: str = "paper"

    def __post_init__(self):
        if self.lam1 < 0 or self.lam2 < 0:
            raise ValueError("lam1 and lam2 must be nonnegative")
        if abs(self.lam1 + self.lam2 - 1.0) > 1e-12:
            raise ValueError(f"lam1 + lam2 must equal 1, got {self.lam1 + self.lam2}")
        if self.lam1 > 0 and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.normalization not in ("paper", "standard"):
            raise ValueError("normalization must be 'paper' or 'standard'")

    @property
    def fractional(self) -> bool:
        return self.lam1 > 0

    def l1_scale(self, dt: float) -> float:
        return l1_scale(self.alpha, dt, self.normalization)

    def leading_weight(self, dt: float) -> float:
        """Coefficient ``a0`` of ``u^{k+1}`` in the discrete mixed derivative."""
        a0 = self.lam2 / dt
        if self.lam1 > 0:
            a0 += self.lam1 * self.l1_scale(dt)
        return a0


def l1_scale(alpha: float, dt: float, normalization: str = "paper") -> float:
    c = dt**-alpha / (1.0 - alpha)
    if normalization == "standard":
        c /= math.gamma(1.0 - alpha)
    return c


def l1_weights(k: int, alpha: float) -> np.ndarray:
    """``b_l = (l+1)^{1-alpha} - l^{1-alpha}`` for ``l = 0..k-1``."""
    l = np.arange(k + 1, dtype=float)
    return np.diff(l ** (1.0 - alpha))


def caputo_apply(history, alpha: float, normalization: str = "paper", dt: float = 1.0):
    """L1 Caputo derivative at the last time of a uniform history ``u(t_0), ..., u(t_k)``.

    Works for scalars and arrays (leading axis is time).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    h = np.asarray(history)
    k = h.shape[0] - 1
    if k < 1:
        raise ValueError("need at least two history entries (k >= 1)")
    incr = np.diff(h, axis=0)
    b = l1_weights(k, alpha)[::-1]
    return l1_scale(alpha, dt, normalization) * np.tensordot(b, incr, axes=(0, 0))


def caputo_series(values: Sequence[float] | np.ndarray, alpha: float, dt: float,
                  normalization: str = "paper") -> np.ndarray:
    """L1 Caputo derivative at every node ``t_1..t_K`` of a uniform scalar series."""
    v = np.asarray(values, dtype=float)
    incr = np.diff(v)
    b = l1_weights(incr.size, alpha)
    return l1_scale(alpha, dt, normalization) * np.convolve(b, incr)[: incr.size]


def mixed_derivative_series(values, td: TimeDerivativeSpec, dt: float) -> np.ndarray:
    """``lam1 D^alpha v + lam2 (v_k - v_{k-1})/dt`` at ``t_1..t_K``."""
    v = np.asarray(values, dtype=float)
    out = td.lam2 * np.diff(v) / dt
    if td.lam1 > 0:
        out = out + td.lam1 * caputo_series(v, td.alpha, dt, td.normalization)
    return out


class L1History:
    """Increment store for the L1 history sum ``sum_{j<k} b_{k-j} (u_{j+1} - u_j)``.

    Shared between the field integrator and the scalar ODE solver (one-element arrays).
    """

    def __init__(self, alpha: float, size: int, capacity: int = 64, dtype=complex):
        self.alpha = alpha
        self._incr = np.zeros((max(capacity, 1), size), dtype=dtype)
        self._b = l1_weights(max(capacity, 1) + 1, alpha)
        self.count = 0

    def _grow(self):
        cap = 2 * self._incr.shape[0]
        incr = np.zeros((cap, self._incr.shape[1]), dtype=self._incr.dtype)
        incr[: self.count] = self._incr[: self.count]
        self._incr = incr
        self._b = l1_weights(cap + 1, self.alpha)

    def push(self, increment: np.ndarray):
        if self.count == self._incr.shape[0]:
            self._grow()
        self._incr[self.count] = increment
        self.count += 1

    def tail_sum(self) -> np.ndarray:
        """History sum for the next step (weights ``b_1..b_k`` against increments newest first)."""
        k = self.count
        if k == 0:
            return np.zeros(self._incr.shape[1], dtype=self._incr.dtype)
        return self._b[k:0:-1] @ self._incr[:k]


# --------------------------------------------------------------------------
# field integrator


def initial_field(grid: Grid, kind: str = "eigenfunction", *, amplitude: float = 1.0, seed: int = 0,
                  smoothness: int = 3) -> Field:
    """Initial data menu: eigenfunction, bump, indicator (smoothed), random (smoothed)."""
    if kind == "eigenfunction":
        f = eigenfunction(grid)
    elif kind == "bump":
        f = bump(grid)
    elif kind == "indicator":
        f = smoothed_indicator(grid)
    elif kind == "random":
        f = random_field(grid, seed, smoothness)
    elif kind == "random_complex":
        f = random_field(grid, seed, smoothness, complex_valued=True)
    elif kind == "zero":
        f = Field.zeros(grid)
    else:
        raise ValueError(f"unknown initial data kind {kind!r}")
    return f * amplitude


def stability_bound(op, grid: Grid, u0: np.ndarray, c_stab: float = 0.2) -> float:
    """Largest admissible effective step ``1/a0`` for an explicit operator."""
    order = ops.differential_order(op)
    scale = ops.coefficient_scale(op, grid, u0)
    return c_stab * min(grid.h) ** order / max(scale, 1e-300)


def treatment(op) -> str:
    """``implicit``, ``semi-implicit`` (Kirchhoff) or ``explicit``."""
    if ops.is_kirchhoff(op):
        return "semi-implicit"
    if ops.is_linear(op):
        return "implicit"
    return "explicit"


class IntegratorState:
    """Mutable marching state: current values, L1 history and cached solvers."""

    def __init__(self, u0: Field, op, td: TimeDerivativeSpec, dt: float, capacity: int = 64):
        ops.check_compatible(op, u0.grid)
        self.grid = u0.grid
        self.op = op
        self.td = td
        self.dt = dt
        self.u = np.array(u0.values.ravel(), dtype=complex)
        self.k = 0
        self.history = L1History(td.alpha, self.u.size, capacity) if td.fractional else None
        self.a0 = td.leading_weight(dt)
        self.mode = treatment(op)
        self._solver: Callable[[np.ndarray], np.ndarray] | None = None
        self._eig = None

    @property
    def time(self) -> float:
        return self.k * self.dt

    def field(self) -> Field:
        return Field(self.grid, self.u)

    def _history_term(self) -> np.ndarray:
        if self.history is None:
            return 0.0
        return self.td.lam1 * self.td.l1_scale(self.dt) * self.history.tail_sum()

    def _implicit_solver(self):
        if self._solver is None:
            a = ops.linear_matrix(self.op, self.grid)
            m = self.a0 * np.eye(self.grid.size) + a
            lu = linalg.lu_factor(m)
            self._solver = lambda rhs: linalg.lu_solve(lu, rhs)
        return self._solver

    def _kirchhoff_eig(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(ops.linear_matrix(self.op, self.grid))
        return self._eig

    def advance(self) -> np.ndarray:
        rhs = self.a0 * self.u - self._history_term()
        if self.mode == "implicit":
            new = self._implicit_solver()(rhs)
        elif self.mode == "semi-implicit":
            lam, q = self._kirchhoff_eig()
            pref = ops.kirchhoff_prefactor(self.op, self.field())
            new = q @ ((q.conj().T @ rhs) / (self.a0 + pref * lam))
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                n_u = ops.apply_values(self.op, self.u, self.grid).ravel()
                new = (rhs - n_u) / self.a0
        if not np.all(np.isfinite(new)):
            raise FloatingPointError(f"non-finite values at step {self.k + 1}")
        if self.history is not None:
            self.history.push(new - self.u)
        self.u = new
        self.k += 1
        return new


def step(state: IntegratorState, op=None, td: TimeDerivativeSpec | None = None, dt: float | None = None) -> Field:
    """Advance ``state`` by one step and return the new field."""
    if (op is not None and op != state.op) or (td is not None and td != state.td) or (
            dt is not None and dt != state.dt):
        raise ValueError("step parameters differ from those the state was built with")
    state.advance()
    return state.field()


@dataclass
class BlowUp:
    step: int
    time: float
    reason: str


@dataclass
class NormTrace:
    times: np.ndarray
    norms: dict[float, np.ndarray]
    blow_up: BlowUp | None = None
    dt: float | None = None
    record_every: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.norms = {float(s): np.asarray(v, dtype=float) for s, v in self.norms.items()}
        for s, v in self.norms.items():
            if v.shape != self.times.shape:
                raise ValueError(f"norm series for s={s} has the wrong length")

    def __getitem__(self, s: float) -> np.ndarray:
        return self.norms[float(s)]

    @property
    def s_list(self) -> list[float]:
        return list(self.norms)


@dataclass
class SimulationConfig:
    grid: Grid
    operator: object
    td: TimeDerivativeSpec
    u0: Field | str | Callable[[Grid], Field]
    dt: float
    T: float
    s_list: Sequence[float] = (2.0,)
    record_every: int = 1
    c_stab: float = 0.2
    check_stability: bool = True
    keep_snapshots: bool = False
    initial_options: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if not self.dt < self.T:
            raise ValueError("dt must be smaller than T")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")
        if not self.s_list or any(not s >= 1 for s in self.s_list):
            raise ValueError("every s in s_list must be >= 1")

    def initial(self) -> Field:
        if isinstance(self.u0, Field):
            if self.u0.grid != self.grid:
                raise ValueError("initial field lives on another grid")
            return self.u0
        if isinstance(self.u0, str):
            return initial_field(self.grid, self.u0, **self.initial_options)
        return self.u0(self.grid)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class SimulationResult:
    trace: NormTrace
    snapshots: list[np.ndarray] | None
    final: Field


def simulate(config: SimulationConfig) -> SimulationResult:
    """March to ``T`` (or blow-up), recording ``L^s`` norms every ``record_every`` steps."""
    u0 = config.initial()
    grid = config.grid
    state = IntegratorState(u0, config.operator, config.td, config.dt, capacity=config.steps + 1)
    if config.check_stability and state.mode == "explicit":
        bound = stability_bound(config.operator, grid, u0.values, config.c_stab)
        if 1.0 / state.a0 > bound * (1 + 1e-12):
            raise StabilityError(
                f"effective step 1/a0 = {1.0 / state.a0:.4g} exceeds the explicit stability bound "
                f"c_stab*h^order/scale = {bound:.4g} (order {ops.differential_order(config.operator)})"
            )

    s_list = [float(s) for s in config.s_list]
    times = [0.0]
    norms = {s: [lp_norm(state.u, s, grid)] for s in s_list}
    snaps = [state.u.reshape(grid.shape).copy()] if config.keep_snapshots else None
    blow = None
    for _ in range(config.steps):
        try:
            state.advance()
        except FloatingPointError as exc:
            blow = BlowUp(state.k + 1, (state.k + 1) * config.dt, str(exc))
            break
        if state.k % config.record_every == 0:
            times.append(state.time)
            for s in s_list:
                norms[s].append(lp_norm(state.u, s, grid))
            if snaps is not None:
                snaps.append(state.u.reshape(grid.shape).copy())
    trace = NormTrace(np.array(times), norms, blow, config.dt, config.record_every)
    return SimulationResult(trace, snaps, state.field())
