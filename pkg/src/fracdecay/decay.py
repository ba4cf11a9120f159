"""Predicted decay laws, fitted decay laws and upper-bound verification for norm traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import operators as ops
from .integrator import NormTrace, TimeDerivativeSpec, mixed_derivative_series


@dataclass(frozen=True)
class PredictedDecay:
    """``Theta(t) = 1/(1 + t^exponent)`` (polynomial) or ``exp(-rate t)`` (exponential).

    For exponential laws the rate is the unknown ``1/C``; ``rate`` is None
    unless it has been supplied.
    """

    kind: str
    exponent: float | None
    gamma: float
    source: str
    rate: float | None = None

    covered = True

    def theta(self, t, rate: float | None = None) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "polynomial":
            return 1.0 / (1.0 + t**self.exponent)
        r = self.rate if rate is None else rate
        if r is None:
            raise ValueError("exponential law needs a rate")
        return np.exp(-r * t)


@dataclass(frozen=True)
class NotCovered:
    """No decay theorem applies to this (operator, time derivative, s) combination."""

    reason: str

    covered = False
    kind = "not_covered"


def structural_exponent(op, s: float = 2.0, dim: int = 1) -> tuple[float, str] | NotCovered:
    """Exponent ``gamma`` of the structural inequality for ``op``, with a short provenance tag."""
    if isinstance(op, (ops.Laplacian, ops.FractionalLaplacian)):
        return 1.0, "linear diffusion, coercive energy"
    if isinstance(op, (ops.Magnetic, ops.FractionalMagnetic)):
        return 1.0, "magnetic diffusion, diamagnetic inequality"
    if isinstance(op, ops.AnisotropicFractional):
        return 1.0, "anisotropic fractional diffusion"
    if isinstance(op, (ops.MeanCurvature, ops.FractionalMeanCurvature)):
        return 1.0, "graphical mean curvature"
    if isinstance(op, ops.PLaplacianPower):
        return op.m * (op.p - 1), "p-Laplacian of u^m, gamma = m(p-1)"
    if isinstance(op, ops.FractionalPLaplacian):
        return op.p - 1, "fractional p-Laplacian, gamma = p-1"
    if isinstance(op, ops.SumFractionalPLaplacians):
        pmax = max(p for _, _, p in op.terms)
        return pmax - 1, "superposed fractional p-Laplacians, gamma = p_max-1"
    if isinstance(op, ops.PorousMediumI):
        return op.m, "fractional porous medium (-Delta)^sigma u^m, gamma = m"
    if isinstance(op, ops.PorousMediumII):
        if not s > 1:
            return NotCovered("porous medium with Riesz pressure needs s > 1")
        if not dim > 2 * op.sigma:
            return NotCovered("porous medium with Riesz pressure needs dim > 2 sigma")
        return 2.0, "porous medium with Riesz pressure, gamma = 2"
    if isinstance(op, (ops.KirchhoffClassical, ops.KirchhoffFractional)):
        if not op.degenerate:
            return 1.0, "non-degenerate Kirchhoff"
        order = 4.0 if isinstance(op, ops.KirchhoffClassical) else 4.0 * op.sigma
        if dim <= order or s <= 2 * dim / (dim - order):
            return 3.0, "degenerate Kirchhoff, gamma = 3"
        return NotCovered(f"degenerate Kirchhoff needs s <= 2n/(n-{order:g}) when n > {order:g}")
    return NotCovered(f"no decay theorem for {type(op).__name__}")


def predicted_rate(op, td: TimeDerivativeSpec, s: float = 2.0, dim: int = 1) -> PredictedDecay | NotCovered:
    """Decay law guaranteed for ``op`` under the mixed derivative ``td`` in ``L^s``.

    Fractional-in-time runs always decay polynomially with exponent
    ``alpha/gamma``; purely classical runs decay exponentially when
    ``gamma <= 1`` and with exponent ``1/(gamma-1)`` otherwise.
    """
    if not s >= 1:
        raise ValueError("s must be >= 1")
    got = structural_exponent(op, s, dim)
    if isinstance(got, NotCovered):
        return got
    gamma, tag = got
    if td.lam1 > 0:
        return PredictedDecay("polynomial", td.alpha / gamma, gamma, f"{tag}; mixed derivative, t^(-alpha/gamma)")
    if gamma <= 1:
        return PredictedDecay("exponential", None, gamma, f"{tag}; classical derivative, exp(-t/C)")
    return PredictedDecay("polynomial", 1.0 / (gamma - 1), gamma, f"{tag}; classical derivative, t^(-1/(gamma-1))")


@dataclass(frozen=True)
class DecayFit:
    kind: str
    exponent: float | None
    rate: float | None
    constant: float
    residual: float
    window: tuple[float, float]
    other_residual: float

    def model(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "polynomial":
            return self.constant / (1.0 + t**self.exponent)
        return self.constant * np.exp(-self.rate * t)


def _window(trace: NormTrace, s: float, window) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
    t = trace.times
    n = trace[s]
    pos = t > 0
    if not np.any(pos):
        raise ValueError("trace has no positive times")
    if window is None or window == "last_half_log":
        lo, hi = float(np.sqrt(t[pos][0] * t[-1])), float(t[-1])
    elif window == "all":
        lo, hi = float(t[pos][0]), float(t[-1])
    else:
        lo, hi = (float(x) for x in window)
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12)) & pos
    return t[sel], n[sel], (lo, hi)


def fit_decay(trace: NormTrace, s: float = 2.0, window=None, prefer: str | None = None,
              min_points: int = 20) -> DecayFit:
    """Fit ``C/(1+t^p)`` and ``C exp(-r t)`` in log space over ``window`` and keep the better one.

    ``window`` is ``"last_half_log"`` (default: ``[sqrt(t_1 T), T]``), ``"all"`` or
    a pair ``(t_lo, t_hi)``.  With ``prefer`` set, the other kind must beat it
    by more than 10% in RMS residual to be chosen.
    """
    t, n, (lo, hi) = _window(trace, s, window)
    if t.size < min_points:
        raise ValueError(f"fit window [{lo:g}, {hi:g}] holds {t.size} points, need {min_points}")
    if not np.all(n > 0) or not np.all(np.isfinite(n)):
        raise ValueError("norms must be positive and finite inside the fit window")
    y = np.log(n)

    slope, icpt = np.polyfit(t, y, 1)
    exp_res = float(np.sqrt(np.mean((icpt + slope * t - y) ** 2)))
    exp_fit = (float(-slope), float(np.exp(icpt)))

    ll = np.polyfit(np.log(t), y, 1)[0]
    p0 = float(np.clip(-ll, 1e-3, 20.0))

    def resid(theta):
        return theta[0] - np.log1p(t ** theta[1]) - y

    c0 = float(np.mean(y + np.log1p(t**p0)))
    sol = optimize.least_squares(resid, [c0, p0], bounds=([-np.inf, 1e-6], [np.inf, 50.0]),
                                 x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    poly_res = float(np.sqrt(np.mean(sol.fun**2)))
    poly_fit = (float(sol.x[1]), float(np.exp(sol.x[0])))

    if prefer == "polynomial":
        choose_poly = not exp_res < 0.9 * poly_res
    elif prefer == "exponential":
        choose_poly = poly_res < 0.9 * exp_res
    elif prefer is None:
        choose_poly = poly_res < exp_res
    else:
        raise ValueError(f"unknown kind {prefer!r}")
    if choose_poly:
        return DecayFit("polynomial", poly_fit[0], None, poly_fit[1], poly_res, (lo, hi), exp_res)
    return DecayFit("exponential", None, exp_fit[0], exp_fit[1], exp_res, (lo, hi), poly_res)


def loglog_slope(trace: NormTrace, s: float, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of ``log ||u||_s`` against ``log t`` on ``[t_lo, t_hi]``."""
    t, n, _ = _window(trace, s, (t_lo, t_hi))
    if t.size < 2:
        raise ValueError("need at least two points in the window")
    return float(np.polyfit(np.log(t), np.log(n), 1)[0])


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    C_star_hat: float
    last_window_max: float
    previous_window_max: float
    rate: float | None
    ratios: np.ndarray

    def __bool__(self):
        return self.holds


def verify_bound(trace: NormTrace, predicted: PredictedDecay, s: float = 2.0, rate: float | None = None,
                 slack: float = 0.05) -> BoundCheck:
    """Estimate ``C* = max norm/Theta`` and check that the late-time ratio is not growing.

    The ratio's maximum over the last dyadic time window ``[T/2, T]`` must not
    exceed ``(1 + slack)`` times its maximum over ``[T/4, T/2]``; a bound that
    the solution outruns at late times fails this test.  Exponential laws
    without a known rate use the fitted exponential rate.
    """
    if isinstance(predicted, NotCovered):
        raise ValueError(f"no prediction to verify: {predicted.reason}")
    t = trace.times
    n = trace[s]
    if predicted.kind == "exponential":
        rate = rate if rate is not None else predicted.rate
        if rate is None:
            rate = fit_decay(trace, s, prefer="exponential").rate
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ratios = n / predicted.theta(t, rate)
    T = t[-1]
    last = (t >= T / 2)
    prev = (t >= T / 4) & (t < T / 2)
    finite = bool(np.all(np.isfinite(ratios)))
    c_hat = float(np.max(ratios)) if finite else float("inf")
    m_last = float(np.max(ratios[last])) if np.any(last) else float("nan")
    m_prev = float(np.max(ratios[prev])) if np.any(prev) else float("nan")
    holds = finite and np.isfinite(m_prev) and m_last <= (1 + slack) * m_prev
    return BoundCheck(bool(holds), c_hat, m_last, m_prev, rate, ratios)


@dataclass(frozen=True)
class DifferentialCheck:
    fraction: float
    residuals: np.ndarray
    rtol: float


def check_differential_inequality(trace: NormTrace, td: TimeDerivativeSpec, gamma: float, C: float,
                                  s: float = 2.0, rtol: float = 1e-8) -> DifferentialCheck:
    """Fraction of recorded nodes where ``(lam1 D^alpha + lam2 D) v <= -v^gamma / C`` holds.

    ``v`` is the recorded norm; the trace must record every step.  Residuals
    are scaled by ``v^gamma / C`` and compared against ``rtol``.
    """
    if trace.record_every != 1 or trace.dt is None:
        raise ValueError("the trace must record every step")
    v = trace[s]
    d = mixed_derivative_series(v, td, trace.dt)
    target = v[1:] ** gamma / C
    with np.errstate(divide="ignore", invalid="ignore"):
        res = np.where(target > 0, (d + target) / target, 0.0)
    return DifferentialCheck(float(np.mean(res <= rtol)), res, rtol)
