"""Decay of solutions to diffusion equations with a mixed Caputo/classical time derivative."""

from .barriers import BarrierSpec, barrier_eval, check_comparison, mittag_leffler, solve_scalar_ode
from .decay import NotCovered, PredictedDecay, fit_decay, predicted_rate, verify_bound
from .grid import Field, Grid, lp_norm
from .inequalities import check_identity, structural_check
from .integrator import (NormTrace, SimulationConfig, StabilityError, TimeDerivativeSpec, caputo_apply,
                         simulate, step)
from .operators import apply, gagliardo_seminorm_sq

__all__ = [
    "BarrierSpec", "Field", "Grid", "NormTrace", "NotCovered", "PredictedDecay", "SimulationConfig",
    "StabilityError", "TimeDerivativeSpec", "apply", "barrier_eval", "caputo_apply", "check_comparison",
    "check_identity", "fit_decay", "gagliardo_seminorm_sq", "lp_norm", "mittag_leffler", "predicted_rate",
    "simulate", "solve_scalar_ode", "step", "structural_check", "verify_bound",
]
