import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from fracdecay.barriers import (BarrierSpec, ScalarTrajectory, barrier_eval, barrier_trajectory, check_comparison,
                                discrete_residual, mittag_leffler, solve_scalar_ode)
from fracdecay.integrator import caputo_apply


def ml_reference(alpha, x):
    """E_alpha(x) by Talbot inversion of the Laplace transform s^(alpha-1)/(s^alpha+1)."""
    t = (-x) ** (1 / alpha)
    with mpmath.workdps(30):
        return float(mpmath.invertlaplace(lambda s: s ** (alpha - 1) / (s**alpha + 1), t, method="talbot"))


class TestMittagLeffler:
    def test_origin(self):
        for a in (0.1, 0.5, 0.9, 1.0):
            assert mittag_leffler(a, 0.0) == 1.0

    def test_exponential_case(self):
        assert mittag_leffler(1.0, -1.0) == pytest.approx(math.exp(-1), rel=1e-15)

    def test_half_at_minus_one(self):
        val = mittag_leffler(0.5, -1.0)
        assert round(val, 5) == 0.42758
        assert val == pytest.approx(math.e * math.erfc(1.0), rel=1e-13)

    @pytest.mark.parametrize("z", [0.01, 0.3, 0.99, 1.01, 2.0, 5.0, 17.0, 80.0])
    def test_half_order_closed_form(self, z):
        assert mittag_leffler(0.5, -z) == pytest.approx(special.erfcx(z), rel=1e-9)

    @pytest.mark.parametrize("alpha", [0.2, 0.35, 0.6, 0.8, 0.95])
    @pytest.mark.parametrize("x", [-0.5, -1.5, -4.0, -9.0])
    def test_against_laplace_inversion(self, alpha, x):
        assert mittag_leffler(alpha, x) == pytest.approx(ml_reference(alpha, x), rel=1e-11)

    @pytest.mark.parametrize("alpha,t_min", [(0.3, 500.0), (0.5, 50.0), (0.7, 50.0)])
    def test_power_law_tail(self, alpha, t_min):
        # the next term of the expansion is t^(-alpha) smaller; at alpha = 0.3 it is 16% at t = 50
        for t in (t_min, 4 * t_min, 20 * t_min):
            val = t**alpha * mittag_leffler(alpha, -(t**alpha))
            assert abs(val * math.gamma(1 - alpha) - 1) < 0.1

    def test_domain(self):
        with pytest.raises(ValueError):
            mittag_leffler(0.5, 1.0)
        with pytest.raises(ValueError):
            mittag_leffler(1.5, -1.0)

    @settings(max_examples=50, deadline=None)
    @given(alpha=st.floats(0.1, 0.99), x=st.floats(0, 30))
    def test_monotone_and_bounded(self, alpha, x):
        a, b = mittag_leffler(alpha, -x), mittag_leffler(alpha, -x - 0.5)
        assert 0 <= b <= a <= 1


class TestBarrierValues:
    def test_mixed_example(self):
        spec = BarrierSpec("mixed_vz15", u0=1.0, nu=1.0, gamma=1.0, alpha=0.5)
        assert spec.t0 == pytest.approx(1.92626, abs=5e-6)
        assert barrier_eval(spec, 3.0) == pytest.approx((spec.t0 / 3) ** 0.5, rel=1e-14)
        assert barrier_eval(spec, 3.0) == pytest.approx(0.80131, abs=1e-5)
        assert barrier_eval(spec, 1.0) == 1.0

    def test_exponential_gamma_one(self):
        spec = BarrierSpec("classical_exp", u0=2.0, nu=0.5, gamma=1.0)
        t = np.linspace(0, 10, 41)
        assert spec.t0 == 0.0
        assert np.allclose(barrier_eval(spec, t), 2.0 * np.exp(-t / 2.0), rtol=1e-15)

    def test_power_gamma_two(self):
        for v0 in (0.5, 3.0):
            spec = BarrierSpec("classical_power", u0=v0, nu=1.0, gamma=2.0)
            w0 = max(v0, 1.0)
            assert spec.w0 == w0
            assert barrier_eval(spec, 0.5) == w0
            assert barrier_eval(spec, 4.0) == pytest.approx(w0 / 4.0, rel=1e-15)

    def test_exponential_sublinear_branch(self):
        # below 1 the first piece solves w' = -w^gamma / C exactly
        spec = BarrierSpec("classical_exp", u0=1.0, nu=1.0, gamma=0.5)
        t = np.linspace(0, spec.t0, 20)
        expected = (1.0 - 0.5 * t) ** 2
        assert np.allclose(barrier_eval(spec, t), expected, rtol=1e-13)

    @settings(max_examples=80, deadline=None)
    @given(kind=st.sampled_from(["mixed_vz15", "classical_exp", "classical_power"]), u0=st.floats(0.05, 20),
           nu=st.floats(0.05, 20), gamma=st.floats(0.2, 4), alpha=st.floats(0.05, 0.95))
    def test_continuous_at_switch(self, kind, u0, nu, gamma, alpha):
        if kind == "classical_exp":
            gamma = min(gamma, 1.0)
        if kind == "classical_power":
            gamma = 1.0 + gamma
        spec = BarrierSpec(kind, u0, nu, gamma, alpha if kind == "mixed_vz15" else None)
        t0 = spec.t0 if kind != "classical_power" else 1.0
        left = barrier_eval(spec, t0)
        right = barrier_eval(spec, np.nextafter(t0, np.inf))
        assert abs(left - right) <= 1e-12 * max(1.0, abs(left))

    def test_rejects_bad_specs(self):
        for args in (("nope", 1, 1, 1), ("mixed_vz15", 1, 1, 1), ("classical_exp", 1, 1, 2.0),
                     ("classical_power", 1, 1, 1.0), ("mixed_vz15", -1, 1, 1, 0.5)):
            with pytest.raises(ValueError):
                BarrierSpec(*args)
        with pytest.raises(ValueError):
            barrier_eval(BarrierSpec("classical_exp", 1, 1, 1), -1.0)


class TestScalarODE:
    def test_classical_linear(self):
        tr = solve_scalar_ode(0.0, 1.0, 0.5, 1.0, 1.0, 1.0, 5.0, 1e-4)
        assert np.max(np.abs(tr.values - np.exp(-tr.times))) < 1e-4

    def test_mittag_leffler_oracle(self):
        tr = solve_scalar_ode(1.0, 0.0, 0.5, 1.0, 1.0, 1.0, 5.0, 1e-3, "standard")
        sel = tr.times >= 0.1
        ref = np.array([mittag_leffler(0.5, -(t**0.5)) for t in tr.times[sel]])
        assert np.max(np.abs(tr.values[sel] - ref) / ref) < 0.02

    def test_zero_initial_value(self):
        tr = solve_scalar_ode(0.5, 0.5, 0.4, 2.0, 3.0, 0.0, 2.0, 0.01)
        assert np.all(tr.values == 0)

    def test_residual_vanishes_on_own_solution(self):
        tr = solve_scalar_ode(0.3, 0.7, 0.6, 1.5, 2.5, 0.8, 3.0, 0.01)
        assert np.max(np.abs(discrete_residual(tr))) < 1e-10

    def test_sublinear_reaches_zero_and_stays(self):
        tr = solve_scalar_ode(0.0, 1.0, 0.5, 1.0, 0.5, 1.0, 4.0, 0.01)
        hit = np.argmax(tr.values == 0)
        assert hit > 0 and np.all(tr.values[hit:] == 0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6), alpha=st.floats(0.05, 0.95), k=st.integers(1, 30))
    def test_caputo_nonpositive_at_a_zero(self, seed, alpha, k):
        # a nonnegative history that sits at zero has nonpositive Caputo derivative there
        v = np.abs(np.random.default_rng(seed).normal(size=k + 1))
        v[-1] = 0.0
        assert caputo_apply(v, alpha) <= 0.0

    def test_rejects(self):
        with pytest.raises(ValueError):
            solve_scalar_ode(0.5, 0.6, 0.5, 1, 1, 1, 1, 0.1)
        with pytest.raises(ValueError):
            solve_scalar_ode(0.5, 0.5, 0.5, 1, 1, -1, 1, 0.1)


class TestComparison:
    def test_mixed_barrier_dominates(self):
        spec = BarrierSpec("mixed_vz15", 1.0, 1.0, 2.0, 0.5)
        v = solve_scalar_ode(0.5, 0.5, 0.5, 1.0, 2.0, 0.9, 20.0, 0.01, "standard")
        w = barrier_trajectory(spec, v.times, 0.5, 0.5)
        rep = check_comparison(w, v)
        assert rep.is_super and rep.ordered and rep.is_sub

    def test_shifted_solution_is_strict_supersolution(self):
        v = solve_scalar_ode(0.0, 1.0, 0.5, 1.0, 1.0, 1.0, 5.0, 0.01)
        w = ScalarTrajectory(v.times, v.values + 0.1, 0.0, 1.0, 0.5, 1.0, 1.0)
        rep = check_comparison(w, v)
        assert rep.is_super and rep.ordered
        assert rep.worst_super_residual > 0.05

    def test_violated_hypothesis_is_reported_not_blamed(self):
        spec = BarrierSpec("mixed_vz15", 1.0, 1.0, 1.0, 0.5)
        v = solve_scalar_ode(0.5, 0.5, 0.5, 1.0, 1.0, 2.0, 5.0, 0.01, "standard")
        rep = check_comparison(barrier_trajectory(spec, v.times, 0.5, 0.5), v)
        assert not rep.hypothesis and not rep.ordered
        assert rep.is_super

    @pytest.mark.parametrize("gamma", [0.3, 0.7, 1.0])
    def test_classical_exponential_barrier(self, gamma):
        spec = BarrierSpec("classical_exp", 1.0, 2.0, gamma)
        v = solve_scalar_ode(0.0, 1.0, 0.5, 2.0, gamma, 0.95, 10.0, 1e-3)
        rep = check_comparison(barrier_trajectory(spec, v.times, 0.0, 1.0), v)
        assert rep.is_super and rep.ordered

    @pytest.mark.parametrize("gamma", [1.5, 2.0, 3.0])
    def test_classical_power_barrier(self, gamma):
        spec = BarrierSpec("classical_power", 1.0, 1.0, gamma)
        v = solve_scalar_ode(0.0, 1.0, 0.5, 1.0, gamma, 0.95, 50.0, 1e-2)
        rep = check_comparison(barrier_trajectory(spec, v.times, 0.0, 1.0), v)
        assert rep.is_super and rep.ordered

    def test_time_grids_must_match(self):
        v = solve_scalar_ode(0.0, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.1)
        w = solve_scalar_ode(0.0, 1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.05)
        with pytest.raises(ValueError):
            check_comparison(w, v)
