import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdecay import operators as ops
from fracdecay.barriers import mittag_leffler
from fracdecay.decay import loglog_slope
from fracdecay.grid import Field, Grid, eigenfunction, lp_norm, random_field
from fracdecay.integrator import (IntegratorState, L1History, SimulationConfig, StabilityError, TimeDerivativeSpec,
                                  caputo_apply, caputo_series, initial_field, l1_weights, mixed_derivative_series,
                                  simulate, stability_bound, step, treatment)


class TestCaputo:
    def test_constant_history(self):
        assert caputo_apply(np.full(30, 4.2), 0.6) == 0.0

    def test_linear_history_unnormalized(self):
        assert caputo_apply(np.linspace(0, 1, 11), 0.5, "paper", dt=0.1) == pytest.approx(2.0, rel=1e-13)

    def test_linear_history_standard(self):
        val = caputo_apply(np.linspace(0, 1, 11), 0.5, "standard", dt=0.1)
        assert val == pytest.approx(2 / math.sqrt(math.pi), rel=1e-13)
        assert round(val, 5) == 1.12838

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10**6), alpha=st.floats(0.05, 0.95), a=st.floats(-5, 5), b=st.floats(-5, 5),
           k=st.integers(1, 40))
    def test_linear_in_history(self, seed, alpha, a, b, k):
        rng = np.random.default_rng(seed)
        f, g = rng.normal(size=(2, k + 1))
        lhs = caputo_apply(a * f + b * g, alpha, dt=0.3)
        rhs = a * caputo_apply(f, alpha, dt=0.3) + b * caputo_apply(g, alpha, dt=0.3)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_weights_positive_decreasing(self):
        b = l1_weights(200, 0.4)
        assert b[0] == 1.0
        assert np.all(b > 0) and np.all(np.diff(b) < 0)

    def test_series_matches_pointwise(self):
        v = np.cos(np.linspace(0, 3, 25))
        s = caputo_series(v, 0.3, 0.125)
        for k in (1, 7, 24):
            assert s[k - 1] == pytest.approx(caputo_apply(v[: k + 1], 0.3, dt=0.125), rel=1e-13)

    def test_array_history(self):
        hist = np.random.default_rng(0).normal(size=(6, 3, 2))
        out = caputo_apply(hist, 0.5)
        assert out.shape == (3, 2)
        assert out[1, 0] == pytest.approx(caputo_apply(hist[:, 1, 0], 0.5))

    def test_needs_two_entries(self):
        with pytest.raises(ValueError):
            caputo_apply([1.0], 0.5)
        with pytest.raises(ValueError):
            caputo_apply([1.0, 2.0], 1.0)

    def test_history_buffer_agrees(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(12, 4))
        hist = L1History(0.35, 4, 11)
        for k in range(1, 12):
            hist.push(values[k] - values[k - 1])
            # tail_sum covers every increment except the one the next step will create
            direct = caputo_apply(np.vstack([values[: k + 1], values[k]]), 0.35, "paper", dt=1.0)
            assert np.allclose(hist.tail_sum() / (1 - 0.35), direct, rtol=1e-12, atol=1e-14)

    def test_mixed_series(self):
        td = TimeDerivativeSpec(0.25, 0.75, 0.4, "standard")
        v = np.exp(-np.linspace(0, 2, 41))
        dt = 0.05
        expected = 0.25 * caputo_series(v, 0.4, dt, "standard") + 0.75 * np.diff(v) / dt
        assert np.allclose(mixed_derivative_series(v, td, dt), expected, rtol=1e-14)


class TestTimeDerivativeSpec:
    @pytest.mark.parametrize("args", [(0.5, 0.6), (-0.1, 1.1), (0.5, 0.5, 1.0), (0.5, 0.5, 0.5, "other")])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            TimeDerivativeSpec(*args)

    def test_leading_weight(self):
        td = TimeDerivativeSpec(0.5, 0.5, 0.5)
        dt = 0.01
        assert td.leading_weight(dt) == pytest.approx(0.5 * dt**-0.5 / 0.5 + 0.5 / dt)


class TestStep:
    def test_implicit_heat_step_on_eigenfunction(self):
        g = Grid.interval(49)
        f = eigenfunction(g)
        dt = 1e-3
        st_ = IntegratorState(f, ops.Laplacian(), TimeDerivativeSpec(0.0, 1.0), dt)
        new = step(st_)
        factor = 1 / (1 + dt * g.first_eigenvalue())
        assert np.max(np.abs(new.values - factor * f.values)) < 1e-13

    def test_identity_operator_follows_mittag_leffler(self):
        g = Grid.interval(3)
        td = TimeDerivativeSpec(1.0, 0.0, 0.5, "standard")
        cfg = SimulationConfig(g, ops.MatrixOperator(np.eye(3)), td, Field(g, np.ones(3)), dt=1e-3, T=5.0)
        tr = simulate(cfg).trace
        v = tr[2.0] / tr[2.0][0]
        for t in (0.1, 0.5, 1.0, 2.0, 5.0):
            i = int(round(t / 1e-3))
            ref = mittag_leffler(0.5, -(t**0.5))
            assert abs(v[i] - ref) / ref < 0.02

    @pytest.mark.parametrize("op", [ops.Laplacian(), ops.PLaplacianPower(3.0, 1.0), ops.KirchhoffClassical(0.0, 1.0),
                                    ops.FractionalPLaplacian(0.4, 3.0)], ids=lambda o: type(o).__name__)
    def test_zero_stays_zero(self, op):
        g = Grid.interval(15)
        cfg = SimulationConfig(g, op, TimeDerivativeSpec(0.5, 0.5), "zero", dt=1e-4, T=1e-2, s_list=(1.0, 2.0))
        res = simulate(cfg)
        assert all(np.all(v == 0) for v in res.trace.norms.values())
        assert np.all(res.final.values == 0)

    def test_step_rejects_other_parameters(self):
        g = Grid.interval(5)
        st_ = IntegratorState(eigenfunction(g), ops.Laplacian(), TimeDerivativeSpec(0.0, 1.0), 0.1)
        with pytest.raises(ValueError):
            step(st_, dt=0.2)

    def test_treatments(self):
        assert treatment(ops.Laplacian()) == "implicit"
        assert treatment(ops.FractionalPLaplacian(0.5, 2.0)) == "implicit"
        assert treatment(ops.KirchhoffFractional(0.5, 0.0, 1.0)) == "semi-implicit"
        assert treatment(ops.PorousMediumII(0.25)) == "explicit"

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), dt=st.floats(1e-5, 1.0), dim=st.sampled_from([1, 2]))
    def test_implicit_heat_preserves_nonnegativity(self, seed, dt, dim):
        g = Grid.interval(30) if dim == 1 else Grid.square(8)
        f = Field(g, np.abs(random_field(g, seed).real))
        st_ = IntegratorState(f, ops.Laplacian(), TimeDerivativeSpec(0.0, 1.0), dt)
        assert np.all(step(st_).real >= 0)


class TestSimulate:
    def test_classical_heat_slope(self):
        g = Grid.interval(199)
        cfg = SimulationConfig(g, ops.Laplacian(), TimeDerivativeSpec(0.0, 1.0), "eigenfunction", dt=1e-4, T=1.0,
                               record_every=10)
        tr = simulate(cfg).trace
        sel = tr.times >= 0.1
        slope = np.polyfit(tr.times[sel], np.log(tr[2.0][sel]), 1)[0]
        assert abs(slope + np.pi**2) / np.pi**2 < 0.03

    def test_caputo_heat_slope(self):
        g = Grid.interval(49)
        cfg = SimulationConfig(g, ops.Laplacian(), TimeDerivativeSpec(1.0, 0.0, 0.5), "eigenfunction", dt=0.05,
                               T=100.0, record_every=4)
        tr = simulate(cfg).trace
        assert abs(loglog_slope(tr, 2.0, 10, 100) + 0.5) < 0.1

    @pytest.mark.parametrize("op,td,u0,dt,T", [
        (ops.Laplacian(), TimeDerivativeSpec(0.5, 0.5, 0.3), "indicator", 0.01, 2.0),
        (ops.FractionalLaplacian(0.4), TimeDerivativeSpec(0.0, 1.0), "random", 0.01, 1.0),
        (ops.KirchhoffClassical(0.0, 1.0), TimeDerivativeSpec(0.0, 1.0), "bump", 0.01, 5.0),
        (ops.PorousMediumII(0.25), TimeDerivativeSpec(0.0, 1.0), "bump", None, 0.2),
        (ops.FractionalPLaplacian(0.4, 3.0), TimeDerivativeSpec(0.5, 0.5, 0.5), "bump", None, 0.05),
    ], ids=["heat-mixed", "frac-classical", "kirchhoff", "porous", "frac-p-mixed"])
    def test_norms_do_not_grow(self, op, td, u0, dt, T):
        g = Grid.interval(39)
        if dt is None:
            # lam2/dt alone already makes 1/a0 <= bound
            dt = td.lam2 * stability_bound(op, g, initial_field(g, u0).values)
        cfg = SimulationConfig(g, op, td, u0, dt=dt, T=T, s_list=(1.0, 2.0, 4.0))
        tr = simulate(cfg).trace
        assert tr.blow_up is None
        for v in tr.norms.values():
            assert np.all(v[1:] <= v[:-1] * (1 + 1e-10))

    def test_stability_error_names_bound(self):
        g = Grid.interval(49)
        cfg = SimulationConfig(g, ops.PLaplacianPower(3.0, 1.0), TimeDerivativeSpec(0.0, 1.0), "bump", dt=0.01, T=1.0)
        with pytest.raises(StabilityError, match="stability bound"):
            simulate(cfg)

    def test_blow_up_returns_partial_trace(self):
        g = Grid.interval(49)
        cfg = SimulationConfig(g, ops.PLaplacianPower(3.0, 1.0), TimeDerivativeSpec(0.0, 1.0), "bump", dt=0.01,
                               T=50.0, check_stability=False)
        tr = simulate(cfg).trace
        assert tr.blow_up is not None
        assert tr.times.size < 5001
        assert np.all(np.isfinite(tr[2.0]))

    def test_deterministic(self):
        g = Grid.interval(29)
        cfg = SimulationConfig(g, ops.FractionalPLaplacian(0.3, 2.5), TimeDerivativeSpec(0.3, 0.7, 0.6), "random",
                               dt=2e-4, T=0.02, s_list=(2.0, 3.0), initial_options=dict(seed=9))
        a, b = simulate(cfg).trace, simulate(cfg).trace
        for s in (2.0, 3.0):
            assert np.array_equal(a[s], b[s])

    def test_caputo_norm_inequality_on_complex_trajectory(self):
        # ||u||^{s-1} D^a ||u|| <= int |u|^{s-2} Re{conj(u) D^a u}, both from the stored history
        g = Grid.interval(31)
        alpha = 0.4
        for op, s in ((ops.Magnetic(1.5), 2.0), (ops.FractionalMagnetic(0.5, 1.0), 3.0)):
            cfg = SimulationConfig(g, op, TimeDerivativeSpec(1.0, 0.0, alpha), "random_complex", dt=0.01, T=0.5,
                                   keep_snapshots=True)
            snaps = np.array(simulate(cfg).snapshots)
            norms = np.array([lp_norm(u, s, g) for u in snaps])
            for k in range(1, len(snaps)):
                d_norm = caputo_apply(norms[: k + 1], alpha, dt=0.01)
                d_u = caputo_apply(snaps[: k + 1], alpha, dt=0.01)
                u = snaps[k]
                rhs = np.sum(np.abs(u) ** (s - 2) * (np.conj(u) * d_u).real) * g.cell_volume
                lhs = norms[k] ** (s - 1) * d_norm
                assert lhs <= rhs + 1e-10 * abs(rhs)
