import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracdecay.grid import (Field, Grid, bump, eigenfunction, gradient_sq_norm, inner, lp_norm, random_field,
                            smoothed_indicator)


def test_grid_geometry():
    g = Grid.interval(99)
    assert g.h == (0.01,)
    assert g.axes()[0][0] == pytest.approx(0.01)
    assert g.axes()[0][-1] == pytest.approx(0.99)
    sq = Grid.square(7, 0.0, 2.0)
    assert sq.shape == (7, 7) and sq.size == 49
    assert sq.cell_volume == pytest.approx(0.0625)
    assert sq.points().shape == (49, 2)
    assert sq.padded_points().shape == (81, 2)


def test_refine_keeps_nodes():
    g = Grid.interval(9)
    r = g.refine()
    assert r.n == (19,)
    assert np.allclose(r.axes()[0][1::2], g.axes()[0])


@pytest.mark.parametrize("bad", [dict(extent=((0, 1),), n=(2,)), dict(extent=((1, 0),), n=(5,)),
                                 dict(extent=((0, 1),) * 3, n=(5,) * 3)])
def test_grid_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


def test_field_is_read_only_and_finite():
    g = Grid.interval(5)
    f = Field(g, np.arange(5.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        Field(g, [0, 1, np.nan, 0, 0])
    with pytest.raises(ValueError):
        Field(g, np.zeros(4))


def test_exterior_access_is_zero():
    g = Grid.square(4)
    f = Field(g, np.ones(g.shape))
    for idx in [(0, 1), (5, 2), (2, 0), (-3, 9)]:
        assert f.at(idx) == 0
    assert f.at((1, 1)) == 1
    assert np.all(f.padded()[0] == 0) and np.all(f.padded()[:, -1] == 0)


class TestLpNorm:
    def test_zero_field(self):
        g = Grid.interval(10)
        for s in (1, 2, 3.5):
            assert lp_norm(Field.zeros(g), s) == 0.0

    def test_constant(self):
        g = Grid.interval(99)
        assert lp_norm(Field(g, np.ones(99)), 2) == pytest.approx(np.sqrt(0.99), rel=1e-15)

    def test_sine_converges_to_half_root(self):
        errs = []
        for n in (49, 99, 199):
            errs.append(abs(lp_norm(eigenfunction(Grid.interval(n)), 2) - np.sqrt(0.5)))
        # midpoint sum of sin^2 is exact: (n+1)h/2 with h = 1/(n+1)
        assert max(errs) < 1e-14

    def test_rejects_small_s(self):
        with pytest.raises(ValueError):
            lp_norm(Field.zeros(Grid.interval(5)), 0.5)

    def test_large_s_does_not_overflow(self):
        g = Grid.interval(20)
        f = Field(g, np.full(20, 1e200))
        assert np.isfinite(lp_norm(f, 8))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), c=st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
           s=st.floats(1, 8))
    def test_absolute_homogeneity(self, seed, c, s):
        f = random_field(Grid.interval(30), seed, complex_valued=True)
        assert lp_norm(f * c, s) == pytest.approx(abs(c) * lp_norm(f, s), rel=1e-12, abs=1e-300)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), s=st.floats(1, 6), ds=st.floats(0.01, 4), dim=st.sampled_from([1, 2]))
    def test_hoelder_consistency(self, seed, s, ds, dim):
        g = Grid.interval(25, 0, 3.0) if dim == 1 else Grid.square(9, 0, 2.0)
        f = random_field(g, seed)
        t = s + ds
        assert lp_norm(f, s) <= lp_norm(f, t) * g.volume ** (1 / s - 1 / t) * (1 + 1e-12)


class TestGradient:
    def test_zero(self):
        assert gradient_sq_norm(Field.zeros(Grid.interval(7))) == 0.0

    def test_constant_only_boundary_edges(self):
        g = Grid.interval(9)
        c = 3.0
        h = g.h[0]
        assert gradient_sq_norm(Field(g, np.full(9, c))) == pytest.approx(2 * (c / h) ** 2 * h, rel=1e-14)

    def test_sine_converges(self):
        errs = [abs(gradient_sq_norm(eigenfunction(Grid.interval(n))) - np.pi**2 / 2) for n in (49, 99, 199)]
        assert errs[-1] < 1e-3
        assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), dim=st.sampled_from([1, 2]), n=st.integers(3, 30))
    def test_discrete_poincare(self, seed, dim, n):
        g = Grid.interval(n) if dim == 1 else Grid.square(min(n, 12))
        f = random_field(g, seed, smoothness=seed % 4, complex_valued=bool(seed % 2))
        assert lp_norm(f, 2) ** 2 <= gradient_sq_norm(f) / g.first_eigenvalue() * (1 + 1e-12)

    def test_poincare_equality_on_eigenfunction(self):
        for g in (Grid.interval(37), Grid.square(11)):
            f = eigenfunction(g)
            assert lp_norm(f, 2) ** 2 * g.first_eigenvalue() == pytest.approx(gradient_sq_norm(f), rel=1e-12)


class TestGenerators:
    def test_random_field_deterministic(self):
        g = Grid.square(6)
        a = random_field(g, 11, 2, complex_valued=True)
        b = random_field(g, 11, 2, complex_valued=True)
        assert np.array_equal(a.values, b.values)

    def test_raw_noise_range(self):
        v = random_field(Grid.interval(1000), 1).real
        assert v.min() >= -1 and v.max() <= 1 and v.min() < -0.9 and v.max() > 0.9

    def test_smoothing_reduces_laplacian(self):
        g = Grid.interval(64)

        def lap_mag(f):
            p = np.pad(f.real, 1)
            return np.mean(np.abs(p[2:] - 2 * p[1:-1] + p[:-2]))

        means = [np.mean([lap_mag(random_field(g, seed, k)) for seed in range(20)]) for k in range(5)]
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_bump_and_indicator_support(self):
        g = Grid.interval(99)
        b = bump(g)
        x = g.axes()[0]
        assert np.all(b.real[np.abs(x - 0.5) >= 0.35] == 0)
        assert b.real.max() == pytest.approx(1.0, abs=1e-3)
        ind = smoothed_indicator(g)
        assert np.all(ind.real[(x < 0.2) | (x > 0.8)] == 0)
        assert np.all(ind.real[(x > 0.3) & (x < 0.7)] == pytest.approx(1.0))

    def test_inner_product(self):
        g = Grid.interval(50)
        f = random_field(g, 3, complex_valued=True)
        assert inner(f, f).real == pytest.approx(lp_norm(f, 2) ** 2)
        assert inner(f, f).imag == pytest.approx(0.0, abs=1e-15)
