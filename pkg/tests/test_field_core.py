import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from wavelab.grid import (
    GridError,
    ScalarField,
    SpectralField,
    WraparoundError,
    apply_radial_multiplier,
    certify_support,
    check_window,
    forward_transform,
    inverse_transform,
    make_grid,
    measure_support_radius,
    norm,
    point_value,
    riesz_transform,
)
from wavelab.profiles import compact_bump, gaussian, tail_profile
from wavelab.radial import RadialField, make_radial_grid, spherical_average
from wavelab.report import compare_refinement, make_report


def _random_field(grid, rng, complex_=True):
    s = rng.standard_normal((grid.n,) * 3)
    if complex_:
        s = s + 1j * rng.standard_normal((grid.n,) * 3)
    return ScalarField(grid, s)


def _gauss(grid, sigma=1.0):
    return ScalarField.from_function(grid, lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (2 * sigma ** 2)))


class TestGrid:
    def test_spacing_and_frequency_step(self):
        g = make_grid(16, 64)
        assert g.h == 0.5
        assert g.dxi == pytest.approx(np.pi / 16)

    def test_small_lattice(self):
        g = make_grid(1, 8)
        assert np.allclose(np.sort(g.freq_axis) / np.pi, np.arange(-4, 4))

    @pytest.mark.parametrize("L, n", [(16, 63), (16, 6), (0, 8), (-1, 8)])
    def test_invalid(self, L, n):
        with pytest.raises(GridError):
            make_grid(L, n)

    def test_nyquist_row_unpaired(self):
        g = make_grid(2, 8)
        assert g.freq_axis.min() == pytest.approx(-g.nyquist)
        assert g.freq_axis.max() < g.nyquist


class TestTransforms:
    def test_round_trip(self, rng):
        g = make_grid(3, 16)
        f = _random_field(g, rng)
        back = inverse_transform(forward_transform(f)).samples
        assert np.abs(back - f.samples).max() <= 1e-12 * np.abs(f.samples).max()

    def test_plane_wave_single_coefficient(self):
        g = make_grid(np.pi, 16)
        xi0 = (2.0, -3.0, 1.0)
        f = ScalarField.from_function(g, lambda x, y, z: np.exp(1j * (xi0[0] * x + xi0[1] * y + xi0[2] * z)))
        c = np.abs(forward_transform(f).coefficients)
        assert np.count_nonzero(c > 1e-9 * c.max()) == 1
        idx = np.unravel_index(np.argmax(c), c.shape)
        assert tuple(g.freq_axis[i] for i in idx) == pytest.approx(xi0)

    def test_parseval(self, rng):
        g = make_grid(2.5, 16)
        f = _random_field(g, rng)
        F = forward_transform(f)
        spec = math.sqrt(np.sum(np.abs(F.coefficients) ** 2) * (g.dxi / (2 * np.pi)) ** 3)
        assert spec == pytest.approx(norm(f, 2), rel=1e-12)

    def test_continuum_normalization(self):
        # Gaussian: hat f(0) = (2 pi)^{3/2}
        g = make_grid(12, 48)
        F = forward_transform(_gauss(g))
        assert F.coefficients[0, 0, 0].real == pytest.approx((2 * np.pi) ** 1.5, rel=1e-10)

    def test_point_value_interpolates(self):
        g = make_grid(10, 48)
        F = forward_transform(_gauss(g))
        x = np.array([0.3, -0.7, 1.1])
        assert point_value(F, x).real == pytest.approx(math.exp(-x @ x / 2), abs=1e-10)


class TestMultipliers:
    def test_identity(self, rng):
        g = make_grid(2, 16)
        f = _random_field(g, rng)
        out = apply_radial_multiplier(f, lambda r: np.ones_like(r), 1.0)
        assert np.allclose(out.samples, f.samples, atol=1e-13)

    def test_square_on_plane_wave(self):
        g = make_grid(np.pi, 16)
        f = ScalarField.from_function(g, lambda x, y, z: np.exp(1j * (x + 2 * y)))
        out = apply_radial_multiplier(f, lambda r: r ** 2, 0.0)
        assert np.allclose(out.samples, 5 * f.samples, atol=1e-10)

    def test_heat_kernel_on_gaussian(self):
        # e^{-|xi|^2/2} convolves with a unit Gaussian: result 2^{-3/2} e^{-|x|^2/4}
        g = make_grid(14, 64)
        out = apply_radial_multiplier(_gauss(g), lambda r: np.exp(-r * r / 2), 1.0)
        ref = 2 ** -1.5 * np.exp(-g.radius ** 2 / 4)
        assert np.abs(out.samples - ref).max() < 1e-10

    def test_needs_zero_value(self, rng):
        g = make_grid(2, 8)
        with pytest.raises(ValueError):
            apply_radial_multiplier(_random_field(g, rng), lambda r: 1 / r)

    def test_non_finite_rejected(self, rng):
        g = make_grid(2, 8)
        with pytest.raises(ValueError):
            apply_radial_multiplier(_random_field(g, rng), lambda r: np.where(r > 1, np.inf, 1.0), 1.0)

    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2 ** 16))
    def test_linearity(self, a, b, seed):
        r = np.random.default_rng(seed)
        g = make_grid(2, 8)
        f, h = _random_field(g, r), _random_field(g, r)
        m = lambda x: np.sin(x) / x
        lhs = apply_radial_multiplier(ScalarField(g, a * f.samples + b * h.samples), m, 1.0).samples
        rhs = a * apply_radial_multiplier(f, m, 1.0).samples + b * apply_radial_multiplier(h, m, 1.0).samples
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())

    @given(seed=st.integers(0, 2 ** 16), t=st.floats(0, 5))
    def test_multipliers_commute(self, seed, t):
        g = make_grid(3, 8)
        f = _random_field(g, np.random.default_rng(seed))
        m1 = (lambda x: np.cos(t * x), 1.0)
        m2 = (lambda x: np.exp(-x), 1.0)
        ab = apply_radial_multiplier(apply_radial_multiplier(f, *m1), *m2).samples
        ba = apply_radial_multiplier(apply_radial_multiplier(f, *m2), *m1).samples
        assert np.abs(ab - ba).max() <= 1e-12 * np.abs(ab).max()


class TestRiesz:
    def test_contraction(self, rng):
        g = make_grid(3, 16)
        for _ in range(20):
            f = _random_field(g, rng)
            f = ScalarField(g, f.samples - f.samples.mean())
            for j in range(3):
                assert norm(riesz_transform(f, j), 2) <= norm(f, 2) * (1 + 1e-12)

    def test_isometry_of_vector(self, rng):
        g = make_grid(3, 16)
        f = _random_field(g, rng)
        f = ScalarField(g, f.samples - f.samples.mean())
        # Nyquist planes are dropped by the odd symbols; compare after removing them
        F = forward_transform(f).coefficients
        for ax in range(3):
            sl = [slice(None)] * 3
            sl[ax] = g.n // 2
            F[tuple(sl)] = 0.0
        f = inverse_transform(SpectralField(g, F))
        tot = math.sqrt(sum(norm(riesz_transform(f, j), 2) ** 2 for j in range(3)))
        assert tot == pytest.approx(norm(f, 2), rel=1e-10)

    def test_odd_in_axis(self):
        g = make_grid(8, 32)
        f = _gauss(g)
        for j in range(3):
            r = riesz_transform(f, j).samples.real
            flipped = np.flip(r, axis=j)
            # the lattice is symmetric about x=0 once the row at -L is dropped
            sl = [slice(1, None)] * 3
            assert np.allclose(r[tuple(sl)], -np.roll(flipped, 1, axis=j)[tuple(sl)], atol=1e-12)


class TestNorms:
    def test_homogeneity(self, rng):
        g = make_grid(2, 16)
        f = _random_field(g, rng)
        for p in (1, 2, 3.5, np.inf):
            assert norm(ScalarField(g, 2.5 * f.samples), p) == pytest.approx(2.5 * norm(f, p), rel=1e-12)

    def test_invalid_exponent(self, rng):
        with pytest.raises(ValueError):
            norm(_random_field(make_grid(2, 8), rng), 0)

    def test_weighted_gaussian_matches_radial_quadrature(self):
        g = make_grid(16, 128)
        f = _gauss(g)
        got = norm(f, 2, lambda r: (1 + r * r) ** 0.25)
        ref, _ = quad(lambda r: 4 * np.pi * r * r * (1 + r * r) ** 0.5 * np.exp(-r * r), 0, np.inf, epsabs=1e-14)
        assert got == pytest.approx(math.sqrt(ref), rel=1e-6)


class TestSupport:
    def test_certify_and_rescan(self):
        g = make_grid(4, 64)
        f = ScalarField(g, compact_bump(g.radius, 1.0).astype(complex))
        c = certify_support(f, 1.0)
        assert c.support_radius == 1.0
        assert measure_support_radius(c) <= 1.0

    def test_certify_rejects(self):
        g = make_grid(4, 32)
        with pytest.raises(GridError):
            certify_support(_gauss(g), 1.0)

    def test_window(self):
        check_window(1.0, 1.0, 10.0, 12.0)
        with pytest.raises(WraparoundError):
            check_window(1.0, 1.0, 10.0, 11.0)


class TestRadialBackend:
    def test_matches_cartesian_multiplier(self):
        L, sig = 12.0, 1.3
        g3 = make_grid(L, 64)
        gr = make_radial_grid(L, 64)
        m = lambda x: np.cos(2.0 * x) * np.exp(-0.1 * x * x)
        cart = apply_radial_multiplier(_gauss(g3, sig), m, 1.0)
        rad = RadialField.from_function(gr, lambda r: gaussian(r, sig)).apply_multiplier(m, 1.0)
        # compare along the positive x axis
        i0 = 32
        line = cart.samples[i0:, i0, i0].real
        assert np.abs(line - rad.profile[:32]).max() < 1e-8

    def test_radial_norm_against_quadrature(self):
        gr = make_radial_grid(20.0, 2048)
        f = RadialField.from_function(gr, lambda r: tail_profile(r, 2.0, 1.0, 8.0))
        ref, _ = quad(lambda r: 4 * np.pi * r * r * tail_profile(r, 2.0, 1.0, 8.0) ** 2, 0, 20, limit=200)
        assert f.norm(2) == pytest.approx(math.sqrt(ref), rel=1e-8)

    def test_spherical_average_of_quadratic(self):
        # mean of |y|^2 over |y - x0| = rho is d^2 + rho^2
        rho = np.linspace(0.0, 5.0, 11)
        out = spherical_average(lambda q: q * q, 2.0, rho)
        assert np.allclose(out, 4.0 + rho ** 2)


class TestProfiles:
    def test_bump(self):
        assert compact_bump(0.0) == 1.0
        assert compact_bump(1.0) == 0.0
        assert compact_bump(0.5, 2.0) == pytest.approx(math.exp(1 - 1 / (1 - 1 / 16)))

    def test_tail_decay_rate(self):
        r = np.array([2.0, 4.0])
        v = tail_profile(r, 3.0, 0.01, 1e6)
        assert math.log(v[0] / v[1]) / math.log(2) == pytest.approx(3.0, rel=1e-4)


class TestReport:
    def test_statistics(self):
        rep = make_report("x", {}, [1.0, 3.0, 2.0])
        assert rep.sup == 3.0 and rep.median == 2.0 and rep.valid

    def test_empty_and_nonfinite_flagged(self):
        assert "empty" in make_report("x", {}, []).flags
        assert not make_report("x", {}, [1.0, np.inf]).valid

    def test_refinement_gate(self):
        a = make_report("x", {}, [1.0])
        assert compare_refinement(a, make_report("x", {}, [1.2])).valid
        assert "unstable" in compare_refinement(a, make_report("x", {}, [1.5])).flags

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30))
    def test_sup_dominates(self, xs):
        rep = make_report("x", {}, xs)
        assert all(rep.sup >= x for x in xs)
