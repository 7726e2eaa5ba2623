import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from wavelab.dyadic import PSI
from wavelab.kernels import (
    KernelSample,
    KernelSpec,
    classify_regime,
    decay_slope_fit,
    eval_kernel,
    gauss_kronrod,
    regime_bound,
    sphere_hat,
    sphere_hat_split,
)
from wavelab.propagators import sphere_rule


def _scipy_kernel(spec, t, r):
    a, b = spec.support

    def f(rho, part):
        v = 4 * np.pi * np.sinc(rho * r / np.pi) * np.exp(1j * spec.sign * t * rho) * spec.symbol(rho)
        v = v * rho ** (2 - spec.iota) * (1 + rho * rho) ** (-spec.M)
        return v.real if part == 0 else v.imag

    re, _ = quad(f, a, b, args=(0,), limit=2000, epsabs=1e-12)
    im, _ = quad(f, a, b, args=(1,), limit=2000, epsabs=1e-12)
    return re + 1j * im


class TestSphereHat:
    def test_origin(self):
        assert sphere_hat(0.0) == pytest.approx(4 * np.pi)

    def test_zero_at_pi(self):
        assert abs(sphere_hat(np.pi)) < 1e-14

    @pytest.mark.parametrize("r", [0.3, np.pi, 7.5, 20.0])
    def test_surface_quadrature_oracle(self, r):
        pts, w = sphere_rule((64, 8))
        ref = 4 * np.pi * np.sum(w * np.exp(1j * r * pts[:, 2]))
        assert sphere_hat(r) == pytest.approx(ref.real, abs=1e-12)

    def test_decay(self):
        r = np.linspace(0, 1e3, 100_001)
        assert np.max(np.abs(sphere_hat(r)) * (1 + r)) <= 4 * np.pi * 2

    def test_split_reassembles(self):
        r = np.array([0.0, 0.5, 3.0, 40.0])
        wp, wm = sphere_hat_split(r)
        assert np.allclose(np.exp(1j * r) * wp + np.exp(-1j * r) * wm, sphere_hat(r), atol=1e-9)
        r = np.array([10.0, 100.0])
        wp, wm = sphere_hat_split(r)
        assert np.all(np.abs(wp) * (1 + r) < 4 * np.pi * 2)


class TestQuadrature:
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
    def test_polynomials_exact(self, coefs):
        p = np.polynomial.Polynomial(coefs)
        val, err = gauss_kronrod(lambda x: p(x), -1.0, 2.0)
        ref = p.integ()(2.0) - p.integ()(-1.0)
        assert val == pytest.approx(ref, abs=1e-10 * max(1, abs(ref)))

    def test_oscillatory(self):
        val, err = gauss_kronrod(lambda x: np.cos(50 * x), 0.0, 3.0, 1e-12, np.pi / 200)
        assert val == pytest.approx(math.sin(150) / 50, abs=1e-11)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(0, iota=3)
        with pytest.raises(ValueError):
            KernelSpec(0, M=51)
        with pytest.raises(ValueError):
            KernelSpec(-1, M=1)
        with pytest.raises(ValueError):
            KernelSpec(0, iota=2)
        with pytest.raises(ValueError):
            KernelSpec(0, sign=0)

    def test_negative_k_is_homogeneous(self):
        assert KernelSpec(-2).homogeneous and not KernelSpec(-2).lump
        assert KernelSpec(-1).lump

    def test_regimes(self):
        assert classify_regime(0, 3) == "static"
        assert classify_regime(10, 2) == "core"
        assert classify_regime(10, 10) == "light-cone"
        assert classify_regime(10, 30) == "exterior"


class TestEvalKernel:
    def test_origin_oracle(self):
        spec = KernelSpec(0)
        s = eval_kernel(spec, 0.0, 0.0)
        a, b = spec.support
        ref, _ = quad(lambda x: 4 * np.pi * x * x * PSI.dot_wide(0, x), a, b, epsabs=1e-13)
        assert s.value.real == pytest.approx(ref, rel=1e-10)
        assert s.value.real > 0 and abs(s.value.imag) < 1e-12
        assert s.regime == "static"

    @pytest.mark.parametrize("spec,t,r", [
        (KernelSpec(0), 5.0, 3.0),
        (KernelSpec(1, iota=1, M=2), 2.0, 7.0),
        (KernelSpec(-1), 12.0, 6.0),
        (KernelSpec(-1, iota=2), 4.0, 4.0),
        (KernelSpec(0, sign=-1), 20.0, 20.0),
    ])
    def test_against_scipy(self, spec, t, r):
        s = eval_kernel(spec, t, r)
        assert not s.flagged
        assert abs(s.value - _scipy_kernel(spec, t, r)) < 1e-8

    @given(t=st.floats(0, 60), r=st.floats(0, 60))
    def test_conjugation(self, t, r):
        p = eval_kernel(KernelSpec(0, sign=1), t, r).value
        m = eval_kernel(KernelSpec(0, sign=-1), t, r).value
        assert abs(p - np.conj(m)) <= 1e-8

    @pytest.mark.parametrize("k", [-2, -1, 0, 1, 2, 3, 4])
    def test_scaling_law(self, k):
        tol = 1e-9
        for t, r in [(0.7, 0.2), (3.0, 3.0), (5.0, 1.0)]:
            a = eval_kernel(KernelSpec(k, homogeneous=True), t, r, tol).value
            b = 2.0 ** (3 * k) * eval_kernel(KernelSpec(0), 2.0 ** k * t, 2.0 ** k * r, tol).value
            assert abs(a - b) <= 10 * tol * max(1.0, 2.0 ** (3 * k))

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            eval_kernel(KernelSpec(0), -1.0, 0.0)

    def test_lump_uniform_decay(self):
        ts = np.linspace(0, 200, 201)
        vals = [abs(eval_kernel(KernelSpec(-1), t, t).value) * (1 + t) for t in ts]
        assert np.isfinite(max(vals)) and max(vals) < 100

    def test_inverse_square_log_envelope(self):
        worst = 0.0
        for t in np.geomspace(1, 200, 30):
            for r in (t / 2, t, 2 * t):
                v = abs(eval_kernel(KernelSpec(-1, iota=2), t, r).value)
                worst = max(worst, v * (1 + t) / math.log(math.e + t))
        assert worst < 100

    def test_calibration_constant_stable(self):
        cs = []
        for tol in (1e-8, 1e-10):
            spec = KernelSpec(1)
            c = max(abs(eval_kernel(spec, t, r, tol).value) / regime_bound(spec, t, r, regime="uniform")
                    for t in (0, 1, 5, 20) for r in (0, 1, 5, 20))
            cs.append(c)
        assert cs[1] == pytest.approx(cs[0], rel=0.2)


class TestRegimeBound:
    def test_light_cone_value(self):
        assert regime_bound(KernelSpec(0), 100, 100) == pytest.approx(0.01)

    def test_smoothing_factor(self):
        assert KernelSpec(3, M=2).prefactor == pytest.approx(2.0 ** (9 - 12))

    def test_uniform_at_zero(self):
        spec = KernelSpec(2, iota=1, M=1)
        assert regime_bound(spec, 0, 0) == pytest.approx(2.0 ** (2 * 2 - 2 * 2))


class TestSlopeFit:
    def test_light_cone_slope(self):
        spec = KernelSpec(0)
        samples = [eval_kernel(spec, t, t) for t in np.geomspace(20, 200, 24)]
        slope, _, _ = decay_slope_fit(samples, (20, 200))
        assert slope == pytest.approx(-1, abs=0.15)

    def test_core_slope(self):
        spec = KernelSpec(0)
        samples = [eval_kernel(spec, t, t / 4) for t in np.geomspace(20, 200, 24)]
        slope, _, _ = decay_slope_fit(samples, (20, 200))
        assert slope <= -3

    def test_constant(self):
        samples = [KernelSample(t, t, 2.0 + 0j, 0.0, False, "light-cone") for t in np.geomspace(1, 10, 10)]
        slope, _, _ = decay_slope_fit(samples, (1, 10))
        assert abs(slope) < 1e-12

    def test_errors(self):
        few = [KernelSample(t, t, 1 + 0j, 0.0, False, "light-cone") for t in (1.0, 2.0)]
        with pytest.raises(ValueError):
            decay_slope_fit(few, (0, 10))
        mixed = [KernelSample(float(t), float(t) / (4 if t % 2 else 1), 1 + 0j, 0.0, False,
                              classify_regime(t, t / (4 if t % 2 else 1))) for t in range(1, 11)]
        with pytest.raises(ValueError):
            decay_slope_fit(mixed, (0, 11))
