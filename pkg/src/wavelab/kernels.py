"""Radial wave kernels localized to a frequency shell.

For a shell index ``k``, smoothing order ``M`` and inverse-derivative order
``iota`` the kernel is

.. math::

    K(t, r) = \\int_0^\\infty 4\\pi\\,\\frac{\\sin(\\rho r)}{\\rho r}\\,
              e^{\\pm i t\\rho}\\,\\rho^{2-\\iota}(1+\\rho^2)^{-M}\\,\\phi_k(\\rho)\\,d\\rho

with ``phi_k`` the widened homogeneous shell symbol, or ``psi`` itself for the
low-frequency lump.  Integrals are computed with adaptive Gauss-Kronrod
(7/15) panels whose width never exceeds a quarter of the local oscillation
period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .dyadic import PSI, smooth_step

__all__ = [
    "KernelSpec",
    "KernelSample",
    "QuadratureError",
    "gauss_kronrod",
    "sphere_hat",
    "sphere_hat_split",
    "eval_kernel",
    "classify_regime",
    "regime_bound",
    "decay_slope_fit",
]

Regime = Literal["static", "core", "light-cone", "exterior"]

# Kronrod nodes on [0, 1]; odd indices are the 7-point Gauss nodes
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[[9, 11, 13]] = _WG[2::-1]
_WG15[7] = _WG[3]


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def gauss_kronrod(fn: Callable, a: float, b: float, tol: float = 1e-9,
                  max_width: Optional[float] = None, max_panels: int = 1 << 20):
    """Adaptive G7/K15 quadrature of a vectorized ``fn`` over ``[a, b]``.

    Returns ``(value, error_estimate)``; the estimate is the sum of
    ``|K15 - G7|`` over accepted panels.  Panels are bisected until each meets
    its share of ``tol`` (proportional to its width).
    """
    if b <= a:
        return 0.0, 0.0
    width = b - a
    npan = 1 if not max_width else max(1, math.ceil(width / max_width))
    edges = np.linspace(a, b, npan + 1)
    lo, hi = edges[:-1], edges[1:]
    total = 0.0
    err = 0.0
    while lo.size:
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        x = mid[:, None] + half[:, None] * _NODES
        y = fn(x)
        k = (y @ _WK) * half
        g = (y @ _WG15) * half
        e = np.abs(k - g)
        ok = e <= tol * (hi - lo) / width
        ok |= half < 1e-14 * width  # cannot split further
        total = total + k[ok].sum()
        err += e[ok].sum()
        lo, hi = lo[~ok], hi[~ok]
        if lo.size:
            m = 0.5 * (lo + hi)
            lo, hi = np.concatenate([lo, m]), np.concatenate([m, hi])
            if lo.size > max_panels:
                raise QuadratureError(f"panel budget exceeded on [{a}, {b}]")
    return total, err


def sphere_hat(r):
    """Fourier transform of surface measure on the unit sphere: ``4 pi sin r / r``."""
    r = np.asarray(r, float)
    return 4 * np.pi * np.sinc(r / np.pi)


def _chi_plus(s):
    return smooth_step(s + 0.5)


def sphere_hat_split(r, tol: float = 1e-12):
    """Smooth amplitudes ``(w_plus, w_minus)`` with ``sphere_hat = e^{ir} w_plus + e^{-ir} w_minus``.

    Built from a smooth partition of the sphere into caps around the poles;
    each amplitude decays like ``(1 + r)^{-1}``.
    """
    out = []
    for rr in np.atleast_1d(np.asarray(r, float)):
        mw = np.pi / (4 * max(rr, 1.0))
        wp, _ = gauss_kronrod(lambda s: 2 * np.pi * np.exp(1j * rr * (s - 1)) * _chi_plus(s), -1, 1, tol, mw)
        wm, _ = gauss_kronrod(lambda s: 2 * np.pi * np.exp(1j * rr * (s + 1)) * (1 - _chi_plus(s)), -1, 1, tol, mw)
        out.append((wp, wm))
    a = np.array(out)
    return a[:, 0], a[:, 1]


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selector.

    ``k = -1`` denotes the low-frequency lump (symbol ``psi``) unless
    ``homogeneous`` is set, in which case it is the ordinary shell at scale
    ``1/2``.  ``iota = 2`` is only meaningful for the lump, where it gives the
    ``|xi|^{-2}`` kernel.
    """

    k: int
    iota: int = 0
    M: int = 0
    sign: int = 1
    homogeneous: bool = False

    def __post_init__(self):
        if self.iota not in (0, 1, 2):
            raise ValueError(f"iota must be 0, 1 or 2, got {self.iota}")
        if not (0 <= self.M <= 50) or int(self.M) != self.M:
            raise ValueError(f"M must be an integer in [0, 50], got {self.M}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.lump and self.M > 0:
            raise ValueError("the low-frequency lump carries no (1+|xi|^2)^-M factor")
        if self.iota == 2 and not self.lump:
            raise ValueError("iota = 2 is only defined for the low-frequency lump (k = -1)")
        if self.k < -1 and not self.homogeneous:
            object.__setattr__(self, "homogeneous", True)

    @property
    def lump(self) -> bool:
        return self.k == -1 and not self.homogeneous

    def symbol(self, rho):
        return PSI.psi(rho) if self.lump else PSI.dot_wide(self.k, rho)

    @property
    def support(self) -> tuple[float, float]:
        if self.lump:
            return 0.0, PSI.outer
        return PSI.inner / 2 * 2.0 ** (self.k - 1), PSI.outer * 2.0 ** (self.k + 1)

    @property
    def prefactor(self) -> float:
        if self.lump:
            return 1.0
        return 2.0 ** ((3 - self.iota) * self.k - 2 * self.M * max(self.k, 0))


@dataclass(frozen=True)
class KernelSample:
    t: float
    r: float
    value: complex
    error_estimate: float
    flagged: bool
    regime: str


def classify_regime(t: float, r: float) -> Regime:
    if t == 0:
        return "static"
    if r <= t / 2:
        return "core"
    if r >= 2 * t:
        return "exterior"
    return "light-cone"


def eval_kernel(spec: KernelSpec, t: float, r: float, tol: float = 1e-9) -> KernelSample:
    if t < 0 or r < 0:
        raise ValueError("t and r must be non-negative")
    a, b = spec.support
    sgn = spec.sign
    p = 2 - spec.iota
    M = spec.M

    def integrand(rho):
        v = 4 * np.pi * np.sinc(rho * r / np.pi) * np.exp(1j * sgn * t * rho) * spec.symbol(rho)
        if p:
            v = v * rho ** p
        if M:
            v = v * (1 + rho * rho) ** (-M)
        return v

    max_w = (b - a) / 16
    if t + r > 0:
        max_w = min(max_w, np.pi / (4 * (t + r)))
    val, err = gauss_kronrod(integrand, a, b, tol, max_w)
    return KernelSample(float(t), float(r), complex(val), float(err), bool(err > tol), classify_regime(t, r))


def regime_bound(spec: KernelSpec, t: float, r: float, N_order: int = 3,
                 regime: Optional[str] = None) -> float:
    """Theoretical envelope of ``|K(t, r)|`` in the given regime, unit constant.

    The static regime (and ``t = r = 0``) returns the uniform bound.
    """
    reg = regime or classify_regime(t, r)
    if spec.lump:
        if spec.iota == 2:
            logf = math.log(math.e + t)
            if reg in ("static",) or t == 0:
                return logf / (1 + t)
            if reg == "light-cone":
                return logf / t
            return 1.0 / abs(t - r) if t != r else logf / (1 + t)
        if reg == "static" or t == 0:
            return 1.0 / (1 + t)
        if reg == "core":
            return t ** -3.0
        if reg == "exterior":
            return r ** -3.0
        return 1.0 / t
    A = spec.prefactor
    s = 2.0 ** spec.k
    if reg == "static" or (t == 0 and r == 0) or reg == "uniform":
        return A / (1 + s * t)
    if reg == "core":
        return A * (s * t) ** (-N_order)
    if reg == "exterior":
        return A * (s * r) ** (-N_order)
    if reg == "light-cone":
        return A / (s * t)
    raise ValueError(f"unknown regime {reg!r}")


def decay_slope_fit(samples: Sequence[KernelSample], window: tuple[float, float]):
    """Least-squares slope of ``log|K|`` against ``log t`` inside ``window``.

    Returns ``(slope, intercept, residual_rms)``.  Needs at least 8 samples of a
    single regime.
    """
    lo, hi = window
    sel = [s for s in samples if lo <= s.t <= hi]
    if len(sel) < 8:
        raise ValueError(f"slope fit needs at least 8 samples in the window, got {len(sel)}")
    regimes = {s.regime for s in sel}
    if len(regimes) > 1:
        raise ValueError(f"samples mix regimes {sorted(regimes)}")
    x = np.log([s.t for s in sel])
    y = np.log([abs(s.value) for s in sel])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res ** 2)))
