"""Exact reduction of radial problems in R^3 to odd functions on a line.

For a radial ``f(x) = F(|x|)`` put ``g(r) = r F(r)`` and extend it oddly to
``[-L, L)``.  A radial multiplier ``m(|xi|)`` acting on ``f`` in three
dimensions acts on ``g`` as the one-dimensional multiplier ``m(|kappa|)``, and
``F(0) = g'(0)``.  Fields whose radial centre sits at distance ``d`` from the
origin are carried along unchanged by multipliers (they commute with
translations); weighted norms of such fields are reduced to spherical averages
of the weight around the field centre.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .grid import GridError

__all__ = ["RadialGrid", "RadialField", "make_radial_grid", "spherical_average", "radial_weight_sup"]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class RadialGrid:
    """Periodic line ``[-L, L)`` with ``n`` points carrying odd extensions."""

    L: float
    n: int

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise GridError(f"L must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise GridError(f"n must be an even integer >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / (2.0 * self.L)

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @cached_property
    def r(self) -> np.ndarray:
        return self.h * np.arange(self.n // 2 + 1)

    @cached_property
    def kappa(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def abs_kappa(self) -> np.ndarray:
        return np.abs(self.kappa)

    @cached_property
    def shell_weights(self) -> np.ndarray:
        """Trapezoid weights for ``int_0^L (.) 4 pi r^2 dr``."""
        w = np.full(self.r.shape, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return 4.0 * np.pi * self.r ** 2 * w

    def odd_extension(self, profiles: np.ndarray) -> np.ndarray:
        """Map profiles ``F(r_j)`` (last axis) to samples of ``g = rF`` on the line."""
        n2 = self.n // 2
        g = profiles * self.r
        out = np.zeros(profiles.shape[:-1] + (self.n,), dtype=np.result_type(profiles, float))
        out[..., : n2 + 1] = g
        out[..., n2] = 0.0
        out[..., n2 + 1:] = -g[..., n2 - 1: 0: -1]
        return out

    def profiles_from_spectrum(self, G: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`odd_extension` applied to spectral data ``fft(g)``."""
        n2 = self.n // 2
        g = sfft.ifft(G, axis=-1)
        dg0 = sfft.ifft(1j * self.kappa * G, axis=-1)[..., 0]
        prof = np.empty(G.shape[:-1] + (n2 + 1,), dtype=complex)
        prof[..., 1:] = g[..., 1: n2 + 1] / self.r[1:]
        prof[..., 0] = dg0
        return prof

    def multiplier_values(self, m: Callable, m0=0.0) -> np.ndarray:
        # odd data has no zero mode so the value there never matters
        a = self.abs_kappa
        safe = np.where(a == 0, 1.0, a)
        vals = np.array(np.broadcast_to(m(safe), a.shape), dtype=complex)
        vals[a == 0] = 0.0 if m0 is None else m0
        if not np.all(np.isfinite(vals)):
            raise ValueError("multiplier is not finite on the frequency lattice")
        return vals


def make_radial_grid(L: float, n: int) -> RadialGrid:
    return RadialGrid(float(L), int(n))


def spherical_average(W: Callable, d: float, rho: np.ndarray) -> np.ndarray:
    """Mean of ``W(|y|)`` over spheres ``|y - x0| = rho`` with ``|x0| = d``.

    Uses ``(1/(2 d rho)) int_{|d-rho|}^{d+rho} W(q) q dq``.
    """
    rho = np.asarray(rho, float)
    if d == 0:
        return np.asarray(W(rho), float) * np.ones_like(rho)
    lo = np.abs(d - rho)
    hi = d + rho
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    q = mid[..., None] + half[..., None] * _GL_X
    integral = np.sum(_GL_W * W(q) * q, axis=-1) * half
    small = rho < 1e-12 * max(d, 1.0)
    out = np.where(small, 0.0, integral / np.where(small, 1.0, 2 * d * rho))
    if small.any():
        out = np.where(small, W(np.full_like(rho, d)), out)
    return out


def radial_weight_sup(W: Callable, d: float, rho: np.ndarray) -> np.ndarray:
    """Max of ``W(|y|)`` over the sphere ``|y - x0| = rho`` with ``|x0| = d``."""
    rho = np.asarray(rho, float)
    if d == 0:
        return np.asarray(W(rho), float) * np.ones_like(rho)
    lo = np.abs(d - rho)
    hi = d + rho
    s = np.linspace(0.0, 1.0, 9)
    q = lo[..., None] + (hi - lo)[..., None] * s
    return np.max(W(q), axis=-1)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Function radial about a centre at distance ``center`` from the origin.

    ``profile`` holds ``F(r_j)`` for ``r_j = j h``, ``j = 0..n/2``.
    ``support_radius`` is measured from the field's own centre.
    """

    grid: RadialGrid
    profile: np.ndarray
    center: float = 0.0
    support_radius: Optional[float] = None

    def __post_init__(self):
        if np.shape(self.profile) != (self.grid.n // 2 + 1,):
            raise GridError("profile length must be n/2 + 1")
        if self.center < 0:
            raise GridError("centre offset must be non-negative")

    @classmethod
    def from_function(cls, grid: RadialGrid, fn: Callable, center: float = 0.0, support_radius=None):
        return cls(grid, np.asarray(fn(grid.r), dtype=float), float(center), support_radius)

    @property
    def outer_radius(self) -> Optional[float]:
        if self.support_radius is None:
            return None
        return self.center + self.support_radius

    def with_profile(self, profile, support_radius=None) -> "RadialField":
        return replace(self, profile=profile, support_radius=support_radius)

    @cached_property
    def spectrum(self) -> np.ndarray:
        return sfft.fft(self.grid.odd_extension(self.profile))

    def apply_multiplier(self, m: Callable, m0=None) -> "RadialField":
        vals = self.grid.multiplier_values(m, m0)
        prof = self.grid.profiles_from_spectrum(self.spectrum * vals)
        if not np.iscomplexobj(self.profile) and np.allclose(prof.imag, 0.0, atol=1e-300):
            prof = prof.real
        return self.with_profile(prof)

    def transformed_profiles(self, symbols: np.ndarray) -> np.ndarray:
        """Profiles of ``m_i(D) f`` for a stack of lattice symbols ``(..., n)``."""
        return self.grid.profiles_from_spectrum(self.spectrum * symbols)

    def norm(self, p: float, weight: Optional[Callable] = None) -> float:
        return float(profile_norms(self.grid, self.profile[None], p, weight, self.center)[0])

    def evaluate(self, rho) -> np.ndarray:
        """Spectrally interpolated profile at distances ``rho`` from the centre."""
        rho = np.atleast_1d(np.asarray(rho, float))
        G = self.spectrum
        k = self.grid.kappa
        e = np.exp(1j * np.outer(rho, k))
        g = e @ G / self.grid.n
        dg = (e * (1j * k)) @ G / self.grid.n
        small = rho < 1e-12
        out = np.where(small, dg, g / np.where(small, 1.0, rho))
        if not np.iscomplexobj(self.profile):
            out = out.real
        return out


def profile_norms(grid: RadialGrid, profiles: np.ndarray, p: float, weight=None, center: float = 0.0):
    """Weighted ``L^p(R^3)`` norms ``||w f||`` of a stack of radial profiles."""
    a = np.abs(profiles)
    r = grid.r
    if np.isinf(p):
        if weight is not None:
            a = a * radial_weight_sup(weight, center, r)
        return a.max(axis=-1)
    if weight is None:
        wavg = 1.0
    else:
        wavg = spherical_average(lambda q: weight(q) ** p, center, r)
    m = a.max(axis=-1, keepdims=True)
    m = np.where(m == 0, 1.0, m)
    s = np.sum((a / m) ** p * wavg * grid.shell_weights, axis=-1)
    return m[..., 0] * s ** (1.0 / p)
