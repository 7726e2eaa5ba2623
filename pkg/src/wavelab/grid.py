"""Periodic 3D sampling grids and the spectral transform pair.

The box is ``[-L, L)^3`` sampled at ``x_j = -L + j h`` with ``h = 2L/n``.
The forward transform approximates

.. math::  \\hat f(\\xi) = \\int e^{-i x\\cdot\\xi} f(x)\\,dx

by ``h^3`` times a phase-corrected DFT, and the inverse carries the
``(2\\pi)^{-3} (\\Delta\\xi)^3`` factor with ``\\Delta\\xi = \\pi/L``.  Coefficients
are stored in numpy FFT ordering (zero frequency first along each axis).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid3",
    "ScalarField",
    "SpectralField",
    "GridError",
    "WraparoundError",
    "make_grid",
    "forward_transform",
    "inverse_transform",
    "apply_radial_multiplier",
    "riesz_transform",
    "norm",
    "certify_support",
    "measure_support_radius",
    "check_window",
    "point_value",
    "inverse_power_cell_average",
]


class GridError(ValueError):
    """Invalid grid parameters or mismatched grids."""


class WraparoundError(ValueError):
    """Propagated support would wrap around the periodic box."""


@dataclass(frozen=True)
class Grid3:
    L: float
    n: int

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / (2.0 * self.L)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def freq_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.axis
        return (a[:, None, None], a[None, :, None], a[None, None, :])

    @cached_property
    def radius(self) -> np.ndarray:
        x, y, z = self.coords
        return np.sqrt(x * x + y * y + z * z)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.freq_axis
        return (k[:, None, None], k[None, :, None], k[None, None, :])

    @cached_property
    def abs_xi(self) -> np.ndarray:
        a, b, c = self.wavevector
        return np.sqrt(a * a + b * b + c * c)

    @cached_property
    def _phase(self) -> np.ndarray:
        # x_0 = -L gives e^{i pi m} per axis
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        p = np.where(np.abs(m) % 2 == 1, -1.0, 1.0)
        return p[:, None, None] * p[None, :, None] * p[None, None, :]

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def max_abs_xi(self) -> float:
        return float(np.sqrt(3.0) * self.nyquist)

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise GridError(f"box half-width must be positive, got L={self.L}")
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise GridError(f"n must be an even integer >= 8, got n={self.n}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Samples of a (possibly complex) function on a :class:`Grid3`."""

    grid: Grid3
    samples: np.ndarray
    support_radius: Optional[float] = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.shape != (self.grid.n,) * 3:
            raise GridError(f"samples shape {s.shape} does not match grid n={self.grid.n}")

    def with_samples(self, samples, support_radius=None) -> "ScalarField":
        return replace(self, samples=samples, support_radius=support_radius)

    @classmethod
    def from_function(cls, grid: Grid3, fn: Callable, support_radius=None) -> "ScalarField":
        x, y, z = grid.coords
        vals = np.broadcast_to(fn(x, y, z), (grid.n,) * 3)
        return cls(grid, np.array(vals), support_radius)


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid3
    coefficients: np.ndarray


def make_grid(L: float, n: int) -> Grid3:
    return Grid3(float(L), int(n))


def forward_transform(f: ScalarField) -> SpectralField:
    g = f.grid
    c = sfft.fftn(f.samples) * g._phase * g.cell_volume
    return SpectralField(g, c)


def inverse_transform(F: SpectralField) -> ScalarField:
    g = F.grid
    s = sfft.ifftn(F.coefficients * g._phase) / g.cell_volume
    return ScalarField(g, s)


def _multiplier_values(abs_xi: np.ndarray, m: Callable, m0) -> np.ndarray:
    zero = abs_xi == 0
    safe = np.where(zero, 1.0, abs_xi)
    vals = np.array(np.broadcast_to(m(safe), abs_xi.shape))
    if np.iscomplexobj(m0) and not np.iscomplexobj(vals):
        vals = vals.astype(complex)
    if zero.any():
        if m0 is None:
            raise ValueError("multiplier needs an explicit value at xi=0")
        vals[zero] = m0
    if not np.all(np.isfinite(vals)):
        raise ValueError("multiplier is not finite on the frequency lattice")
    return vals


def apply_radial_multiplier(f, m: Callable, m0=None):
    """Apply the Fourier multiplier ``m(|xi|)``.

    ``m`` is evaluated only away from the origin; ``m0`` is the value used at
    ``xi = 0`` and is required whenever the lattice contains it.
    """
    from .radial import RadialField

    if isinstance(f, RadialField):
        return f.apply_multiplier(m, m0)
    F = forward_transform(f)
    vals = _multiplier_values(f.grid.abs_xi, m, m0)
    out = inverse_transform(SpectralField(f.grid, F.coefficients * vals))
    return out


def riesz_transform(f: ScalarField, j: int) -> ScalarField:
    """Riesz transform with symbol ``i xi_j / |xi|`` (zero at the origin)."""
    g = f.grid
    F = forward_transform(f)
    xi = g.wavevector[j]
    a = g.abs_xi
    sym = np.where(a > 0, 1j * xi / np.where(a > 0, a, 1.0), 0.0)
    # odd symbol: drop the unpaired Nyquist plane
    sym = sym * (np.abs(xi) < g.nyquist - 1e-12)
    return inverse_transform(SpectralField(g, F.coefficients * sym))


def norm(f, p: float, weight: Optional[Callable] = None) -> float:
    """``|| w f ||_{L^p}`` where ``w`` is an optional radial weight ``w(|x|)``.

    The weight multiplies the function; it is not a change of measure.
    """
    from .radial import RadialField

    if isinstance(f, RadialField):
        return f.norm(p, weight)
    a = np.abs(f.samples)
    if weight is not None:
        a = a * weight(f.grid.radius)
    if np.isinf(p):
        return float(a.max())
    if p <= 0:
        raise ValueError("p must be positive")
    if p == 2:
        return float(np.sqrt(np.sum(a * a) * f.grid.cell_volume))
    m = a.max()
    if m == 0:
        return 0.0
    return float(m * (np.sum((a / m) ** p) * f.grid.cell_volume) ** (1.0 / p))


def measure_support_radius(f: ScalarField, threshold: float = 1e-10) -> float:
    a = np.abs(f.samples)
    m = a.max()
    if m == 0:
        return 0.0
    mask = a > threshold * m
    return float(f.grid.radius[mask].max())


def certify_support(f: ScalarField, R: float, threshold: float = 1e-10) -> ScalarField:
    """Return ``f`` tagged with support radius ``R`` after checking the samples."""
    a = np.abs(f.samples)
    outside = f.grid.radius > R
    m = a.max()
    if outside.any() and m > 0 and a[outside].max() > threshold * m:
        raise GridError(
            f"field is not negligible outside radius {R}: "
            f"{a[outside].max() / m:.3e} of the peak"
        )
    return replace(f, support_radius=float(R))


def check_window(R0: float, c_max: float, T: float, L: float, margin: float = 0.0):
    """Raise unless ``R0 + c_max T + margin < L``."""
    reach = R0 + c_max * abs(T) + margin
    if reach >= L:
        raise WraparoundError(
            f"support radius {R0} + c*T {c_max * abs(T):.4g} + margin {margin} "
            f"= {reach:.4g} reaches the box half-width L={L}"
        )


def point_value(F: SpectralField, x) -> complex:
    """Evaluate the trigonometric interpolant of ``F`` at an arbitrary point."""
    g = F.grid
    k = g.freq_axis
    ex = [np.exp(1j * k * xi) for xi in np.asarray(x, float)]
    c = F.coefficients
    s = np.einsum("ijk,i,j,k->", c, ex[0], ex[1], ex[2])
    return complex(s * (g.dxi / (2 * np.pi)) ** 3)


_CELL_CONST: dict[float, float] = {}


def inverse_power_cell_average(iota: float, dxi: float) -> float:
    """Average of ``|xi|^{-iota}`` over the lattice cell centred at the origin.

    Used as the declared ``xi = 0`` value of ``|xi|^{-iota}`` so that the
    lattice sum approximates the (integrable) continuum integral.
    """
    if iota == 0:
        return 1.0
    if iota >= 3:
        raise ValueError("|xi|^-iota is not locally integrable for iota >= 3")
    c = _CELL_CONST.get(iota)
    if c is None:
        # int over [-1/2,1/2]^3 of |u|^-iota = int dOmega rho_max^(3-iota)/(3-iota)
        mu, wmu = np.polynomial.legendre.leggauss(96)
        phi = (np.arange(384) + 0.5) * 2 * np.pi / 384
        st = np.sqrt(1 - mu ** 2)
        w = np.stack(
            [st[:, None] * np.cos(phi), st[:, None] * np.sin(phi), np.broadcast_to(mu[:, None], (96, 384))]
        )
        rmax = 0.5 / np.abs(w).max(axis=0)
        c = float(np.sum(wmu[:, None] * rmax ** (3 - iota)) * (2 * np.pi / 384) / (3 - iota))
        _CELL_CONST[iota] = c
    return c / dxi ** iota
