"""Free wave propagators, the Kirchhoff formula and Huygens shell cutoffs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.ndimage import map_coordinates

from .dyadic import smooth_step
from .grid import (
    GridError,
    ScalarField,
    SpectralField,
    apply_radial_multiplier,
    check_window,
    forward_transform,
    norm,
)
from .radial import RadialField, RadialGrid, spherical_average

__all__ = [
    "half_wave",
    "cosine_prop",
    "sine_prop",
    "wave_solution",
    "duhamel",
    "kirchhoff_point_eval",
    "sphere_rule",
    "HuygensShell",
    "huygens_cutoff",
    "huygens_residual",
    "center_value_radial",
]

Field = Union[ScalarField, RadialField]


def _outer(f) -> Optional[float]:
    if isinstance(f, RadialField):
        return f.outer_radius
    return f.support_radius


def _window(f, t, c, margin, check):
    R = _outer(f)
    if check and R is not None:
        check_window(R, c, t, f.grid.L, margin)


def half_wave(f: Field, t: float, sign: int = 1, c: float = 1.0, *, margin: float = 0.0, check: bool = True):
    """``e^{sign i c t |D|} f``."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    _window(f, t, c, margin, check)
    return apply_radial_multiplier(f, lambda x: np.exp(sign * 1j * c * t * x), 1.0 + 0j)


def cosine_prop(f: Field, t: float, c: float = 1.0, *, margin: float = 0.0, check: bool = True):
    """``cos(c t |D|) f``."""
    _window(f, t, c, margin, check)
    return apply_radial_multiplier(f, lambda x: np.cos(c * t * x), 1.0)


def sine_prop(f: Field, t: float, c: float = 1.0, *, margin: float = 0.0, check: bool = True):
    """``sin(c t |D|)/(c |D|) f``; the value at ``xi = 0`` is the limit ``t``."""
    _window(f, t, c, margin, check)
    return apply_radial_multiplier(f, lambda x: np.sin(c * t * x) / (c * x), float(t))


def _add(a, b):
    if isinstance(a, RadialField):
        return a.with_profile(a.profile + b.profile)
    return a.with_samples(a.samples + b.samples)


def wave_solution(u0: Field, u1: Field, t: float, c: float = 1.0, **kw):
    """Solution at time ``t`` of ``u_tt = c^2 Lap u`` with data ``(u0, u1)``."""
    return _add(cosine_prop(u0, t, c, **kw), sine_prop(u1, t, c, **kw))


def duhamel(forcing: Callable[[float], ScalarField], t: float, c: float = 1.0, nodes: int = 32, panels: int = 4):
    """``int_0^t sin(c(t-s)|D|)/(c|D|) F(s) ds`` by composite Gauss-Legendre in ``s``.

    This is the solution of ``u_tt - c^2 Lap u = F`` with zero data.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, t, panels + 1)
    acc = None
    for a, b in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(x, w):
            s = 0.5 * (a + b) + 0.5 * (b - a) * xi
            piece = sine_prop(forcing(s), t - s, c, check=False)
            if isinstance(piece, RadialField):
                piece = piece.with_profile(piece.profile * (0.5 * (b - a) * wi))
            else:
                piece = piece.with_samples(piece.samples * (0.5 * (b - a) * wi))
            acc = piece if acc is None else _add(acc, piece)
    return acc


def sphere_rule(order: tuple[int, int] = (32, 64)):
    """Product rule on the unit sphere: Gauss-Legendre in ``cos theta`` times a uniform azimuth.

    Returns unit vectors ``(N, 3)`` and weights summing to one.
    """
    nt, nphi = order
    mu, wmu = np.polynomial.legendre.leggauss(nt)
    phi = (np.arange(nphi) + 0.5) * (2 * np.pi / nphi)
    st = np.sqrt(1 - mu ** 2)
    pts = np.stack(
        [
            (st[:, None] * np.cos(phi)).ravel(),
            (st[:, None] * np.sin(phi)).ravel(),
            np.repeat(mu, nphi),
        ],
        axis=1,
    )
    w = np.repeat(wmu, nphi) / (2 * nphi)
    return pts, w


def _sampler(f) -> Callable[[np.ndarray], np.ndarray]:
    if callable(f) and not isinstance(f, ScalarField):
        return f
    if isinstance(f, ScalarField):
        g = f.grid
        data = np.real(f.samples)

        def interp(p):
            idx = (np.asarray(p) + g.L) / g.h
            return map_coordinates(data, idx.T, order=3, mode="grid-wrap")

        return interp
    raise TypeError("data must be a ScalarField or a callable of points (N, 3)")


def kirchhoff_point_eval(u0, u1, t: float, c: float, x, order: tuple[int, int] = (32, 64), box_L: Optional[float] = None):
    """Kirchhoff's formula at one point.

    ``u(t,x) = d/dt [t M_{u0}(x, ct)] + t M_{u1}(x, ct)`` with ``M`` the sphere
    mean; the time derivative is a central difference with step ``t * 1e-4``.
    Data may be callables ``f(points)`` or grid fields (tricubic interpolation).
    """
    x = np.asarray(x, float)
    if t <= 0:
        raise ValueError("Kirchhoff evaluation needs t > 0")
    L = box_L
    for f in (u0, u1):
        if isinstance(f, ScalarField):
            L = f.grid.L if L is None else min(L, f.grid.L)
    if L is not None and np.any(np.abs(x) + c * t * 1.0001 >= L):
        raise GridError("Kirchhoff sphere leaves the box")
    pts, w = sphere_rule(order)
    s0, s1 = _sampler(u0), _sampler(u1)

    def mean(sampler, rad):
        return float(np.sum(w * sampler(x + rad * pts)))

    dt = t * 1e-4
    d0 = ((t + dt) * mean(s0, c * (t + dt)) - (t - dt) * mean(s0, c * (t - dt))) / (2 * dt)
    return d0 + t * mean(s1, c * t)


@dataclass(frozen=True)
class HuygensShell:
    """Smooth indicator of the sphere ``|y - center| = t``.

    For ``t >= 1`` it is 1 within ``width`` of the sphere and vanishes beyond
    ``2 width``; for ``t < 1`` it is the matching smooth indicator of the ball
    of radius ``t``.
    """

    center: tuple
    t: float
    width: float = 0.01

    def __post_init__(self):
        if self.t < 0 or self.width <= 0:
            raise ValueError("shell needs t >= 0 and width > 0")

    @property
    def is_ball(self) -> bool:
        return self.t < 1

    @property
    def outer(self) -> float:
        return self.t + 2 * self.width

    def profile(self, rho):
        rho = np.asarray(rho, float)
        w = self.width
        up = 1.0 - smooth_step((rho - self.t - w) / w)
        if self.is_ball:
            return up
        return up * smooth_step((rho - (self.t - 2 * w)) / w)


def huygens_cutoff(f: ScalarField, shell: HuygensShell) -> ScalarField:
    g = f.grid
    c = np.asarray(shell.center, float)
    if np.any(np.abs(c) + shell.outer >= g.L):
        raise GridError("Huygens shell leaves the box")
    x, y, z = g.coords
    d = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)
    return f.with_samples(f.samples * shell.profile(d), f.support_radius)


def center_value_radial(grid: RadialGrid, profile_fn: Callable, t: float, c: float = 1.0,
                        shell: Optional[HuygensShell] = None) -> float:
    """Value at the origin of ``sin(ct|D|)/(c|D|) g`` for radial ``g(|y|) = profile_fn(|y|)``.

    With ``shell`` the data is first multiplied by the shell profile.  Used with
    ``profile_fn`` equal to the spherical mean of a datum about the evaluation
    point, which is all a radial multiplier sees there.
    """
    prof = profile_fn(grid.r)
    if shell is not None:
        prof = prof * shell.profile(grid.r)
    f = RadialField(grid, np.asarray(prof, float))
    return float(np.real(sine_prop(f, t, c, check=False).profile[0]))


def huygens_residual(u0: Field, u1: Field, t: float, c: float = 1.0, margin: float = 0.5) -> float:
    """Largest ``|u(t, x)|`` off the shell ``ct - R - margin < |x| < ct + R + margin``.

    ``R`` is the certified support radius of the data; the result is
    normalised by ``||u0||_inf + ||u1||_inf``.
    """
    radii = [_outer(u0), _outer(u1)]
    if any(R is None for R in radii):
        raise ValueError("Huygens residual needs data with certified support")
    R = max(radii)
    for f in (u0, u1):
        if isinstance(f, RadialField) and f.center != 0:
            raise ValueError("radial data must be centred at the origin")
    u = wave_solution(u0, u1, t, c, margin=margin)
    scale = norm(u0, np.inf) + norm(u1, np.inf)
    if isinstance(u, RadialField):
        r, vals = u.grid.r, np.abs(u.profile)
    else:
        r, vals = u.grid.radius, np.abs(u.samples)
    off = (r <= c * t - R - margin) | (r >= c * t + R + margin)
    if not off.any():
        return 0.0
    return float(vals[off].max() / scale)
