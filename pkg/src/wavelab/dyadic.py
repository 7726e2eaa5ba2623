"""Littlewood-Paley shells, physical annuli and Besov norms.

The profile ``psi`` equals 1 on ``|r| <= 5/4`` and 0 for ``|r| >= 8/5``.
Shells are ``psi_dot_k(r) = psi(r/2^k) - psi(r/2^(k-1))``; the
inhomogeneous family uses ``psi_dot_k`` for ``k >= 0`` and ``psi(2r)`` for
``k = -1``.  The widened symbols sum three neighbouring shells (for ``k = -1``
the widened inhomogeneous symbol is ``psi(r)``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Optional

import numpy as np

from .grid import Grid3, GridError, ScalarField, apply_radial_multiplier, norm
from .radial import RadialField, RadialGrid
from .report import ConstantReport, make_report

__all__ = [
    "CutoffProfile",
    "PSI",
    "ResolutionError",
    "resolvable_range",
    "covering_scale",
    "project",
    "physical_cutoff",
    "besov_norm",
    "weighted_shell_equivalence_check",
    "interaction_triples",
    "interaction_pairs",
]

Kind = Literal["P", "Pdot", "P[[]]", "Pdot[[]]"]


class ResolutionError(ValueError):
    """Requested scale cannot be represented on the grid."""


def _glue(x):
    x = np.asarray(x, float)
    pos = x > 0
    return np.where(pos, np.exp(-1.0 / np.where(pos, x, 1.0)), 0.0)


def smooth_step(x):
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    a = _glue(x)
    b = _glue(1.0 - np.asarray(x, float))
    return a / (a + b)


@dataclass(frozen=True)
class CutoffProfile:
    inner: float = 1.25
    outer: float = 1.6

    def psi(self, r):
        r = np.abs(np.asarray(r, float))
        return 1.0 - smooth_step((r - self.inner) / (self.outer - self.inner))

    def dot(self, k: int, r):
        return self.psi(np.asarray(r) / 2.0 ** k) - self.psi(np.asarray(r) / 2.0 ** (k - 1))

    def inhom(self, k: int, r):
        if k < -1:
            raise ValueError("inhomogeneous shells start at k = -1")
        if k == -1:
            return self.psi(2.0 * np.asarray(r))
        return self.dot(k, r)

    def dot_wide(self, k: int, r):
        return self.psi(np.asarray(r) / 2.0 ** (k + 1)) - self.psi(np.asarray(r) / 2.0 ** (k - 2))

    def inhom_wide(self, k: int, r):
        if k < -1:
            raise ValueError("inhomogeneous shells start at k = -1")
        if k == -1:
            return self.psi(r)
        return self.dot_wide(k, r)

    def symbol(self, kind: Kind, k: int):
        table = {"P": self.inhom, "Pdot": self.dot, "P[[]]": self.inhom_wide, "Pdot[[]]": self.dot_wide}
        try:
            fn = table[kind]
        except KeyError:
            raise ValueError(f"unknown projection kind {kind!r}") from None
        return lambda r: fn(k, r)

    def support(self, kind: Kind, k: int) -> tuple[float, float]:
        """Closed interval containing the support of the symbol."""
        lo_f, hi_f = self.inner / 2, self.outer
        if kind == "Pdot":
            return lo_f * 2.0 ** k, hi_f * 2.0 ** k
        if kind == "Pdot[[]]":
            return lo_f * 2.0 ** (k - 1), hi_f * 2.0 ** (k + 1)
        if kind == "P":
            return (0.0, hi_f / 2) if k == -1 else (lo_f * 2.0 ** k, hi_f * 2.0 ** k)
        if kind == "P[[]]":
            return (0.0, hi_f) if k == -1 else (lo_f * 2.0 ** (k - 1), hi_f * 2.0 ** (k + 1))
        raise ValueError(f"unknown projection kind {kind!r}")


PSI = CutoffProfile()


def resolvable_range(grid) -> tuple[int, int]:
    """Smallest and largest shell index the grid resolves."""
    k_min = math.ceil(math.log2(math.pi / grid.L)) - 1
    k_max = math.floor(math.log2(grid.n * math.pi / (2 * grid.L))) - 2
    return k_min, k_max


def covering_scale(grid, profile: CutoffProfile = PSI) -> int:
    """Smallest ``K`` whose inhomogeneous shells ``-1..K`` partition every lattice frequency."""
    top = grid.max_abs_xi if isinstance(grid, Grid3) else grid.nyquist
    return max(-1, math.ceil(math.log2(top / profile.inner)))


def _check_scale(grid, kind: str, k: int):
    k_min, k_max = resolvable_range(grid)
    lo = -1 if kind.startswith("P") and not kind.startswith("Pdot") else k_min
    if k < lo or k > k_max:
        raise ResolutionError(
            f"scale k={k} outside the resolvable range [{lo}, {k_max}] for L={grid.L}, n={grid.n}"
        )


def project(f, kind: Kind, k: int, *, strict: bool = True, profile: CutoffProfile = PSI):
    """Apply a frequency projection.  ``strict`` enforces the resolvable range."""
    if kind in ("P", "P[[]]") and k < -1:
        raise ResolutionError(f"inhomogeneous projection needs k >= -1, got {k}")
    if strict:
        _check_scale(f.grid, kind, k)
    sym = profile.symbol(kind, k)
    return apply_radial_multiplier(f, sym, float(sym(np.zeros(1))[0]))


def physical_cutoff(f, j: int, homogeneous: bool = False, profile: CutoffProfile = PSI):
    """Multiply by the spatial annulus ``psi_j(|x|)`` (``psi_dot_j`` if homogeneous)."""
    fn = profile.dot if homogeneous else profile.inhom
    if isinstance(f, RadialField):
        if f.center != 0:
            raise ValueError("spatial annuli need a field centred at the origin")
        return f.with_profile(f.profile * fn(j, f.grid.r))
    return f.with_samples(f.samples * fn(j, f.grid.radius), f.support_radius)


def shell_indices(grid) -> range:
    return range(-1, covering_scale(grid) + 1)


def besov_norm(f, s: float, p: float, r: float, *, with_tail: bool = False):
    """``l^r`` over ``k`` in ``[-1, k_max]`` of ``2^{ks} ||P_k f||_{L^p}``.

    Shells beyond the resolvable range are not summed; with ``with_tail`` the
    relative ``L^2`` size of what was dropped is returned as well.
    """
    _, k_max = resolvable_range(f.grid)
    if k_max < -1:
        raise ResolutionError("grid resolves no inhomogeneous shell")
    terms = np.array([2.0 ** (k * s) * norm(project(f, "P", k), p) for k in range(-1, k_max + 1)])
    if np.isinf(r):
        val = float(terms.max())
    else:
        val = float(np.sum(terms ** r) ** (1.0 / r))
    if not with_tail:
        return val
    low = apply_radial_multiplier(f, lambda x: PSI.psi(x / 2.0 ** k_max), 1.0)
    total = norm(f, 2)
    rest = f.with_samples(f.samples - low.samples) if not isinstance(f, RadialField) else f.with_profile(f.profile - low.profile)
    tail = norm(rest, 2) / total if total > 0 else 0.0
    return val, float(tail)


def _spatial_indices(grid) -> range:
    reach = np.sqrt(3.0) * grid.L if isinstance(grid, Grid3) else grid.L
    return range(-1, max(-1, math.ceil(math.log2(reach / PSI.inner))) + 1)


def weighted_shell_equivalence_check(fields: Iterable, beta: float) -> ConstantReport:
    """Compare ``||<x>^beta f||_2`` with the max and the sum of ``2^{j beta} ||Q_j P_k f||_2``.

    Samples are the two implied constants ``max/middle`` and ``middle/sum``;
    both are at most 1 when ``beta = 0``.
    """
    if not -1.5 < beta < 1.5:
        raise ValueError(f"beta must lie in (-3/2, 3/2), got {beta}")
    lefts, rights, mids = [], [], []
    for f in fields:
        g = f.grid
        middle = norm(f, 2, lambda x: (1 + x * x) ** (beta / 2))
        pieces = []
        for k in shell_indices(g):
            pk = project(f, "P", k, strict=False)
            for j in _spatial_indices(g):
                pieces.append(2.0 ** (j * beta) * norm(physical_cutoff(pk, j), 2))
        pieces = np.array(pieces)
        lefts.append(pieces.max())
        rights.append(pieces.sum())
        mids.append(middle)
    lefts, rights, mids = map(np.asarray, (lefts, rights, mids))
    c_left = lefts / mids
    c_right = mids / rights
    rep = make_report(
        "weighted-shell-equivalence",
        {"beta": beta},
        np.concatenate([c_left, c_right]),
        extras={"left_constant": c_left, "right_constant": c_right, "middle": mids},
    )
    return rep


def _ok_Y1(ks, k):
    return abs(max(ks) - k) <= 4


def _ok_Y2(ks, k):
    s = sorted(ks)
    return s[-1] >= k + 4 and s[-1] - s[1] <= 4


def interaction_triples(k: int, k_max: int) -> list[tuple[int, int, int]]:
    """Scale triples that can feed shell ``k`` of a trilinear product."""
    if k < -1:
        raise ValueError("k must be >= -1")
    rng = range(-1, k_max + 1)
    return [t for t in itertools.product(rng, rng, rng) if _ok_Y1(t, k) or _ok_Y2(t, k)]


def interaction_pairs(k: int, k_max: int) -> list[tuple[int, int]]:
    """Scale pairs that can feed shell ``k`` of a bilinear product."""
    if k < -1:
        raise ValueError("k must be >= -1")
    rng = range(-1, k_max + 1)
    out = []
    for a, b in itertools.product(rng, rng):
        hi, lo = max(a, b), min(a, b)
        if abs(hi - k) <= 4 or (hi >= k + 4 and hi - lo <= 4):
            out.append((a, b))
    return out
