"""Initial data with measured smallness norms, and the lifespan probe."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..grid import Grid3, GridError, ScalarField, certify_support
from ..profiles import gaussian, poly_bump, tail_profile
from .diagnostics import DiagnosticsTrace, evolve
from .solver import SpectralOps, State
from .system import SystemSpec

__all__ = [
    "InitialData",
    "UnresolvedDataError",
    "make_initial_data",
    "weighted_derivative_norms",
    "tail_exponents",
    "lifespan_probe",
    "LifespanRow",
    "PROFILES",
]

PROFILES = ("compact-bump", "gaussian", "weighted-tail")


class UnresolvedDataError(GridError):
    """Data norms cannot be measured reliably on the grid."""


def tail_exponents(mu: float) -> tuple[float, float]:
    """Decay rates ``(q0, q1)`` of ``u0`` and ``u1`` for the weighted-tail profile.

    ``u0 ~ <x>^{-q0}`` needs ``q0 > 3/2`` to lie in ``L^2`` and ``q0 > mu + 1/2``
    so that ``<x>^mu grad u0`` does; ``<x>^mu u1`` needs ``q1 > mu + 3/2``.
    A margin of ``1/4`` is added to each.
    """
    return max(mu + 0.5, 1.5) + 0.25, mu + 1.75


@dataclass(frozen=True, eq=False)
class InitialData:
    u0: list
    u1: list
    eps: float
    profile: str
    seed: int
    norms: dict = field(default_factory=dict)

    def state(self, t: float = 0.0) -> State:
        return State.from_fields(self.u0, self.u1, t)


def _multi_indices(order: int):
    for total in range(order + 1):
        for a in itertools.product(range(total + 1), repeat=3):
            if sum(a) == total:
                yield a


def weighted_derivative_norms(ops: SpectralOps, u0h: np.ndarray, u1h: np.ndarray, mu: float,
                              order: int = 5) -> list[float]:
    """``sum_{|a| = s} ||<x>^mu d^a (grad u0, u1)||_{L^2}`` for ``s = 0..order``.

    All components form one vector at each point.
    """
    g = ops.grid
    w2 = (1.0 + g.radius ** 2) ** mu
    dv = g.cell_volume
    out = [0.0] * (order + 1)
    for a in _multi_indices(order):
        sym = ops.ik[0] ** a[0] * ops.ik[1] ** a[1] * ops.ik[2] ** a[2]
        tot = np.zeros(ops.shape)
        for i in range(u0h.shape[0]):
            da = sym * u0h[i]
            for ik in ops.ik:
                tot += ops.ifft(ik * da) ** 2
            tot += ops.ifft(sym * u1h[i]) ** 2
        out[sum(a)] += float(np.sqrt(np.sum(w2 * tot) * dv))
    return out


def _shapes(profile: str, grid: Grid3, *, radius: float, sigma: float, mu: Optional[float], r_cut: float,
            N: int):
    r = grid.radius
    if profile == "compact-bump":
        # finite-smoothness bump: the H^{N+1} norm must be measurable on the grid
        f = poly_bump(r, radius, 2 * N + 6)
        return f, f, radius
    if profile == "gaussian":
        f = gaussian(r, sigma)
        return f, f, None
    if profile == "weighted-tail":
        if mu is None or not (0 < mu < 1):
            raise ValueError(f"weighted-tail data needs mu in (0, 1), got {mu}")
        q0, q1 = tail_exponents(mu)
        return tail_profile(r, q0, sigma, r_cut), tail_profile(r, q1, sigma, r_cut), None
    raise ValueError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")


def make_initial_data(profile: str, eps: float, seed: int = 0, *, grid: Grid3, m: int = 1, N: int = 4,
                      mu: Optional[float] = None, radius: float = 1.0, sigma: Optional[float] = None,
                      r_cut: float = 7.0, smoothing: Optional[float] = None, alias_tol: float = 1e-3,
                      edge_tol: float = 1e-8) -> InitialData:
    """Radial data scaled so the smallness quantity equals ``eps``.

    The smallness quantity is ``||u0||_{H^{N+1}} + ||u1||_{H^N}``, plus the
    weighted derivative sum of :func:`weighted_derivative_norms` for the
    weighted-tail profile (which also raises ``N`` to at least
    ``ceil(4 + 2 mu)``).  ``seed`` fixes the split between ``u0`` and ``u1``
    and the per-component amplitudes.

    The weighted-tail shapes are ``<r/sigma>^{-q}`` rolled off at ``r_cut`` and
    then convolved with a Gaussian of width ``smoothing`` (default 2), which
    keeps the polynomial tail but removes the slowly decaying high
    frequencies of the rational core.
    """
    if eps < 0 or not np.isfinite(eps):
        raise ValueError(f"eps must be a non-negative number, got {eps}")
    tail = profile == "weighted-tail"
    if sigma is None:
        sigma = 3.0 if tail else 2.5
    if smoothing is None:
        smoothing = 2.0 if tail else 0.0
    if profile == "weighted-tail" and mu is not None:
        N = max(N, math.ceil(4 + 2 * mu))
    f0, f1, support = _shapes(profile, grid, radius=radius, sigma=sigma, mu=mu, r_cut=r_cut, N=N)
    ops = SpectralOps(grid)
    if smoothing > 0:
        blur = np.exp(-0.5 * (smoothing * ops.rho) ** 2)
        f0, f1 = ops.ifft(blur * ops.fft(f0)), ops.ifft(blur * ops.fft(f1))
        support = None
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, np.pi / 2)
    amps = rng.uniform(0.5, 1.0, m)
    u0 = np.stack([a * math.cos(theta) * f0 for a in amps])
    u1 = np.stack([a * math.sin(theta) * f1 for a in amps])

    edge = grid.radius >= grid.L - grid.h
    peak = max(np.abs(f0).max(), np.abs(f1).max())
    if max(np.abs(f0[edge]).max(), np.abs(f1[edge]).max()) > edge_tol * peak:
        raise UnresolvedDataError(f"{profile} data is not negligible at the box edge (L={grid.L})")
    u0h, u1h = ops.fft(u0), ops.fft(u1)
    h0 = math.sqrt(sum(ops.sq_norm(a, N + 1) for a in u0h))
    h1 = math.sqrt(sum(ops.sq_norm(a, N) for a in u1h))
    hi = ops.weights * ops.bracket(2 * (N + 1)) * np.abs(u0h) ** 2 + ops.weights * ops.bracket(2 * N) * np.abs(u1h) ** 2
    frac = math.sqrt(hi[..., ~ops.mask].sum() / hi.sum())
    if frac > alias_tol:
        raise UnresolvedDataError(
            f"{frac:.3g} of the H^{N + 1} size lies above the dealiasing radius; refine the grid"
        )
    weighted = None
    if mu is not None:
        weighted = weighted_derivative_norms(ops, u0h, u1h, mu)
    raw = h0 + h1 + (sum(weighted) if tail else 0.0)
    scale = eps / raw
    u0s = [ScalarField(grid, a * scale) for a in u0]
    u1s = [ScalarField(grid, a * scale) for a in u1]
    if support is not None:
        u0s = [certify_support(f, support) for f in u0s]
        u1s = [certify_support(f, support) for f in u1s]
    norms = {
        "N": N,
        "u0_HN1": h0 * scale,
        "u1_HN": h1 * scale,
        "alias_fraction": frac,
        "sigma": sigma,
        "smoothing": smoothing,
        "smallness": raw * scale,
    }
    if weighted is not None:
        norms["mu"] = mu
        norms["weighted_by_order"] = [w * scale for w in weighted]
        norms["weighted"] = sum(weighted) * scale
    return InitialData(u0s, u1s, float(eps), profile, int(seed), norms)


@dataclass(frozen=True)
class LifespanRow:
    eps: float
    T_proxy: float
    capped: bool
    reason: str


def _probe_one(args) -> LifespanRow:
    spec, eps, threshold, grid, profile, horizon, dt, cadence, seed, data_kw, window = args
    if eps == 0:
        state = State.zeros(grid, spec.m)
    else:
        state = make_initial_data(profile, eps, seed, grid=grid, m=spec.m, **data_kw).state()

    def stop(tr: DiagnosticsTrace):
        e0 = tr.energy[0]
        if e0 > 0 and tr.energy[-1] > threshold * e0:
            return "norm-growth"
        return None

    tr = evolve(spec, state, horizon, cadence, dt=dt, shells=False, stop=stop, on_failure="stop", window=window)
    if tr.stopped is None:
        return LifespanRow(float(eps), float(horizon), True, "horizon")
    return LifespanRow(float(eps), float(tr.stopped[0]), False, str(tr.stopped[1]))


def lifespan_probe(spec: SystemSpec, eps_grid: Sequence[float], blowup_threshold: float = 10.0, *,
                   grid: Grid3, profile: str = "gaussian", horizon: float = 20.0, dt: float = 0.5,
                   cadence: Optional[float] = None, seed: int = 0, data_kw: Optional[dict] = None,
                   window: bool = True, workers: int = 1) -> list[LifespanRow]:
    """Time until the energy grows by ``blowup_threshold`` or the ``u_tt`` solve fails.

    Runs that reach ``horizon`` report it with ``capped=True``.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps grid must be strictly descending")
    if any(e < 0 for e in eps_grid):
        raise ValueError("eps must be non-negative")
    jobs = [(spec, e, blowup_threshold, grid, profile, horizon, dt, cadence, seed, dict(data_kw or {}), window)
            for e in eps_grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_probe_one, jobs))
    return [_probe_one(j) for j in jobs]
