"""Pseudo-spectral time stepping for cubic multi-speed wave systems.

The state is advanced in the interaction picture: the free flow of each
component is applied exactly in Fourier space and the nonlinearity is
integrated with a four-stage Lawson scheme.  Products are evaluated in
physical space and the result is truncated to the ball ``|xi| <= 2/3 *
nyquist`` before it re-enters the spectral state.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft as sfft

from ..grid import Grid3, GridError, ScalarField
from .system import SystemSpec

__all__ = [
    "State",
    "SpectralOps",
    "CFLError",
    "FixedPointError",
    "SmallnessError",
    "AliasingError",
    "eval_nonlinearity",
    "step",
    "Stepper",
]

Forcing = Callable[[float], np.ndarray]


class CFLError(ValueError):
    """Time step exceeds the CFL bound ``h / c_max``."""


class FixedPointError(RuntimeError):
    """The ``u_tt`` elimination did not converge; the solution has left the small-data regime."""


class SmallnessError(RuntimeError):
    """Quasilinear coefficients are too large for the ``u_tt`` elimination."""


class AliasingError(ValueError):
    """State carries too much energy above the dealiasing radius."""


@dataclass(frozen=True, eq=False)
class State:
    """``u`` and ``v = u_t`` as arrays of shape ``(m, n, n, n)`` on one grid."""

    grid: Grid3
    t: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, float)
        v = np.asarray(self.v, float)
        n = self.grid.n
        if u.ndim == 3:
            u = u[None]
        if v.ndim == 3:
            v = v[None]
        if u.shape != v.shape or u.shape[1:] != (n, n, n):
            raise GridError(f"u and v must share shape (m, {n}, {n}, {n}); got {u.shape}, {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @classmethod
    def from_fields(cls, u: Sequence[ScalarField], v: Sequence[ScalarField], t: float = 0.0) -> "State":
        grids = {f.grid for f in list(u) + list(v)}
        if len(grids) != 1:
            raise GridError("all fields of a state must share one grid")
        g = grids.pop()
        return cls(g, float(t), np.stack([np.real(f.samples) for f in u]), np.stack([np.real(f.samples) for f in v]))

    @classmethod
    def zeros(cls, grid: Grid3, m: int = 1, t: float = 0.0) -> "State":
        z = np.zeros((m,) + (grid.n,) * 3)
        return cls(grid, t, z, z.copy())

    def fields(self) -> tuple[list[ScalarField], list[ScalarField]]:
        return ([ScalarField(self.grid, a) for a in self.u], [ScalarField(self.grid, a) for a in self.v])


class SpectralOps:
    """Real-FFT derivatives, the free flow and spectral norms on a grid."""

    def __init__(self, grid: Grid3, dealias: float = 2.0 / 3.0):
        self.grid = grid
        self.dealias = dealias
        n = grid.n
        k = grid.freq_axis
        kr = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.h)
        self.k = (k[:, None, None], k[None, :, None], kr[None, None, :])
        nyq_full = np.abs(np.fft.fftfreq(n, d=1.0 / n)) == n // 2
        nyq_half = np.arange(kr.size) == n // 2
        masks = (nyq_full[:, None, None], nyq_full[None, :, None], nyq_half[None, None, :])
        # odd derivatives drop the unpaired Nyquist mode
        self.ik = tuple(np.where(mk, 0.0, 1j * kk) for kk, mk in zip(self.k, masks))
        self.rho = np.sqrt(self.k[0] ** 2 + self.k[1] ** 2 + self.k[2] ** 2)
        self.mask = self.rho <= dealias * grid.nyquist
        w = np.full(kr.size, 2.0)
        w[0] = 1.0
        if n % 2 == 0:
            w[-1] = 1.0
        self.weights = np.broadcast_to(w[None, None, :], self.rho.shape)
        self._parseval = grid.h ** 3 / n ** 3
        self.shape = (n, n, n)
        self._flow_cache: dict = {}

    def fft(self, a: np.ndarray) -> np.ndarray:
        return sfft.rfftn(a, axes=(-3, -2, -1))

    def ifft(self, a: np.ndarray) -> np.ndarray:
        return sfft.irfftn(a, s=self.shape, axes=(-3, -2, -1))

    def bracket(self, s: float) -> np.ndarray:
        return (1.0 + self.rho ** 2) ** (s / 2)

    def sq_norm(self, a_hat: np.ndarray, s: float = 0.0) -> float:
        """Squared ``H^s`` norm of the real field with half-spectrum ``a_hat``."""
        w = self.weights * (self.bracket(2 * s) if s else 1.0)
        return float(self._parseval * np.sum(w * np.abs(a_hat) ** 2))

    def energy(self, uh: np.ndarray, vh: np.ndarray, s: float, speeds=None) -> float:
        """``(sum_i ||v^i||_{H^s}^2 + c_i^2 ||grad u^i||_{H^s}^2)^{1/2}``."""
        c = np.ones(uh.shape[0]) if speeds is None else np.asarray(speeds, float)
        w = self.weights * self.bracket(2 * s)
        tot = 0.0
        for i in range(uh.shape[0]):
            tot += np.sum(w * (np.abs(vh[i]) ** 2 + (c[i] * self.rho) ** 2 * np.abs(uh[i]) ** 2))
        return float(np.sqrt(self._parseval * tot))

    def high_fraction(self, uh: np.ndarray, vh: np.ndarray) -> float:
        """Share of the ``H^1 x L^2`` size carried outside the dealiasing ball."""
        dens = self.weights * (np.abs(vh) ** 2 + (1 + self.rho ** 2) * np.abs(uh) ** 2)
        tot = dens.sum()
        return float(np.sqrt(dens[..., ~self.mask].sum() / tot)) if tot > 0 else 0.0

    def _flow_factors(self, w_scale: float, tau: float):
        key = (float(w_scale), float(tau))
        hit = self._flow_cache.get(key)
        if hit is None:
            w = w_scale * self.rho
            cs, sn = np.cos(w * tau), np.sin(w * tau)
            with np.errstate(invalid="ignore", divide="ignore"):
                sw = np.where(w > 0, sn / np.where(w > 0, w, 1.0), tau)
            hit = (cs, sw, -w * sn)
            if len(self._flow_cache) > 8:
                self._flow_cache.clear()
            self._flow_cache[key] = hit
        return hit

    def flow(self, uh, vh, tau: float, speeds):
        """Free evolution over ``tau`` of ``(u_hat, v_hat)`` per component."""
        ou, ov = np.empty_like(uh), np.empty_like(vh)
        for i, c in enumerate(speeds):
            cs, sw, wsn = self._flow_factors(c, tau)
            ou[i] = cs * uh[i] + sw * vh[i]
            ov[i] = wsn * uh[i] + cs * vh[i]
        return ou, ov

    def flow_forcing(self, gh, tau: float, speeds):
        """Free evolution over ``tau`` of ``(0, g_hat)``."""
        ou, ov = np.empty_like(gh), np.empty_like(gh)
        for i, c in enumerate(speeds):
            cs, sw, _ = self._flow_factors(c, tau)
            ou[i] = sw * gh[i]
            ov[i] = cs * gh[i]
        return ou, ov


class _Derivatives:
    """Lazily computed physical derivatives of ``u`` (``d_0 u`` is ``v``)."""

    def __init__(self, ops: SpectralOps, uh: np.ndarray, vh: np.ndarray):
        self.ops, self.uh, self.vh = ops, uh, vh
        self._cache: dict = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def u(self, j: int) -> np.ndarray:
        return self._get(("u", j), lambda: self.ops.ifft(self.uh[j]))

    def d(self, g: int, j: int) -> np.ndarray:
        if g == 0:
            return self._get(("v", j), lambda: self.ops.ifft(self.vh[j]))
        return self._get(("d", g, j), lambda: self.ops.ifft(self.ops.ik[g - 1] * self.uh[j]))

    def dd(self, a: int, b: int, j: int) -> np.ndarray:
        """Second derivative for ``(a, b) != (0, 0)``."""
        a, b = sorted((a, b))
        if a == 0:
            return self._get(("dv", b, j), lambda: self.ops.ifft(self.ops.ik[b - 1] * self.vh[j]))
        ops = self.ops
        return self._get(("dd", a, b, j), lambda: ops.ifft(ops.ik[a - 1] * ops.ik[b - 1] * self.uh[j]))

    def lap(self, j: int) -> np.ndarray:
        return self._get(("lap", j), lambda: self.ops.ifft(-(self.ops.rho ** 2) * self.uh[j]))

    def factor(self, kind) -> np.ndarray:
        # kind is ("u", k) or ("d", g, k)
        return self.u(kind[1]) if kind[0] == "u" else self.d(kind[1], kind[2])

    def product(self, p, q) -> np.ndarray:
        key = ("prod",) + tuple(sorted((p, q)))
        return self._get(key, lambda: self.factor(p) * self.factor(q))


def _plan(spec: SystemSpec):
    """Nonzero terms grouped by output slot, built once per SystemSpec."""
    cached = spec.__dict__.get("_term_plan")
    if cached is not None:
        return cached
    m = spec.m
    coef: dict = {}

    def put(slot, c, f1, f2):
        key = tuple(sorted((f1, f2)))
        terms = coef.setdefault(slot, {})
        terms[key] = terms.get(key, 0.0) + float(c)

    for a, b, g, d, i, j, k, l in np.argwhere(spec.Q1 != 0):
        if a <= b and i <= j:
            put((a, b, i, j), spec.Q1[a, b, g, d, i, j, k, l], ("d", int(g), int(k)), ("d", int(d), int(l)))
    for a, b, g, i, j, k, l in np.argwhere(spec.Q2 != 0):
        if a <= b and i <= j:
            put((a, b, i, j), spec.Q2[a, b, g, i, j, k, l], ("d", int(g), int(k)), ("u", int(l)))
    for a, b, i, j, k, l in np.argwhere(spec.Q3 != 0):
        if a <= b and i <= j:
            put((a, b, i, j), spec.Q3[a, b, i, j, k, l], ("u", int(k)), ("u", int(l)))
    coef = {tuple(int(x) for x in slot): [(c, p, q) for (p, q), c in terms.items() if c != 0]
            for slot, terms in coef.items()}
    semi: list = [[] for _ in range(m)]
    for a, b, g, i, j, k, l in np.argwhere(spec.S1 != 0):
        semi[i].append((float(spec.S1[a, b, g, i, j, k, l]), ("d", int(a), int(j)), ("d", int(b), int(k)), ("d", int(g), int(l))))
    for a, b, i, j, k, l in np.argwhere(spec.S2 != 0):
        semi[i].append((float(spec.S2[a, b, i, j, k, l]), ("d", int(a), int(j)), ("d", int(b), int(k)), ("u", int(l))))
    for a, i, j, k, l in np.argwhere(spec.S3 != 0):
        semi[i].append((float(spec.S3[a, i, j, k, l]), ("u", int(k)), ("u", int(l)), ("d", int(a), int(j))))
    plan = ({s: t for s, t in coef.items() if t}, semi)
    object.__setattr__(spec, "_term_plan", plan)
    return plan


def _coefficient_fields(spec: SystemSpec, D: _Derivatives):
    """Pointwise quasilinear coefficients for ``a <= b`` and ``i <= j``."""
    coef, _ = _plan(spec)
    out = {}
    for slot, terms in coef.items():
        acc = None
        for c, p, q in terms:
            prod = D.product(p, q)
            if acc is None:
                acc = c * prod
            else:
                acc += c * prod
        out[slot] = acc
    return out


def _semilinear(spec: SystemSpec, D: _Derivatives, i: int):
    _, semi = _plan(spec)
    acc = None
    for c, p, q, r in semi[i]:
        term = c * D.product(p, q) * D.factor(r)
        if acc is None:
            acc = term
        else:
            acc += term
    return acc


@dataclass
class _Evaluation:
    G: np.ndarray          # physical, (m, n, n, n)
    accel: np.ndarray      # u_tt including the linear part and forcing
    q_sup: float
    iterations: int


def _evaluate(spec: SystemSpec, D: _Derivatives, *, forcing: Optional[np.ndarray] = None,
              accel: Optional[np.ndarray] = None, q_max: Optional[float] = 0.1,
              tol: float = 1e-10, max_iter: int = 3) -> _Evaluation:
    m = spec.m
    shape = D.ops.shape
    coef = _coefficient_fields(spec, D)
    q_sup = max((float(np.abs(f).max()) for f in coef.values()), default=0.0)
    if q_max is not None and q_sup > q_max:
        raise SmallnessError(f"quasilinear coefficients reach {q_sup:.3g} > {q_max}")
    G = np.zeros((m,) + shape)
    for (a, b, i, j), Q in coef.items():
        if a == 0 and b == 0:
            continue
        mult = 1.0 if a == b else 2.0
        G[i] += mult * Q * D.dd(a, b, j)
        if i != j:
            G[j] += mult * Q * D.dd(a, b, i)
    for i in range(m):
        s = _semilinear(spec, D, i)
        if s is not None:
            G[i] += s
    q00 = {(i, j): f for (a, b, i, j), f in coef.items() if a == 0 and b == 0}
    iterations = 0
    if accel is None:
        base = np.stack([spec.speeds[i] ** 2 * D.lap(i) for i in range(m)]) + G
        if forcing is not None:
            base = base + forcing
        accel = base
        if q00:
            scale = max(float(np.abs(base).max()), 1e-300)
            for iterations in range(1, max_iter + 1):
                new = base.copy()
                for (i, j), Q in q00.items():
                    new[i] += Q * accel[j]
                    if i != j:
                        new[j] += Q * accel[i]
                change = float(np.abs(new - accel).max())
                accel = new
                if change <= tol * scale:
                    break
            else:
                raise FixedPointError(
                    f"u_tt iteration did not converge in {max_iter} steps (last change {change / scale:.3g} relative)"
                )
    for (i, j), Q in q00.items():
        G[i] += Q * accel[j]
        if i != j:
            G[j] += Q * accel[i]
    return _Evaluation(G, accel, q_sup, iterations)


def eval_nonlinearity(spec: SystemSpec, state: State, *, accel: Optional[np.ndarray] = None,
                      forcing: Optional[np.ndarray] = None, q_max: Optional[float] = 0.1,
                      alias_tol: float = 1e-4) -> list[ScalarField]:
    """Right-hand side ``G^i`` of each component at the given state.

    ``u_tt`` enters through the ``(0, 0)`` coefficients; unless ``accel`` is
    supplied it is resolved from ``u_tt = c^2 Lap u + G + forcing`` by
    fixed-point iteration.
    """
    if state.m != spec.m:
        raise ValueError(f"state has {state.m} components, spec has {spec.m}")
    ops = SpectralOps(state.grid)
    uh, vh = ops.fft(state.u), ops.fft(state.v)
    frac = ops.high_fraction(uh, vh)
    if frac > alias_tol:
        raise AliasingError(f"{frac:.3g} of the state lies above the dealiasing radius (limit {alias_tol})")
    ev = _evaluate(spec, _Derivatives(ops, uh, vh), forcing=forcing, accel=accel, q_max=q_max)
    return [ScalarField(state.grid, g) for g in ev.G]


class Stepper:
    """Reusable integrator for one spec on one grid; works on half-spectra."""

    def __init__(self, spec: SystemSpec, grid: Grid3, *, forcing: Optional[Forcing] = None,
                 cfl: float = 1.0, q_max: Optional[float] = 0.1, fp_tol: float = 1e-10, fp_iter: int = 3):
        self.spec = spec
        self.grid = grid
        self.ops = SpectralOps(grid)
        self.forcing = forcing
        self.cfl = cfl
        self.q_max = q_max
        self.fp_tol = fp_tol
        self.fp_iter = fp_iter
        self.last_q_sup = 0.0

    def check_dt(self, dt: float):
        limit = self.cfl * self.grid.h / self.spec.c_max
        if not (abs(dt) <= limit * (1 + 1e-12)):
            raise CFLError(f"|dt| = {abs(dt)} exceeds the CFL bound {limit}")

    def nonlinear(self, t: float, uh, vh) -> np.ndarray:
        if self.spec.is_linear and self.forcing is None:
            return np.zeros_like(vh)
        F = None if self.forcing is None else np.asarray(self.forcing(t), float).reshape(uh.shape[:1] + self.ops.shape)
        ev = _evaluate(self.spec, _Derivatives(self.ops, uh, vh), forcing=F,
                       q_max=self.q_max, tol=self.fp_tol, max_iter=self.fp_iter)
        self.last_q_sup = ev.q_sup
        src = ev.G if F is None else ev.G + F
        return self.ops.fft(src) * self.ops.mask

    def advance(self, t: float, uh, vh, dt: float):
        """One Lawson four-stage step; returns the new half-spectra."""
        self.check_dt(dt)
        c = self.spec.speeds
        S = lambda tau, a, b: self.ops.flow(a, b, tau, c)
        Sf = lambda tau, g: self.ops.flow_forcing(g, tau, c)
        h = dt
        Uh = S(h / 2, uh, vh)
        k1 = self.nonlinear(t, uh, vh)
        a1 = Sf(h / 2, k1)
        k2 = self.nonlinear(t + h / 2, Uh[0] + h / 2 * a1[0], Uh[1] + h / 2 * a1[1])
        k3 = self.nonlinear(t + h / 2, Uh[0], Uh[1] + h / 2 * k2)
        Ufull = S(h, uh, vh)
        a3 = Sf(h / 2, k3)
        k4 = self.nonlinear(t + h, Ufull[0] + h * a3[0], Ufull[1] + h * a3[1])
        b1 = Sf(h, k1)
        b23 = Sf(h / 2, k2 + k3)
        nu = Ufull[0] + h / 6 * (b1[0] + 2 * b23[0])
        nv = Ufull[1] + h / 6 * (b1[1] + 2 * b23[1] + k4)
        return nu, nv, k1


def step(spec: SystemSpec, state: State, dt: float, *, forcing: Optional[Forcing] = None,
         cfl: float = 1.0, q_max: Optional[float] = 0.1) -> State:
    """Advance ``state`` by ``dt`` (negative ``dt`` integrates backwards)."""
    if state.m != spec.m:
        raise ValueError(f"state has {state.m} components, spec has {spec.m}")
    st = Stepper(spec, state.grid, forcing=forcing, cfl=cfl, q_max=q_max)
    uh, vh = st.ops.fft(state.u), st.ops.fft(state.v)
    nu, nv, _ = st.advance(state.t, uh, vh, dt)
    return State(state.grid, state.t + dt, st.ops.ifft(nu), st.ops.ifft(nv))
