"""Time evolution with monitored norms, and the scattering profile."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..dyadic import PSI, shell_indices
from ..grid import Grid3, ScalarField, check_window, measure_support_radius
from .solver import (
    AliasingError,
    FixedPointError,
    SmallnessError,
    SpectralOps,
    State,
    Stepper,
)
from .system import SystemSpec

__all__ = ["DiagnosticsTrace", "evolve", "scattering_profile", "ScatteringResult", "cumulative_lp"]


def cumulative_lp(times, values, p: float) -> np.ndarray:
    """Running ``(int_0^t |f|^p)^{1/p}`` by the trapezoid rule, safe for huge ``p``."""
    t = np.asarray(times, float)
    f = np.abs(np.asarray(values, float))
    out = np.zeros(t.size)
    for n in range(1, t.size):
        M = f[: n + 1].max()
        if M == 0:
            continue
        if np.isinf(p):
            out[n] = M
            continue
        g = (f[: n + 1] / M) ** p
        integral = float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(t[: n + 1])))
        out[n] = M * integral ** (1.0 / p) if integral > 0 else 0.0
    return out


def _lp(a: np.ndarray, p: float, dv: float) -> float:
    m = a.max()
    if m == 0:
        return 0.0
    if np.isinf(p):
        return float(m)
    if p > 50:
        # entries below this level underflow to zero after the power
        a = a[a > m * np.exp(-745.0 / p)]
    return float(m * (np.sum((a / m) ** p) * dv) ** (1.0 / p))


@dataclass
class DiagnosticsTrace:
    """Append-only record of monitored quantities at the snapshot times.

    ``energy`` is ``(sum_i ||u^i_t||_{H^N}^2 + c_i^2 ||grad u^i||_{H^N}^2)^{1/2}``,
    which is ``||d u||_{H^N}`` for unit speeds.  Shell columns hold, per
    snapshot and per inhomogeneous shell ``k``, spatial norms of ``P_k`` applied
    to ``(u, d u)``; the running time integrals are derived from them.
    """

    grid: Grid3
    speeds: tuple
    N: int = 4
    mu: float = 0.5
    delta: float = 5e-7
    shells: tuple = ()
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    u_sup: list = field(default_factory=list)
    du_sup: list = field(default_factory=list)
    q_sup: list = field(default_factory=list)
    shell_sup: list = field(default_factory=list)
    shell_sup_weighted: list = field(default_factory=list)
    shell_high_time: list = field(default_factory=list)
    shell_high_space: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    initial_spectrum: Optional[tuple] = None
    flags: list = field(default_factory=list)
    stopped: Optional[tuple] = None
    final_state: Optional[State] = None
    steps: int = 0
    dt: float = 0.0

    # exponents of the monitored space-time norms
    @property
    def weight_main(self) -> float:
        return self.mu / 2 - 10 * self.delta

    @property
    def high_time_exponents(self) -> tuple[float, float]:
        d = self.delta
        return 1 + 1 / (4 * d), (2 + 8 * d) / (1 - 4 * d)

    @property
    def high_space_exponents(self) -> tuple[float, float]:
        d = self.delta
        return 2 + 8 * d, 2 + 1 / (2 * d)

    def _t(self) -> np.ndarray:
        return np.asarray(self.times, float)

    def _shell_sum(self, rows: list, p_time: float, power: float) -> np.ndarray:
        if not self.shells or not rows:
            return np.zeros(len(self.times))
        A = np.asarray(rows, float)
        t = self._t()
        tot = np.zeros(t.size)
        for c, k in enumerate(self.shells):
            tot += 2.0 ** (power * k) * cumulative_lp(t, A[:, c], p_time)
        return tot

    @property
    def decay(self) -> np.ndarray:
        """``(1+t)^{0.9 mu} (||u||_inf + ||d u||_inf)``."""
        t = self._t()
        return (1 + t) ** (0.9 * self.mu) * (np.asarray(self.u_sup) + np.asarray(self.du_sup))

    @property
    def strichartz(self) -> np.ndarray:
        """``sum_k 2^{(1+delta)k} ||A P_k d^{<=1} u||_{L^2_t L^inf}`` with ``A = (1+t+|x|)^{mu/2-10 delta}``."""
        return self._shell_sum(self.shell_sup_weighted, 2.0, 1 + self.delta)

    @property
    def log_strichartz(self) -> np.ndarray:
        """Unweighted shell sum divided by ``ln(e + t)``."""
        return self._shell_sum(self.shell_sup, 2.0, 1 + self.delta) / np.log(np.e + self._t())

    @property
    def driver(self) -> np.ndarray:
        """``int_0^t ||d^{<=1} u||_{B^{1+delta}_{inf,1}}^2``."""
        t = self._t()
        if not self.shells or not self.shell_sup:
            return np.zeros(t.size)
        A = np.asarray(self.shell_sup, float)
        b = A @ (2.0 ** ((1 + self.delta) * np.asarray(self.shells, float)))
        g = b ** 2
        out = np.zeros(t.size)
        out[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))
        return out

    @property
    def bootstrap(self) -> dict[str, np.ndarray]:
        """Running values of the four monitored bootstrap quantities."""
        mu, d = self.mu, self.delta
        pt3, _ = self.high_time_exponents
        pt4, _ = self.high_space_exponents
        return {
            "energy": np.maximum.accumulate(np.asarray(self.energy, float)) if self.energy else np.zeros(0),
            "weighted_strichartz": self.strichartz,
            "high_time": self._shell_sum(self.shell_high_time, pt3, 3 + mu - 18.8 * d),
            "high_space": self._shell_sum(self.shell_high_space, pt4, 2 + mu - 18.8 * d),
        }

    def summary(self) -> dict:
        e = np.asarray(self.energy, float)
        out = {
            "snapshots": len(self.times),
            "t_final": float(self.times[-1]) if self.times else 0.0,
            "energy_initial": float(e[0]) if e.size else 0.0,
            "energy_sup": float(e.max()) if e.size else 0.0,
            "energy_ratio": float(e.max() / e[0]) if e.size and e[0] > 0 else 1.0,
            "decay_sup": float(self.decay.max()) if self.times else 0.0,
            "q_sup": float(max(self.q_sup, default=0.0)),
            "flags": list(self.flags),
            "stopped": None if self.stopped is None else [float(self.stopped[0]), self.stopped[1]],
        }
        if self.shells and self.shell_sup:
            out["strichartz_final"] = float(self.strichartz[-1])
            out["driver_final"] = float(self.driver[-1])
            out["bootstrap_final"] = {k: float(v[-1]) for k, v in self.bootstrap.items()}
        return out

    def columns(self) -> dict[str, np.ndarray]:
        """Plot-ready time series keyed by column name."""
        cols = {
            "t": self._t(),
            "energy": np.asarray(self.energy, float),
            "u_sup": np.asarray(self.u_sup, float),
            "du_sup": np.asarray(self.du_sup, float),
            "decay": self.decay,
        }
        if self.shells and self.shell_sup:
            cols["strichartz"] = self.strichartz
            cols["driver"] = self.driver
            for k, v in self.bootstrap.items():
                cols[f"bootstrap_{k}"] = v
        return cols


class _Recorder:
    def __init__(self, trace: DiagnosticsTrace, ops: SpectralOps, shells: bool, keep_profiles: bool):
        self.tr = trace
        self.ops = ops
        self.keep = keep_profiles
        g = trace.grid
        if shells:
            trace.shells = tuple(shell_indices(g))
            self.symbols = [PSI.inhom(k, ops.rho) for k in trace.shells]
        self.radius = g.radius

    def record(self, t: float, uh, vh, q_sup: float):
        tr, ops = self.tr, self.ops
        tr.times.append(float(t))
        tr.energy.append(ops.energy(uh, vh, tr.N, tr.speeds))
        tr.q_sup.append(float(q_sup))
        u = ops.ifft(uh)
        du2 = ops.ifft(vh) ** 2
        for ik in ops.ik:
            du2 += ops.ifft(ik * uh) ** 2
        tr.u_sup.append(float(np.abs(u).max()))
        tr.du_sup.append(float(np.sqrt(du2.sum(axis=0)).max()))
        if tr.shells:
            self._shells(t, uh, vh)
        if self.keep:
            u0h, v0h = tr.initial_spectrum
            bu, bv = ops.flow(uh, vh, -t, tr.speeds)
            mk = ops.mask
            tr.profiles.append((bu[:, mk] - u0h[:, mk], bv[:, mk] - v0h[:, mk]))

    def _shells(self, t, uh, vh):
        tr, ops = self.tr, self.ops
        dv = tr.grid.cell_volume
        base = 1.0 + t + self.radius
        w_main = base ** tr.weight_main
        w_ht = base ** (2.2 * tr.delta)
        w_hs = base ** (tr.mu / 2 - 11 * tr.delta)
        _, p3 = tr.high_time_exponents
        _, p4 = tr.high_space_exponents
        rows = ([], [], [], [])
        for sym in self.symbols:
            d2 = np.zeros(ops.shape)
            u2 = np.zeros(ops.shape)
            for i in range(uh.shape[0]):
                pu, pv = sym * uh[i], sym * vh[i]
                u2 += ops.ifft(pu) ** 2
                d2 += ops.ifft(pv) ** 2
                for ik in ops.ik:
                    d2 += ops.ifft(ik * pu) ** 2
            g = np.sqrt(d2 + u2)
            dmag = np.sqrt(d2)
            rows[0].append(float(g.max()))
            rows[1].append(float((w_main * g).max()))
            rows[2].append(_lp(w_ht * dmag, p3, dv))
            rows[3].append(_lp(w_hs * g, p4, dv))
        tr.shell_sup.append(rows[0])
        tr.shell_sup_weighted.append(rows[1])
        tr.shell_high_time.append(rows[2])
        tr.shell_high_space.append(rows[3])


def _reach(state: State, threshold: float = 1e-6) -> float:
    r = 0.0
    for arr in (state.u, state.v):
        for a in arr:
            r = max(r, measure_support_radius(ScalarField(state.grid, a), threshold))
    return r


def evolve(spec: SystemSpec, state: State, T: float, cadence: Optional[float] = None, *, dt: float,
           forcing=None, N: int = 4, mu: float = 0.5, shells: bool = True, keep_profiles: bool = False,
           stop: Optional[Callable[[DiagnosticsTrace], Optional[str]]] = None, on_failure: str = "raise",
           window: bool = True, window_threshold: float = 1e-6, q_max: Optional[float] = 0.1, alias_tol: float = 1e-4,
           cfl: float = 1.0) -> DiagnosticsTrace:
    """Integrate to time ``T`` and record diagnostics every ``cadence``.

    ``dt`` is shrunk so that a whole number of steps lands on ``T``.  With
    ``on_failure="stop"`` a fixed-point or smallness failure ends the run and
    is recorded in ``trace.stopped`` instead of raising; ``stop`` may end the
    run early by returning a reason string.  The wraparound check uses the
    radius beyond which the data is below ``window_threshold`` times its peak.
    """
    if state.m != spec.m:
        raise ValueError(f"state has {state.m} components, spec has {spec.m}")
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    if on_failure not in ("raise", "stop"):
        raise ValueError("on_failure must be 'raise' or 'stop'")
    g = state.grid
    if window:
        check_window(_reach(state, window_threshold), spec.c_max, T, g.L)
    nsteps = max(1, math.ceil(T / dt - 1e-9)) if T > 0 else 0
    h = T / nsteps if nsteps else dt
    every = max(1, int(round((cadence or h) / h)))
    stepper = Stepper(spec, g, forcing=forcing, cfl=cfl, q_max=q_max)
    if nsteps:
        stepper.check_dt(h)
    ops = stepper.ops
    uh, vh = ops.fft(state.u), ops.fft(state.v)
    frac = ops.high_fraction(uh, vh)
    if frac > alias_tol:
        raise AliasingError(f"{frac:.3g} of the data lies above the dealiasing radius (limit {alias_tol})")
    trace = DiagnosticsTrace(grid=g, speeds=spec.speeds, N=N, mu=mu, delta=1e-6 * mu, dt=h)
    if keep_profiles:
        trace.initial_spectrum = (uh.copy(), vh.copy())
    rec = _Recorder(trace, ops, shells, keep_profiles)
    t = state.t
    rec.record(t, uh, vh, 0.0)
    for n in range(nsteps):
        try:
            uh, vh, _ = stepper.advance(t, uh, vh, h)
        except (FixedPointError, SmallnessError) as exc:
            if on_failure == "raise":
                raise
            trace.stopped = (t, type(exc).__name__)
            break
        t = state.t + (n + 1) * h
        trace.steps = n + 1
        last = n + 1 == nsteps
        if (n + 1) % every == 0 or last:
            rec.record(t, uh, vh, stepper.last_q_sup)
            if not all(np.isfinite(v) for v in (trace.energy[-1], trace.u_sup[-1], trace.du_sup[-1])):
                trace.flags.append("non-finite")
                trace.stopped = (t, "non-finite")
                break
            if stop is not None:
                reason = stop(trace)
                if reason:
                    trace.stopped = (t, reason)
                    break
    trace.final_state = State(g, t, ops.ifft(uh), ops.ifft(vh))
    return trace


@dataclass(frozen=True, eq=False)
class ScatteringResult:
    u0: list
    u1: list
    times: np.ndarray
    metric: np.ndarray


def scattering_profile(spec: SystemSpec, trace: DiagnosticsTrace, T: Optional[float] = None,
                       order: Optional[int] = None) -> ScatteringResult:
    """Free data approximating the solution after time ``T`` and the distance to it.

    The stored profiles are ``S(-t) U(t) - U(0)`` with ``S`` the free flow,
    i.e. the Duhamel integral of the forcing pulled back to time zero as the
    integrator accumulates it.  The free data is ``U(0)`` plus the profile at
    ``T``; the metric at each earlier snapshot is ``||d(u - u_free)||_{H^s}``
    with ``s = N - 1`` unless ``order`` is given.
    """
    if not trace.profiles or trace.initial_spectrum is None:
        raise ValueError("trace has no stored profiles; evolve with keep_profiles=True")
    times = np.asarray(trace.times, float)
    if T is None:
        idx = times.size - 1
    else:
        hits = np.flatnonzero(np.isclose(times, T, rtol=0, atol=1e-9 * max(1.0, abs(T))))
        if not hits.size:
            raise ValueError(f"no snapshot stored at T={T}")
        idx = int(hits[0])
    s = trace.N - 1 if order is None else order
    ops = SpectralOps(trace.grid)
    mk = ops.mask
    u0h, v0h = trace.initial_spectrum
    Iu_T, Iv_T = trace.profiles[idx]

    def expand(cu, cv):
        au = np.zeros_like(u0h)
        av = np.zeros_like(v0h)
        au[:, mk] = cu
        av[:, mk] = cv
        return au, av

    du, dv = expand(Iu_T, Iv_T)
    uinf, vinf = u0h + du, v0h + dv
    metric = []
    for n in range(idx + 1):
        Iu, Iv = trace.profiles[n]
        eu, ev = expand(Iu - Iu_T, Iv - Iv_T)
        fu, fv = ops.flow(eu, ev, times[n], spec.speeds)
        metric.append(ops.energy(fu, fv, s))
    g = trace.grid
    return ScatteringResult(
        [ScalarField(g, a) for a in ops.ifft(uinf)],
        [ScalarField(g, a) for a in ops.ifft(vinf)],
        times[: idx + 1],
        np.asarray(metric),
    )
