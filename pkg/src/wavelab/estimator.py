"""Empirical constants for the dispersive, Strichartz and weighted estimates.

Every check evaluates both sides of one inequality on a family of data over
a sweep of times and returns a :class:`~wavelab.report.ConstantReport` of
``LHS / RHS`` ratios.  Checks accept fields on either backend: full 3D grids
(:class:`~wavelab.grid.ScalarField`) or the exact radial reduction
(:class:`~wavelab.radial.RadialField`), which reaches the large boxes and
long times the sweeps need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dyadic import PSI, ResolutionError, physical_cutoff, project, resolvable_range
from .grid import (
    Grid3,
    ScalarField,
    SpectralField,
    _multiplier_values,
    apply_radial_multiplier,
    certify_support,
    forward_transform,
    inverse_power_cell_average,
    inverse_transform,
    measure_support_radius,
    norm,
)
from .profiles import compact_bump, gaussian
from .radial import RadialField, RadialGrid, make_radial_grid, profile_norms
from .report import ConstantReport, make_report

__all__ = [
    "TestFamily",
    "make_family",
    "HypothesisError",
    "AdmissibilityError",
    "log_time_grid",
    "shell_radial_grid",
    "check_dispersive",
    "check_strichartz",
    "check_weighted_strichartz",
    "weighted_strichartz_region",
    "strichartz_admissible",
    "check_localized_linfty",
    "check_compact_linfty",
    "check_weighted_l2l2",
    "check_technical_lemma",
    "A2Probe",
    "a2_constant",
]

PROFILES = ("gaussian-bump", "annular-shell", "random-bandlimited", "shifted-bump")


class HypothesisError(ValueError):
    """Parameter point outside an estimate's hypothesis region."""


class AdmissibilityError(ValueError):
    """Exponent pair not admissible for a Strichartz estimate."""


@dataclass(frozen=True)
class TestFamily:
    """Recipe for a deterministic family of test data.

    ``k`` selects the shell of ``annular-shell``; ``k_lo, k_hi`` the band of
    ``random-bandlimited``; ``radius`` the centre offset of ``shifted-bump``
    (and of ``gaussian-bump`` when non-zero, in a random direction).
    """

    __test__ = False  # not a pytest class

    profile: str
    count: int = 20
    seed: int = 0
    k: Optional[int] = None
    k_lo: Optional[int] = None
    k_hi: Optional[int] = None
    radius: float = 0.0
    bump_radius: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if self.count < 1:
            raise ValueError("count must be positive")
        if self.profile == "annular-shell" and self.k is None:
            raise ValueError("annular-shell needs k")
        if self.profile == "random-bandlimited" and (self.k_lo is None or self.k_hi is None or self.k_lo > self.k_hi):
            raise ValueError("random-bandlimited needs k_lo <= k_hi")
        if self.radius < 0 or self.bump_radius <= 0 or self.width <= 0:
            raise ValueError("radius must be >= 0 and bump_radius, width > 0")


def _direction(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _radial_member(grid: RadialGrid, spec: TestFamily, rng):
    r = grid.r
    amp = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
    if spec.profile == "gaussian-bump":
        sigma = spec.width * rng.uniform(0.6, 1.4)
        return RadialField(grid, amp * gaussian(r, sigma), spec.radius)
    if spec.profile == "shifted-bump":
        Rb = spec.bump_radius * rng.uniform(0.8, 1.0)
        return RadialField(grid, amp * compact_bump(r, Rb), spec.radius, support_radius=Rb)
    if spec.profile == "annular-shell":
        k = spec.k
        scale = 2.0 ** (-k)
        prof = np.zeros_like(r)
        for _ in range(3):
            s = scale * rng.uniform(0.5, 1.5)
            c0 = rng.uniform(0.0, 2.0) * scale
            prof += rng.uniform(-1, 1) * gaussian(r - c0, s)
        base = RadialField(grid, amp * prof, spec.radius)
        return project(base, "Pdot", k)
    # random-bandlimited
    prof = np.zeros_like(r)
    for _ in range(5):
        s = rng.uniform(0.3, 1.5)
        prof += rng.standard_normal() * gaussian(r - rng.uniform(0, 4), s)
    base = RadialField(grid, amp * prof, spec.radius)
    return _band(base, spec.k_lo, spec.k_hi)


def _band(f, k_lo, k_hi):
    for k in (k_lo, k_hi):
        project(f, "P", k)  # range check only
    sym = lambda x: PSI.psi(x / 2.0 ** k_hi) - (PSI.psi(x / 2.0 ** (k_lo - 1)) if k_lo > -1 else 0.0)
    return apply_radial_multiplier(f, sym, float(sym(np.zeros(1))[0]))


def _grid_member(grid: Grid3, spec: TestFamily, rng):
    x, y, z = grid.coords
    amp = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
    c = spec.radius * _direction(rng)
    rr = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2)
    if spec.profile == "gaussian-bump":
        sigma = spec.width * rng.uniform(0.6, 1.4)
        return ScalarField(grid, (amp * gaussian(rr, sigma)).astype(complex))
    if spec.profile == "shifted-bump":
        Rb = spec.bump_radius * rng.uniform(0.8, 1.0)
        f = ScalarField(grid, (amp * compact_bump(rr, Rb)).astype(complex))
        return certify_support(f, spec.radius + Rb)
    if spec.profile == "annular-shell":
        k = spec.k
        scale = 2.0 ** (-k)
        prof = np.zeros(rr.shape)
        for _ in range(3):
            s = scale * rng.uniform(0.5, 1.5)
            c0 = rng.uniform(0.0, 2.0) * scale
            prof += rng.uniform(-1, 1) * gaussian(rr - c0, s)
        return project(ScalarField(grid, (amp * prof).astype(complex)), "Pdot", k)
    noise = rng.standard_normal((grid.n,) * 3)
    return _band(ScalarField(grid, amp * noise.astype(complex)), spec.k_lo, spec.k_hi)


def make_family(spec: TestFamily, grid) -> list:
    """Generate ``spec.count`` members on ``grid`` (a ``Grid3`` or ``RadialGrid``)."""
    if spec.profile == "annular-shell":
        k_min, k_max = resolvable_range(grid)
        if not k_min <= spec.k <= k_max:
            raise ResolutionError(f"shell k={spec.k} outside resolvable range [{k_min}, {k_max}]")
    if spec.profile == "shifted-bump":
        reach = spec.radius + spec.bump_radius
        if reach >= grid.L:
            raise ValueError(f"bump at radius {spec.radius} does not fit in the box")
    rng = np.random.default_rng(spec.seed)
    make = _radial_member if isinstance(grid, RadialGrid) else _grid_member
    return [make(grid, spec, rng) for _ in range(spec.count)]


# ---------------------------------------------------------------------------
# evaluation engine


def log_time_grid(t0: float, t1: float, scale: float = 1.0, per_unit: int = 64) -> np.ndarray:
    """Times uniform in ``log(1 + scale*t)`` with ``per_unit`` samples per unit."""
    a, b = math.log1p(scale * t0), math.log1p(scale * t1)
    m = max(2, int(math.ceil(per_unit * (b - a))) + 1)
    return np.expm1(np.linspace(a, b, m)) / scale


def shell_radial_grid(k: int, refine: int = 1, t_max: float = 100.0) -> RadialGrid:
    """Radial grid sized for shell-``k`` data evolved up to ``t_max``.

    The box leaves room for the data (scale ``8 * 2^-k``) and the light cone
    plus a margin; the spacing puts about six points per shortest wavelength
    of the shell.  ``n`` is rounded up to a power of two, then multiplied by
    ``refine``.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1")
    L = 1.5 * t_max + 800.0 * 2.0 ** (-k)
    h = math.pi / (6.4 * 2.0 ** k)
    n = int(2 ** math.ceil(math.log2(2 * L / h))) * int(refine)
    return make_radial_grid(L, n)


def _is_radial(f) -> bool:
    return isinstance(f, RadialField)


def _symbol(grid, m: Callable, m0) -> np.ndarray:
    if isinstance(grid, RadialGrid):
        return grid.multiplier_values(m, m0)
    return _multiplier_values(grid.abs_xi, m, m0)


def _shell_symbol(grid, kind: str, k: int, iota: int = 0):
    """Lattice values of ``phi_k(|xi|) |xi|^{-iota}`` with the cell-average convention at 0."""
    phi = PSI.symbol(kind, k)
    phi0 = float(phi(np.zeros(1))[0])
    if iota == 0:
        return _symbol(grid, phi, phi0)
    if isinstance(grid, RadialGrid):
        m0 = 0.0
    else:
        m0 = phi0 * inverse_power_cell_average(iota, grid.dxi)
    return _symbol(grid, lambda x: phi(x) * x ** (-float(iota)), m0)


def _evolved_norms(f, sym: np.ndarray, times, p: float, weight_at=None, sign: int = 1, c: float = 1.0) -> np.ndarray:
    """``|| w_t  m(D) e^{sign i c t|D|} f ||_{L^p}`` for each ``t`` in ``times``."""
    times = np.asarray(times, float)
    out = np.empty(times.size)
    if _is_radial(f):
        g = f.grid
        base = f.spectrum * sym
        ak = g.abs_kappa
        step = max(1, int(2 ** 22 // g.n))
        for i0 in range(0, times.size, step):
            ts = times[i0: i0 + step]
            prof = g.profiles_from_spectrum(base * np.exp(sign * 1j * c * ts[:, None] * ak))
            if weight_at is None:
                out[i0: i0 + ts.size] = profile_norms(g, prof, p, None, f.center)
            else:
                for j, t in enumerate(ts):
                    out[i0 + j] = profile_norms(g, prof[j: j + 1], p, weight_at(t), f.center)[0]
        return out
    g = f.grid
    F = forward_transform(f).coefficients * sym
    for i, t in enumerate(times):
        u = inverse_transform(SpectralField(g, F * np.exp(sign * 1j * c * t * g.abs_xi)))
        out[i] = norm(u, p, weight_at(t) if weight_at else None)
    return out


def _time_norm(vals: np.ndarray, times: np.ndarray, p: float) -> float:
    if np.isinf(p):
        return float(np.max(vals))
    if times.size < 2:
        return 0.0
    return float(np.trapezoid(vals ** p, times) ** (1.0 / p))


def _reach(f, threshold: float = 1e-6) -> float:
    """Radius (from the origin) beyond which ``|f| <= threshold * max|f|``."""
    if _is_radial(f):
        a = np.abs(f.profile)
        m = a.max()
        if m == 0:
            return 0.0
        idx = np.nonzero(a > threshold * m)[0]
        return f.center + float(f.grid.r[idx.max()])
    return measure_support_radius(f, threshold)


def _wrap_flags(fields, t_max: float, c: float = 1.0) -> tuple:
    for f in fields:
        if _reach(f) + c * t_max >= f.grid.L:
            return ("wraparound",)
    return ()


def _apply(f, kind: str, k: int):
    return project(f, kind, k, strict=True)


def _nonzero(fields):
    return [f for f in fields if norm(f, 2) > 0]


# ---------------------------------------------------------------------------
# checks


def check_dispersive(fields: Sequence, k: int, t_grid: Optional[np.ndarray] = None, *, sign: int = 1,
                     variant: str = "shell", t_max: float = 100.0, per_unit: int = 64) -> ConstantReport:
    """Dispersive decay ratios.

    ``variant="shell"``: ``||Pdot_k e^{it|D|} f||_inf (1+2^k t) / (2^{3k} ||Pdot_k f||_1)``.
    ``variant="low"``: the ``P_{-1}`` version with ``(1+t)``.
    ``variant="low-inverse-square"``: ``P_{-1}|D|^{-2}`` with ``(1+t)/ln(e+t)``.
    """
    if variant not in ("shell", "low", "low-inverse-square"):
        raise ValueError(f"unknown variant {variant!r}")
    scale = 2.0 ** k if variant == "shell" else 1.0
    times = log_time_grid(0.0, t_max, scale, per_unit) if t_grid is None else np.asarray(t_grid, float)
    fields = _nonzero(fields)
    ratios, member_sup, data = [], [], []
    for f in fields:
        if variant == "shell":
            g = _apply(f, "Pdot", k)
            sym = _shell_symbol(f.grid, "Pdot", k)
            env = 2.0 ** (3 * k) / (1 + scale * times)
        else:
            g = _apply(f, "P", -1)
            sym = _shell_symbol(f.grid, "P", -1, 2 if variant == "low-inverse-square" else 0)
            env = 1.0 / (1 + times)
            if variant == "low-inverse-square":
                env = env * np.log(np.e + times)
        l1 = norm(g, 1)
        if l1 == 0:
            continue
        sup = _evolved_norms(f, sym, times, np.inf, sign=sign)
        r = sup / (env * l1)
        ratios.append(r)
        member_sup.append(r.max())
        data.append(g)
    flags = _wrap_flags(data, times.max())
    return make_report(
        f"dispersive-{variant}",
        {"k": k, "sign": sign, "t_max": float(times.max()), "samples": int(times.size)},
        np.concatenate(ratios) if ratios else [],
        flags,
        extras={"member_sup": np.array(member_sup), "times": times, "ratios": np.array(ratios)},
    )


def strichartz_admissible(p, r, endpoint):
    if not (2 <= p <= np.inf and 2 <= r <= np.inf):
        raise AdmissibilityError(f"need p, r in [2, inf], got ({p}, {r})")
    if 1.0 / p + 1.0 / r > 0.5 + 1e-12:
        raise AdmissibilityError(f"need 1/p + 1/r <= 1/2, got 1/{p} + 1/{r}")
    is_end = p == 2 and np.isinf(r)
    if is_end and not endpoint:
        raise AdmissibilityError("(p, r) = (2, inf) is the endpoint case; pass endpoint=True")
    if endpoint and not is_end:
        raise AdmissibilityError("endpoint=True requires (p, r) = (2, inf)")


def check_strichartz(fields: Sequence, k: int, p: float, r: float, t0: float = 0.0, t: float = 100.0, *,
                     endpoint: bool = False, iota: int = 0, sign: int = 1, per_unit: int = 64) -> ConstantReport:
    """Strichartz ratios ``||P_k |D|^{-iota} e^{is|D|} f||_{L^p_s([t0,t]) L^r} / RHS``.

    Non-endpoint RHS: ``2^{(3/2 - 1/p - 3/r)k} ||P_k f||_2``.  Endpoint
    ``(2, inf)``: ``2^k ln^{1/2}(1 + 2^k t) ||P_k f||_2`` for ``iota = 0`` and
    ``ln(e + 2^k t) ||P_k f||_2`` for ``iota = 1``.  ``extras["plain"]`` holds
    the endpoint LHS divided by ``2^k ||P_k f||_2`` only.
    """
    strichartz_admissible(p, r, endpoint)
    if iota not in (0, 1) or (iota == 1 and not endpoint):
        raise AdmissibilityError("iota = 1 is only used with the endpoint pair")
    times = log_time_grid(t0, t, 2.0 ** max(k, 0), per_unit)
    fields = _nonzero(fields)
    ratios, plain, lhs_all = [], [], []
    for f in fields:
        l2 = norm(_apply(f, "P", k), 2)
        if l2 == 0:
            continue
        sym = _shell_symbol(f.grid, "P", k, iota)
        vals = _evolved_norms(f, sym, times, r, sign=sign)
        lhs = _time_norm(vals, times, p)
        if endpoint and iota == 0:
            rhs = 2.0 ** k * math.sqrt(math.log1p(2.0 ** k * t)) * l2
        elif endpoint:
            rhs = math.log(math.e + 2.0 ** k * t) * l2
        else:
            rhs = 2.0 ** ((1.5 - 1.0 / p - 3.0 / r) * k) * l2
        ratios.append(lhs / rhs)
        plain.append(lhs / (2.0 ** k * l2))
        lhs_all.append(lhs)
    flags = _wrap_flags([_apply(f, "P", k) for f in fields], t)
    return make_report(
        "strichartz-endpoint" if endpoint else "strichartz",
        {"k": k, "p": p, "r": r, "t0": t0, "t": t, "iota": iota},
        ratios,
        flags,
        extras={"plain": np.array(plain), "lhs": np.array(lhs_all), "samples": int(times.size)},
    )


def weighted_strichartz_region(beta1: float, beta2: float, p: float, r: float, item: int) -> None:
    """Raise :class:`HypothesisError` unless the parameter point is admissible."""
    if not 0 < beta1 < 1:
        raise HypothesisError(f"need beta1 in (0, 1), got {beta1}")
    top = min(1.5 * beta1, 1.0)
    if not beta1 < beta2 < top:
        raise HypothesisError(
            f"need beta1 < beta2 < min{{3*beta1/2, 1}} = {top:g} "
            f"(hypothesis β₂ < min{{3β₁/2, 1}}), got beta1={beta1}, beta2={beta2}"
        )
    if abs(1.0 / p + 1.0 / r - 0.5) > 1e-12:
        raise HypothesisError(f"need 1/p + 1/r = 1/2, got p={p}, r={r}")
    if item == 1:
        if not (2 <= p < np.inf and r > 2):
            raise HypothesisError(f"item 1 needs p in [2, inf), r in (2, inf], got p={p}, r={r}")
    elif item == 2:
        p_top = 2 + 2 * beta2 - beta1
        r_bot = 2 + 4 / (2 * beta2 - beta1)
        if not 2 <= p < p_top:
            raise HypothesisError(f"item 2 needs p in [2, {p_top:g}), got p={p}")
        if not r > r_bot:
            raise HypothesisError(f"item 2 needs r in ({r_bot:g}, inf], got r={r}")
    else:
        raise HypothesisError(f"item must be 1 or 2, got {item}")


def check_weighted_strichartz(fields: Sequence, k: int, p: float, r: float, beta1: float, beta2: float,
                              item: int, t0: float = 0.0, t: float = 50.0, *, sign: int = 1,
                              per_unit: int = 64) -> ConstantReport:
    """Ratios for the Strichartz bound with space-time weight ``(1+s+|x|)^{beta1/p}``.

    Item 1 (``iota = 0``) RHS: ``2^{2(1+beta2)k/p} ||<x>^{2 beta2/p} P_k f||_2``.
    Item 2 (``iota = 1``) RHS: ``2^{((2+2 beta2)/p - 1)k} ||<x>^{2 beta2/p} P_k f||_2``.
    """
    weighted_strichartz_region(beta1, beta2, p, r, item)
    if k < -1:
        raise HypothesisError("k must be >= -1")
    iota = 0 if item == 1 else 1
    times = log_time_grid(t0, t, 2.0 ** max(k, 0), per_unit)
    ex = beta1 / p
    wt = lambda s: (lambda q: (1.0 + s + q) ** ex)
    wdata = lambda q: (1.0 + q * q) ** (beta2 / p)
    expo = 2 * (1 + beta2) / p if item == 1 else (2 + 2 * beta2) / p - 1
    fields = _nonzero(fields)
    ratios = []
    for f in fields:
        pk = _apply(f, "P", k)
        rhs = 2.0 ** (expo * k) * norm(pk, 2, wdata)
        if rhs == 0:
            continue
        sym = _shell_symbol(f.grid, "P", k, iota)
        vals = _evolved_norms(f, sym, times, r, weight_at=wt, sign=sign)
        ratios.append(_time_norm(vals, times, p) / rhs)
    flags = _wrap_flags([_apply(f, "P", k) for f in fields], t)
    return make_report(
        f"weighted-strichartz-{item}",
        {"k": k, "p": p, "r": r, "beta1": beta1, "beta2": beta2, "item": item, "t0": t0, "t": t},
        ratios,
        flags,
        extras={"samples": int(times.size)},
    )


def check_localized_linfty(fields: Sequence, k: int, j: int, iota: int, t_grid, *, delta: float = 0.1,
                           sign: int = 1) -> ConstantReport:
    """``||P_k |D|^{-iota} e^{it|D|} Q_j f||_inf`` against
    ``2^{(5/2+delta-iota)k} (1+2^k t)^{-1} 2^{(1+delta)j} ||Q_j f||_2``."""
    if iota not in (0, 1):
        raise ValueError("iota must be 0 or 1")
    if not 0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 1/2]")
    if j < -1 or k < -1:
        raise ValueError("j, k must be >= -1")
    times = np.asarray(t_grid, float)
    ratios = []
    for f in _nonzero(fields):
        _, k_max = resolvable_range(f.grid)
        if k > k_max:
            raise ResolutionError(f"k={k} beyond resolvable {k_max}")
        if 2.0 ** j * PSI.inner / 2 >= f.grid.L:
            raise ValueError(f"annulus j={j} lies outside the box")
        qf = physical_cutoff(f, j)
        l2 = norm(qf, 2)
        if l2 == 0:
            continue
        sym = _shell_symbol(f.grid, "P", k, iota)
        vals = _evolved_norms(qf, sym, times, np.inf, sign=sign)
        env = 2.0 ** ((2.5 + delta - iota) * k) / (1 + 2.0 ** k * times) * 2.0 ** ((1 + delta) * j) * l2
        ratios.append(vals / env)
    return make_report(
        "localized-linfty",
        {"k": k, "j": j, "iota": iota, "delta": delta},
        np.concatenate(ratios) if ratios else [],
        _wrap_flags([physical_cutoff(f, j) for f in fields], times.max()),
    )


def _hs_norm(f, s: float) -> float:
    return norm(apply_radial_multiplier(f, lambda x: (1 + x * x) ** (s / 2), 1.0), 2)


def check_compact_linfty(fields: Sequence, t_grid, *, op: str = "sin") -> ConstantReport:
    """``||op(t) f||_inf / (min{1, R/(1+t)} ||f||_{H^4})`` for data supported in ``B(0, R)``.

    ``op`` is ``"sin"`` for ``sin(t|D|)/|D|`` or ``"cos"`` for ``cos(t|D|)``.
    """
    times = np.asarray(t_grid, float)
    ratios = []
    for f in _nonzero(fields):
        R = f.outer_radius if _is_radial(f) else f.support_radius
        if R is None:
            raise ValueError("data needs a certified support radius")
        if op == "sin":
            m = lambda x, t: np.sin(t * x) / x
            m0 = lambda t: t
        elif op == "cos":
            m = lambda x, t: np.cos(t * x)
            m0 = lambda t: 1.0
        else:
            raise ValueError("op must be 'sin' or 'cos'")
        h4 = _hs_norm(f, 4)
        vals = np.array([
            norm(apply_radial_multiplier(f, lambda x, t=t: m(x, t), m0(t)), np.inf)
            for t in times
        ])
        env = np.minimum(1.0, R / (1 + times)) * h4
        ratios.append(vals / env)
    return make_report("compact-linfty-" + op, {"op": op}, np.concatenate(ratios) if ratios else [])


def check_weighted_l2l2(fields: Sequence, k: int, t_grid, beta1: float, beta2: float, *,
                        sign: int = 1) -> ConstantReport:
    """``||<x>^{b1} P_k e^{it|D|} f||_2`` against ``(1+t)^{b1} ||<x>^{b2} f||_2 + ||<x>^{b1+b2} f||_2``."""
    if not 0 < beta1 < 1.5:
        raise HypothesisError(f"need beta1 in (0, 3/2), got {beta1}")
    if not beta2 > 0:
        raise HypothesisError(f"need beta2 > 0, got {beta2}")
    if k < -1:
        raise HypothesisError("k must be >= -1")
    times = np.asarray(t_grid, float)
    w1 = lambda q: (1 + q * q) ** (beta1 / 2)
    ratios = []
    for f in _nonzero(fields):
        a = norm(f, 2, lambda q: (1 + q * q) ** (beta2 / 2))
        b = norm(f, 2, lambda q: (1 + q * q) ** ((beta1 + beta2) / 2))
        sym = _shell_symbol(f.grid, "P", k)
        vals = _evolved_norms(f, sym, times, 2.0, weight_at=lambda t: w1, sign=sign)
        ratios.append(vals / ((1 + times) ** beta1 * a + b))
    return make_report(
        "weighted-l2l2",
        {"k": k, "beta1": beta1, "beta2": beta2},
        np.concatenate(ratios) if ratios else [],
        _wrap_flags(fields, times.max()),
    )


def check_technical_lemma(fields: Sequence, alpha: float, k: int, j: int, t_grid, *, sign: int = 1) -> ConstantReport:
    """Annulus-by-annulus weighted bound for ``Q_j P_k e^{it|D|} f``.

    For ``j <= log2 t + 100`` the RHS is
    ``(1+t)^alpha sum_{l<j-3} ||Q_l P_k f|| + sum_{l>=j-3} 2^{l alpha} ||Q_l P_k f||``,
    otherwise ``sum_l 2^{l alpha} ||Q_l P_k f||``.
    """
    if not 0 < alpha < 1.5:
        raise HypothesisError(f"need alpha in (0, 3/2), got {alpha}")
    times = np.asarray(t_grid, float)
    if np.any(times <= 0):
        raise ValueError("times must be positive")
    ratios = []
    for f in _nonzero(fields):
        pk = _apply(f, "P", k)
        top = max(-1, math.ceil(math.log2(f.grid.L * (math.sqrt(3) if isinstance(f.grid, Grid3) else 1) / PSI.inner)))
        ls = np.arange(-1, top + 1)
        ql = np.array([norm(physical_cutoff(pk, int(l)), 2) for l in ls])
        lhs = []
        for t in times:
            u = project(_evolve(f, t, sign), "P", k, strict=False)
            lhs.append(2.0 ** (j * alpha) * norm(physical_cutoff(u, j), 2))
        lhs = np.array(lhs)
        near = j <= np.log2(times) + 100
        rhs_near = (1 + times) ** alpha * ql[ls < j - 3].sum() + np.sum(2.0 ** (ls[ls >= j - 3] * alpha) * ql[ls >= j - 3])
        rhs_far = np.sum(2.0 ** (ls * alpha) * ql)
        rhs = np.where(near, rhs_near, rhs_far)
        ratios.append(lhs / rhs)
    return make_report("technical-lemma", {"alpha": alpha, "k": k, "j": j}, np.concatenate(ratios) if ratios else [])


def _evolve(f, t, sign):
    from .propagators import half_wave

    return half_wave(f, t, sign, check=False)


# ---------------------------------------------------------------------------
# A_2 weights


@dataclass(frozen=True)
class A2Probe:
    """Cube family for the A_2 estimate.

    Sides are the dyadic lengths in ``[h, 2L]``.  For a cube of side ``s`` the
    centres are the origin and ``lam * s`` along a coordinate axis and along
    the main diagonal, for each ``lam`` in ``offsets``; small ``lam`` puts the
    origin inside or at a corner of the cube, large ``lam`` puts the cube far
    from it.
    """

    L: float = 2.0 ** 11
    h: float = 0.25
    offsets: tuple = (0.25, 0.5, 0.75, 1.0, 2.0, 4.0, 8.0, 64.0)
    order: int = 4

    def cubes(self):
        sides = 2.0 ** np.arange(math.floor(math.log2(self.h)), math.floor(math.log2(2 * self.L)) + 1)
        dirs = [np.array([1.0, 0.0, 0.0]), np.ones(3) / math.sqrt(3)]
        for s in sides:
            yield np.zeros(3), float(s)
            for lam in self.offsets:
                for d in dirs:
                    yield lam * s * d, float(s)


def _cube_integrals(alpha: float, c: np.ndarray, s: float, order: int):
    """Integrals of ``<x>^{alpha}`` and ``<x>^{-alpha}`` over a cube, with an octree refined toward the origin."""
    x, w = np.polynomial.legendre.leggauss(order)
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    C = np.asarray(c, float)[None]
    S = np.array([s], float)
    leaves_c, leaves_s = [], []
    offsets = np.array([[a, b, d] for a in (-1, 1) for b in (-1, 1) for d in (-1, 1)], float)
    while C.size:
        dist = np.linalg.norm(np.maximum(np.abs(C) - S[:, None] / 2, 0.0), axis=1)
        split = (S > 0.5) & (dist < 2 * S)
        leaves_c.append(C[~split])
        leaves_s.append(S[~split])
        Cs, Ss = C[split], S[split]
        C = (Cs[:, None, :] + 0.25 * Ss[:, None, None] * offsets[None]).reshape(-1, 3)
        S = np.repeat(Ss / 2, 8)
    C = np.concatenate(leaves_c)
    S = np.concatenate(leaves_s)
    pts = C[:, None, :] + 0.5 * S[:, None, None] * X[None]
    jac = (0.5 * S) ** 3
    r2 = np.sum(pts * pts, axis=-1)
    ip = float(np.sum(jac[:, None] * W * (1 + r2) ** (alpha / 2)))
    im = float(np.sum(jac[:, None] * W * (1 + r2) ** (-alpha / 2)))
    vol = float(np.sum(jac[:, None] * W))
    return ip / vol, im / vol


def a2_constant(alpha: float, probe: A2Probe = A2Probe()) -> float:
    """Largest ``(avg_Q w)(avg_Q 1/w)`` over the probe cubes for ``w = <x>^alpha``."""
    best = 0.0
    for c, s in probe.cubes():
        a, b = _cube_integrals(alpha, c, s, probe.order)
        best = max(best, a * b)
    return best
