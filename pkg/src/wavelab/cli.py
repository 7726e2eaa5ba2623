"""Experiment runner: ``wavelab run <config>``, ``wavelab list``, ``wavelab validate <config>``.

A run configuration is a TOML file naming one registered experiment, its
parameters, optional sweep axes (the run visits their Cartesian product in
order), a grid, a data family and an output directory.  Every sweep point is
validated against the experiment's parameter schema and the owning module's
preconditions before anything is computed.  A run writes

* ``results.csv``: one row per observation, plot-ready;
* ``summary.json``: aggregates over rows without validity flags, the flagged
  rows listed separately, and the acceptance verdict;
* ``manifest.json``: the resolved configuration, package versions and
  validity flags.  Passing a manifest to ``run`` repeats the run.

Exit codes: 0 ok, 1 configuration error, 2 numerical-validity failure,
3 acceptance failure.  ``WAVELAB_WORKERS`` sets the size of the worker pool
used for sweep points.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import platform
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Literal, Optional

import numpy as np
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dyadic import ResolutionError, resolvable_range, weighted_shell_equivalence_check
from .estimator import (
    A2Probe,
    HypothesisError,
    TestFamily,
    a2_constant,
    check_compact_linfty,
    check_dispersive,
    check_localized_linfty,
    check_strichartz,
    check_technical_lemma,
    check_weighted_l2l2,
    check_weighted_strichartz,
    log_time_grid,
    make_family,
    shell_radial_grid,
    strichartz_admissible,
    weighted_strichartz_region,
)
from .grid import GridError, WraparoundError, make_grid
from .kernels import KernelSpec, QuadratureError, eval_kernel, regime_bound
from .propagators import huygens_residual
from .radial import make_radial_grid
from .report import ConstantReport, make_report
from .wavesys import (
    PRESET_NAMES,
    PROFILES as DATA_PROFILES,
    AliasingError,
    CFLError,
    FixedPointError,
    SmallnessError,
    evolve,
    lifespan_probe,
    make_initial_data,
    make_preset,
    scattering_profile,
)

__all__ = ["main", "ConfigError", "ExperimentConfig", "REGISTRY", "load_config", "run", "list_experiments", "config_schema"]

WORKERS_ENV = "WAVELAB_WORKERS"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3

# errors raised by the numerical modules once a run is under way
NUMERICAL_ERRORS = (
    GridError,
    WraparoundError,
    ResolutionError,
    QuadratureError,
    FixedPointError,
    SmallnessError,
    AliasingError,
    CFLError,
)


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` holds one line per problem."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = list(diagnostics)


# ---------------------------------------------------------------------------
# configuration schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Strict):
    """Sampling grid: ``radial`` (exact radial reduction), ``cartesian`` (full 3D)
    or ``shell-radial`` (a radial grid sized from the shell index ``k``)."""

    kind: Literal["radial", "cartesian", "shell-radial"] = "radial"
    L: Optional[float] = Field(None, gt=0)
    n: Optional[int] = Field(None, ge=8)
    refine: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _sizes(self):
        if self.kind != "shell-radial" and (self.L is None or self.n is None):
            raise ValueError(f"grid kind {self.kind!r} needs both L and n")
        return self


class FamilyConfig(_Strict):
    """Test-data family; ``k`` comes from the experiment parameters and the seed from the top level."""

    profile: Optional[Literal["gaussian-bump", "annular-shell", "random-bandlimited", "shifted-bump"]] = None
    count: int = Field(20, ge=1)
    k_lo: Optional[int] = None
    k_hi: Optional[int] = None
    radius: float = Field(0.0, ge=0)
    bump_radius: float = Field(1.0, gt=0)
    width: float = Field(1.0, gt=0)


class OutputConfig(_Strict):
    dir: str = "wavelab-out"


class AcceptanceConfig(_Strict):
    """Bounds on one result column, checked on every row without validity flags."""

    column: str = "sup"
    max: Optional[float] = None
    min: Optional[float] = None


class ExperimentConfig(_Strict):
    experiment: str
    seed: int = Field(0, ge=0)
    grid: GridConfig = GridConfig(kind="shell-radial")
    family: FamilyConfig = FamilyConfig()
    params: dict[str, Any] = Field(default_factory=dict)
    sweep: dict[str, list] = Field(default_factory=dict)
    output: OutputConfig = OutputConfig()
    acceptance: Optional[AcceptanceConfig] = None

    @field_validator("experiment")
    @classmethod
    def _known(cls, v):
        if v not in REGISTRY:
            raise ValueError(f"unknown experiment {v!r}; run 'wavelab list' for the catalog")
        return v

    @field_validator("sweep")
    @classmethod
    def _axes(cls, v):
        for key, values in v.items():
            if not values:
                raise ValueError(f"sweep axis {key!r} is empty")
            if key.startswith("family.") and key.split(".", 1)[1] not in FamilyConfig.model_fields:
                raise ValueError(f"sweep axis {key!r} names no family field")
        return v


# ---------------------------------------------------------------------------
# per-experiment parameters


class KernelParams(_Strict):
    k: int = 0
    iota: int = 0
    M: int = 0
    sign: Literal[1, -1] = 1
    homogeneous: bool = False
    regime: Literal["light-cone", "core", "exterior"] = "light-cone"
    t_min: float = Field(20.0, gt=0)
    t_max: float = Field(200.0, gt=0)
    t_count: int = Field(32, ge=2)
    tol: float = Field(1e-9, gt=0)


class LowKernelParams(KernelParams):
    k: int = -1
    t_min: float = Field(1.0, gt=0)
    regime: Literal["light-cone", "core", "exterior"] = "light-cone"


class LowInverseKernelParams(LowKernelParams):
    iota: int = 2


class DispersiveParams(_Strict):
    k: int
    variant: Literal["shell", "low", "low-inverse-square"] = "shell"
    sign: Literal[1, -1] = 1
    t_max: float = Field(100.0, gt=0)
    per_unit: int = Field(64, ge=4)


class StrichartzParams(_Strict):
    k: int
    p: float = 4.0
    r: float = 4.0
    t0: float = Field(0.0, ge=0)
    t: float = Field(100.0, gt=0)
    sign: Literal[1, -1] = 1
    per_unit: int = Field(64, ge=4)


class EndpointParams(_Strict):
    k: int
    t0: float = Field(0.0, ge=0)
    t: float = Field(100.0, gt=0)
    sign: Literal[1, -1] = 1
    per_unit: int = Field(64, ge=4)


class WeightedStrichartzParams(_Strict):
    k: int
    p: float = 2.0
    r: float = math.inf
    beta1: float = 0.5
    beta2: float = 0.6
    t0: float = Field(0.0, ge=0)
    t: float = Field(50.0, gt=0)
    sign: Literal[1, -1] = 1
    per_unit: int = Field(64, ge=4)


class LocalizedParams(_Strict):
    k: int
    j: int = 0
    iota: Literal[0, 1] = 0
    delta: float = 0.1
    t_max: float = Field(100.0, gt=0)
    per_unit: int = Field(16, ge=2)
    sign: Literal[1, -1] = 1


class CompactParams(_Strict):
    op: Literal["sin", "cos"] = "sin"
    t_max: float = Field(100.0, gt=0)
    per_unit: int = Field(16, ge=2)


class WeightedL2Params(_Strict):
    k: int
    beta1: float = 0.5
    beta2: float = 0.6
    t_max: float = Field(50.0, gt=0)
    per_unit: int = Field(16, ge=2)
    sign: Literal[1, -1] = 1


class TechnicalParams(_Strict):
    k: int
    j: int = 0
    alpha: float = 0.5
    t_min: float = Field(1.0, gt=0)
    t_max: float = Field(50.0, gt=0)
    per_unit: int = Field(8, ge=2)
    sign: Literal[1, -1] = 1


class A2Params(_Strict):
    alpha: float
    L: float = Field(2.0 ** 11, gt=0)
    h: float = Field(0.25, gt=0)
    order: int = Field(4, ge=1, le=16)


class ShellEquivalenceParams(_Strict):
    beta: float = 0.5


class HuygensParams(_Strict):
    t: float = Field(10.0, gt=0)
    c: float = Field(1.0, gt=0)
    margin: float = Field(0.5, ge=0)


class EvolutionParams(_Strict):
    eps: float = Field(0.01, ge=0)
    profile: Literal["compact-bump", "gaussian", "weighted-tail"] = "gaussian"
    mu: Optional[float] = None
    preset_params: dict[str, Any] = Field(default_factory=dict)
    T: float = Field(10.0, gt=0)
    dt: float = Field(0.5, gt=0)
    cadence: Optional[float] = Field(None, gt=0)
    N: int = Field(4, ge=1)
    shells: bool = False
    scattering: bool = False
    window_threshold: float = Field(1e-6, gt=0, lt=1)
    data: dict[str, Any] = Field(default_factory=dict)


class LifespanParams(_Strict):
    preset: str = "liquid-crystal"
    preset_params: dict[str, Any] = Field(default_factory=dict)
    eps_grid: list[float] = Field(default_factory=lambda: [0.4, 0.3, 0.2, 0.1])
    threshold: float = Field(10.0, gt=1)
    horizon: float = Field(20.0, gt=0)
    dt: float = Field(0.5, gt=0)
    profile: Literal["compact-bump", "gaussian", "weighted-tail"] = "gaussian"
    data: dict[str, Any] = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# registry


KERNEL_COLUMNS = ("k", "iota", "M", "t", "r", "regime", "abs_value", "envelope", "ratio", "quad_err")
REPORT_COLUMNS = ("inequality", "sup", "median", "p90", "count", "valid", "flags")
TRACE_COLUMNS = (
    "t", "energy", "u_sup", "du_sup", "decay", "strichartz", "driver", "bootstrap_energy",
    "bootstrap_weighted_strichartz", "bootstrap_high_time", "bootstrap_high_space", "scattering",
)


@dataclass(frozen=True)
class Experiment:
    id: str
    annotation: str
    operation: str
    params: type
    columns: tuple
    runner: Callable
    precheck: Optional[Callable] = None
    family: Optional[str] = None  # default data profile; None when no test family is used


@dataclass
class PointResult:
    rows: list
    flags: list  # one tuple of flags per row
    detail: dict


# grids ---------------------------------------------------------------------


def _build_grid(gc: GridConfig, p: dict):
    if gc.kind == "shell-radial":
        if "k" not in p:
            raise ConfigError(["grid: kind 'shell-radial' needs a shell index k in the parameters"])
        horizon = max(float(p.get(key, 0.0)) for key in ("t", "t_max", "T"))
        return shell_radial_grid(int(p["k"]), gc.refine, max(horizon, 100.0))
    n = gc.n * gc.refine
    if gc.kind == "radial":
        return make_radial_grid(gc.L, n)
    return make_grid(gc.L, n)


def _family(cfg: ExperimentConfig, exp: Experiment, p: dict, grid) -> list:
    fc = cfg.family.model_copy(update=_family_overrides(p))
    spec = TestFamily(
        profile=fc.profile or exp.family,
        count=fc.count,
        seed=cfg.seed,
        k=p.get("k"),
        k_lo=fc.k_lo,
        k_hi=fc.k_hi,
        radius=fc.radius,
        bump_radius=fc.bump_radius,
        width=fc.width,
    )
    return make_family(spec, grid)


def _family_overrides(p: dict) -> dict:
    return {k.split(".", 1)[1]: v for k, v in p.items() if k.startswith("family.")}


def _check_shell(cfg: ExperimentConfig, p: dict):
    if cfg.grid.kind == "shell-radial" or "k" not in p:
        return
    grid = _build_grid(cfg.grid, p)
    lo, hi = resolvable_range(grid)
    if not lo <= p["k"] <= hi:
        raise ResolutionError(f"shell k={p['k']} outside the resolvable range [{lo}, {hi}] of the grid")


# runners -------------------------------------------------------------------


def _report_rows(rep: ConstantReport, extra: Optional[dict] = None) -> PointResult:
    s = rep.summary()
    row = {key: s[key] for key in ("inequality", "sup", "median", "p90", "count", "valid")}
    row["flags"] = list(rep.flags)
    row.update(extra or {})
    return PointResult([row], [tuple(rep.flags)], {})


def _run_kernel(cfg, exp, p: dict) -> PointResult:
    spec = KernelSpec(p["k"], p["iota"], p["M"], p["sign"], p["homogeneous"])
    factor = {"light-cone": 1.0, "core": 0.25, "exterior": 4.0}[p["regime"]]
    rows, flags = [], []
    for t in np.geomspace(p["t_min"], p["t_max"], p["t_count"]):
        r = factor * t
        s = eval_kernel(spec, float(t), float(r), p["tol"])
        env = regime_bound(spec, s.t, s.r, regime=s.regime)
        rows.append({
            "k": spec.k, "iota": spec.iota, "M": spec.M, "t": s.t, "r": s.r, "regime": s.regime,
            "abs_value": abs(s.value), "envelope": env, "ratio": abs(s.value) / env, "quad_err": s.error_estimate,
        })
        flags.append(("quadrature",) if s.flagged else ())
    return PointResult(rows, flags, {})


def _pre_kernel(cfg, exp, p: dict):
    KernelSpec(p["k"], p["iota"], p["M"], p["sign"], p["homogeneous"])
    if p["t_min"] >= p["t_max"]:
        raise ValueError("need t_min < t_max")


def _pre_low_kernel(cfg, exp, p: dict):
    want = 2 if exp.params is LowInverseKernelParams else 0
    if p["k"] != -1 or p["homogeneous"] or p["iota"] != want:
        raise ValueError(f"{exp.id} is the k = -1 lump with iota = {want}")
    _pre_kernel(cfg, exp, p)


def _run_dispersive(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    rep = check_dispersive(fam, p["k"], sign=p["sign"], variant=p["variant"], t_max=p["t_max"], per_unit=p["per_unit"])
    return _report_rows(rep)


def _pre_estimator(cfg, exp, p: dict):
    if "k" in p and p["k"] < -1:
        raise ValueError("k must be >= -1")
    _check_shell(cfg, p)


def _run_strichartz(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    rep = check_strichartz(fam, p["k"], p["p"], p["r"], p["t0"], p["t"], sign=p["sign"], per_unit=p["per_unit"])
    return _report_rows(rep)


def _pre_strichartz(cfg, exp, p: dict):
    strichartz_admissible(p["p"], p["r"], False)
    if p["t0"] >= p["t"]:
        raise ValueError("need t0 < t")
    _pre_estimator(cfg, exp, p)


def _run_endpoint(cfg, exp, p: dict, iota: int) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    rep = check_strichartz(fam, p["k"], 2.0, math.inf, p["t0"], p["t"], endpoint=True, iota=iota,
                           sign=p["sign"], per_unit=p["per_unit"])
    plain = rep.extras["plain"]
    return _report_rows(rep, {"plain_sup": float(plain.max()) if plain.size else math.nan})


def _run_endpoint_log(cfg, exp, p):
    return _run_endpoint(cfg, exp, p, 0)


def _run_endpoint_inverse(cfg, exp, p):
    return _run_endpoint(cfg, exp, p, 1)


def _pre_endpoint(cfg, exp, p: dict):
    if p["t0"] >= p["t"]:
        raise ValueError("need t0 < t")
    _pre_estimator(cfg, exp, p)


def _run_weighted(cfg, exp, p: dict, item: int) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    rep = check_weighted_strichartz(fam, p["k"], p["p"], p["r"], p["beta1"], p["beta2"], item, p["t0"], p["t"],
                                    sign=p["sign"], per_unit=p["per_unit"])
    return _report_rows(rep)


def _run_weighted_1(cfg, exp, p):
    return _run_weighted(cfg, exp, p, 1)


def _run_weighted_2(cfg, exp, p):
    return _run_weighted(cfg, exp, p, 2)


def _pre_weighted(cfg, exp, p: dict):
    weighted_strichartz_region(p["beta1"], p["beta2"], p["p"], p["r"], 1 if exp.id.endswith("1") else 2)
    if p["t0"] >= p["t"]:
        raise ValueError("need t0 < t")
    _pre_estimator(cfg, exp, p)


def _run_localized(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    times = log_time_grid(0.0, p["t_max"], 2.0 ** max(p["k"], 0), p["per_unit"])
    rep = check_localized_linfty(fam, p["k"], p["j"], p["iota"], times, delta=p["delta"], sign=p["sign"])
    return _report_rows(rep)


def _pre_localized(cfg, exp, p: dict):
    if not 0 < p["delta"] <= 0.5:
        raise ValueError("delta must lie in (0, 1/2]")
    if p["j"] < -1:
        raise ValueError("j must be >= -1")
    _pre_estimator(cfg, exp, p)


def _run_compact(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    rep = check_compact_linfty(fam, log_time_grid(0.0, p["t_max"], 1.0, p["per_unit"]), op=p["op"])
    return _report_rows(rep)


def _pre_compact(cfg, exp, p: dict):
    if cfg.grid.kind == "shell-radial":
        raise ValueError("compact-support data needs a radial or cartesian grid with L and n")
    if (cfg.family.profile or exp.family) != "shifted-bump":
        raise ValueError("compact-support checks need the shifted-bump family")


def _run_weighted_l2(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    times = log_time_grid(0.0, p["t_max"], 1.0, p["per_unit"])
    return _report_rows(check_weighted_l2l2(fam, p["k"], times, p["beta1"], p["beta2"], sign=p["sign"]))


def _pre_weighted_l2(cfg, exp, p: dict):
    check_weighted_l2l2([], p["k"], [0.0], p["beta1"], p["beta2"])  # parameter checks only
    _pre_estimator(cfg, exp, p)


def _technical_times(p: dict) -> np.ndarray:
    return log_time_grid(p["t_min"], p["t_max"], 1.0, p["per_unit"])


def _run_technical(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    return _report_rows(check_technical_lemma(fam, p["alpha"], p["k"], p["j"], _technical_times(p), sign=p["sign"]))


def _pre_technical(cfg, exp, p: dict):
    if p["t_min"] >= p["t_max"]:
        raise ValueError("need t_min < t_max")
    check_technical_lemma([], p["alpha"], p["k"], p["j"], _technical_times(p))  # parameter checks only
    _pre_estimator(cfg, exp, p)


def _run_a2(cfg, exp, p: dict) -> PointResult:
    val = a2_constant(p["alpha"], A2Probe(L=p["L"], h=p["h"], order=p["order"]))
    return PointResult([{"alpha": p["alpha"], "sup": val}], [() if math.isfinite(val) else ("non-finite",)], {})


def _pre_a2(cfg, exp, p: dict):
    if not math.isfinite(p["alpha"]):
        raise ValueError("alpha must be finite")
    if p["h"] >= 2 * p["L"]:
        raise ValueError("need h < 2L")


def _run_shell_equivalence(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    return _report_rows(weighted_shell_equivalence_check(_family(cfg, exp, p, grid), p["beta"]))


def _pre_shell_equivalence(cfg, exp, p: dict):
    if cfg.grid.kind == "shell-radial":
        raise ValueError("the shell equivalence check needs a radial or cartesian grid with L and n")


def _run_huygens(cfg, exp, p: dict) -> PointResult:
    grid = _build_grid(cfg.grid, p)
    fam = _family(cfg, exp, p, grid)
    res = [huygens_residual(f, f, p["t"], p["c"], p["margin"]) for f in fam]
    return _report_rows(make_report("huygens-residual", dict(p), res))


def _pre_huygens(cfg, exp, p: dict):
    _pre_compact(cfg, exp, p)
    if cfg.family.radius:
        raise ValueError("Huygens data must be centred at the origin (family.radius = 0)")
    if p["c"] * p["t"] + 2 * cfg.family.bump_radius + p["margin"] >= cfg.grid.L:
        raise WraparoundError("the light cone of the data leaves the box before time t")


def _trace_rows(trace, scattering) -> PointResult:
    cols = trace.columns()
    if scattering is not None:
        cols["scattering"] = np.concatenate([scattering, np.full(len(trace.times) - scattering.size, np.nan)])
    n = len(trace.times)
    rows = [{c: float(cols[c][i]) if c in cols else None for c in TRACE_COLUMNS} for i in range(n)]
    flags = tuple(trace.flags) + ((f"stopped:{trace.stopped[1]}",) if trace.stopped else ())
    return PointResult(rows, [flags] * n, trace.summary())


def _run_evolution(cfg, exp, p: dict) -> PointResult:
    preset = make_preset(exp.id.removeprefix("preset-"), p["preset_params"])
    grid = _build_grid(cfg.grid, p)
    data = make_initial_data(p["profile"], p["eps"], cfg.seed, grid=grid, m=preset.spec.m, N=p["N"], mu=p["mu"],
                             **p["data"])
    N = data.norms["N"]
    trace = evolve(preset.spec, data.state(), p["T"], p["cadence"], dt=p["dt"], N=N,
                   mu=p["mu"] if p["mu"] is not None else 0.5, shells=p["shells"], keep_profiles=p["scattering"],
                   window_threshold=p["window_threshold"])
    metric = scattering_profile(preset.spec, trace).metric if p["scattering"] else None
    out = _trace_rows(trace, None if metric is None else np.asarray(metric, float))
    out.detail = {"trace": out.detail, "data": {k: v for k, v in data.norms.items()}, "truncation": preset.truncation}
    return out


def _pre_evolution(cfg, exp, p: dict):
    if cfg.grid.kind != "cartesian":
        raise ValueError("wave-system runs need grid.kind = 'cartesian'")
    spec = make_preset(exp.id.removeprefix("preset-"), p["preset_params"]).spec
    if p["profile"] == "weighted-tail" and (p["mu"] is None or not 0 < p["mu"] < 1):
        raise ValueError("weighted-tail data needs mu in (0, 1)")
    h = 2 * cfg.grid.L / (cfg.grid.n * cfg.grid.refine)
    if p["dt"] > h / spec.c_max:
        raise CFLError(f"dt={p['dt']} exceeds the CFL limit h/c_max={h / spec.c_max:g}")


def _run_lifespan(cfg, exp, p: dict) -> PointResult:
    spec = make_preset(p["preset"], p["preset_params"]).spec
    grid = _build_grid(cfg.grid, p)
    table = lifespan_probe(spec, p["eps_grid"], p["threshold"], grid=grid, profile=p["profile"], horizon=p["horizon"],
                           dt=p["dt"], seed=cfg.seed, data_kw=p["data"], workers=_workers())
    rows = [{"eps": r.eps, "T_proxy": r.T_proxy, "capped": r.capped, "reason": r.reason} for r in table]
    return PointResult(rows, [()] * len(rows), {})


def _pre_lifespan(cfg, exp, p: dict):
    if cfg.grid.kind != "cartesian":
        raise ValueError("lifespan probes need grid.kind = 'cartesian'")
    if p["preset"] not in PRESET_NAMES:
        raise ValueError(f"unknown preset {p['preset']!r}; choose from {', '.join(PRESET_NAMES)}")
    spec = make_preset(p["preset"], p["preset_params"]).spec
    e = p["eps_grid"]
    if not e or any(b >= a for a, b in zip(e, e[1:])) or min(e) < 0:
        raise ValueError("eps_grid must be non-empty, non-negative and strictly descending")
    h = 2 * cfg.grid.L / (cfg.grid.n * cfg.grid.refine)
    if p["dt"] > h / spec.c_max:
        raise CFLError(f"dt={p['dt']} exceeds the CFL limit h/c_max={h / spec.c_max:g}")


_PRESET_NOTES = {
    "relativistic-membrane": "timelike minimal surface graph, exact cubic form",
    "nonlinear-membrane": "nonlinear membrane equation, quartic u_tt remainder dropped",
    "maxwell-scalar": "scalar reduction of a nonlinear Maxwell model with u_t^2 u_tt nonlinearity",
    "liquid-crystal": "nematic liquid crystal wave equation, cubic truncation",
    "wave-maps-cubic": "wave maps into a curved target, cubic Taylor truncation",
}


def _registry() -> dict[str, Experiment]:
    e = [
        Experiment("kernel-sweep", "pointwise decay of frequency-shell wave kernels in the core, light-cone and "
                   "exterior regimes", "kernels.eval_kernel", KernelParams, KERNEL_COLUMNS, _run_kernel, _pre_kernel),
        Experiment("lowfreq-kernel", "decay (1+t)^-1 of the low-frequency lump kernel",
                   "kernels.eval_kernel", LowKernelParams, KERNEL_COLUMNS, _run_kernel, _pre_low_kernel),
        Experiment("lowfreq-inverse-square-kernel", "decay (1+t)^-1 ln(e+t) of the low-frequency |xi|^-2 kernel",
                   "kernels.eval_kernel", LowInverseKernelParams, KERNEL_COLUMNS, _run_kernel, _pre_low_kernel),
        Experiment("dispersive", "frequency-localized dispersive estimate with (1+2^k t)^-1 decay",
                   "estimator.check_dispersive", DispersiveParams, REPORT_COLUMNS, _run_dispersive, _pre_estimator,
                   "annular-shell"),
        Experiment("strichartz", "frequency-localized Strichartz estimate for admissible non-endpoint pairs",
                   "estimator.check_strichartz", StrichartzParams, REPORT_COLUMNS, _run_strichartz, _pre_strichartz,
                   "annular-shell"),
        Experiment("strichartz-endpoint", "endpoint (2, inf) Strichartz bound with its ln^1/2 loss",
                   "estimator.check_strichartz", EndpointParams, REPORT_COLUMNS + ("plain_sup",), _run_endpoint_log,
                   _pre_endpoint, "annular-shell"),
        Experiment("strichartz-endpoint-inverse", "endpoint (2, inf) bound for |D|^-1 e^{it|D|} with a ln loss",
                   "estimator.check_strichartz", EndpointParams, REPORT_COLUMNS + ("plain_sup",),
                   _run_endpoint_inverse, _pre_endpoint, "annular-shell"),
        Experiment("weighted-strichartz-1", "weighted Strichartz estimate for e^{it|D|}, item 1",
                   "estimator.check_weighted_strichartz", WeightedStrichartzParams, REPORT_COLUMNS, _run_weighted_1,
                   _pre_weighted, "shifted-bump"),
        Experiment("weighted-strichartz-2", "weighted Strichartz estimate for |D|^-1 e^{it|D|}, item 2",
                   "estimator.check_weighted_strichartz", WeightedStrichartzParams, REPORT_COLUMNS, _run_weighted_2,
                   _pre_weighted, "shifted-bump"),
        Experiment("localized-linfty", "L^inf decay of shell-localized waves from annulus-localized data",
                   "estimator.check_localized_linfty", LocalizedParams, REPORT_COLUMNS, _run_localized,
                   _pre_localized, "gaussian-bump"),
        Experiment("compact-linfty", "L^inf decay min{1, R/(1+t)} for compactly supported data",
                   "estimator.check_compact_linfty", CompactParams, REPORT_COLUMNS, _run_compact, _pre_compact,
                   "shifted-bump"),
        Experiment("weighted-l2l2", "weighted L^2 growth of free waves with power weights",
                   "estimator.check_weighted_l2l2", WeightedL2Params, REPORT_COLUMNS, _run_weighted_l2,
                   _pre_weighted_l2, "gaussian-bump"),
        Experiment("technical-lemma", "annulus-by-annulus weighted bound used for the weighted Strichartz proof",
                   "estimator.check_technical_lemma", TechnicalParams, REPORT_COLUMNS, _run_technical,
                   _pre_technical, "gaussian-bump"),
        Experiment("weighted-shell-equivalence", "equivalence of <x>^beta L^2 with annulus-weighted shell pieces",
                   "dyadic.weighted_shell_equivalence_check", ShellEquivalenceParams, REPORT_COLUMNS,
                   _run_shell_equivalence, _pre_shell_equivalence, "gaussian-bump"),
        Experiment("a2-weight", "A_2 constant of the power weight <x>^alpha", "estimator.a2_constant",
                   A2Params, ("alpha", "sup"), _run_a2, _pre_a2),
        Experiment("huygens", "strong Huygens principle: support of free waves from compact data",
                   "propagators.huygens_residual", HuygensParams, REPORT_COLUMNS, _run_huygens, _pre_huygens,
                   "shifted-bump"),
    ]
    for name in PRESET_NAMES:
        e.append(Experiment(f"preset-{name}", f"small-data evolution: {_PRESET_NOTES[name]}", "wavesys.evolve",
                            EvolutionParams, TRACE_COLUMNS, _run_evolution, _pre_evolution))
    e.append(Experiment("lifespan", "lifespan proxy against data size for a preset", "wavesys.lifespan_probe",
                        LifespanParams, ("eps", "T_proxy", "capped", "reason"), _run_lifespan, _pre_lifespan))
    return {x.id: x for x in e}


REGISTRY: dict[str, Experiment] = _registry()


def list_experiments() -> list[tuple[str, str, str]]:
    """Catalog entries ``(id, operation, annotation)`` in registry order."""
    return [(x.id, x.operation, x.annotation) for x in REGISTRY.values()]


def config_schema() -> dict:
    """JSON schema of the run configuration and of each experiment's parameters."""
    return {
        "config": ExperimentConfig.model_json_schema(),
        "experiments": {
            x.id: {
                "operation": x.operation,
                "annotation": x.annotation,
                "columns": list(x.columns),
                "default_family": x.family,
                "params": x.params.model_json_schema(),
            }
            for x in REGISTRY.values()
        },
    }


# ---------------------------------------------------------------------------
# loading and validation


_HEADER = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*(\"[^\"]*\"|'[^']*'|[A-Za-z0-9_\-]+)\s*=")


def _locate(text: Optional[str], loc: tuple) -> Optional[int]:
    """1-based line of the TOML key at ``loc`` (or its closest enclosing key or table header)."""
    if not text or not loc:
        return None
    parts = [str(x) for x in loc if not isinstance(x, int)]
    table, best, best_len = [], None, 0
    for i, line in enumerate(text.splitlines(), 1):
        m = _HEADER.match(line)
        if m:
            table = [s.strip().strip("\"'") for s in m.group(1).split(".")]
            path = table
        else:
            m = _KEY.match(line)
            if not m:
                continue
            path = table + [m.group(1).strip("\"'")]
        if path == parts[: len(path)] and len(path) > best_len:
            best, best_len = i, len(path)
    return best


def _fmt(text: Optional[str], loc: tuple, msg: str, source: str) -> str:
    line = _locate(text, loc)
    where = ".".join(str(x) for x in loc) or "<root>"
    pos = f"{source}:{line}" if line else source
    return f"{pos}: {where}: {msg}"


def _points(cfg: ExperimentConfig) -> list[dict]:
    axes = list(cfg.sweep)
    combos = itertools.product(*(cfg.sweep[a] for a in axes)) if axes else [()]
    return [dict(cfg.params, **dict(zip(axes, c))) for c in combos]


def _resolve(cfg: ExperimentConfig, text: Optional[str], source: str) -> list[dict]:
    """Validated parameter dicts for every sweep point."""
    exp = REGISTRY[cfg.experiment]
    diags, resolved = [], []
    for idx, raw in enumerate(_points(cfg)):
        fam = _family_overrides(raw)
        raw = {k: v for k, v in raw.items() if not k.startswith("family.")}
        errors = []
        try:
            p = exp.params(**raw).model_dump()
        except ValidationError as err:
            errors += [(e["loc"], e["msg"]) for e in err.errors()]
        try:
            FamilyConfig(**dict(cfg.family.model_dump(), **fam))
        except ValidationError as err:
            errors += [((f"family.{e['loc'][0]}",) + tuple(e["loc"][1:]), e["msg"]) for e in err.errors() if e["loc"]]
        if errors:
            for loc, msg in errors:
                key = loc[0] if loc else None
                if key in cfg.sweep:
                    where = ("sweep",) + tuple(loc)
                elif str(key).startswith("family."):
                    where = ("family", str(key).split(".", 1)[1]) + tuple(loc[1:])
                else:
                    where = ("params",) + tuple(loc)
                diags.append(_fmt(text, where, msg, source) + f" (sweep point {idx})")
            continue
        p.update({f"family.{k}": v for k, v in fam.items()})
        try:
            if exp.precheck is not None:
                exp.precheck(cfg, exp, p)
        except ConfigError as err:
            diags.extend(f"{source}: {d} (sweep point {idx})" for d in err.diagnostics)
            continue
        except (ValueError, RuntimeError) as err:
            diags.append(_fmt(text, ("params",), f"precondition violated ({_point_label(cfg, p)}): {err}", source)
                         + f" (sweep point {idx})")
            continue
        resolved.append(p)
    if cfg.acceptance is not None and cfg.acceptance.column not in _columns(cfg):
        diags.append(_fmt(text, ("acceptance", "column"), f"no column {cfg.acceptance.column!r} in the results", source))
    if diags:
        raise ConfigError(diags)
    return resolved


def _point_label(cfg: ExperimentConfig, p: dict) -> str:
    return ", ".join(f"{a}={p[a]}" for a in cfg.sweep) or "no sweep"


def load_config(path: str | os.PathLike) -> tuple[ExperimentConfig, list[dict]]:
    """Parse, schema-check and precondition-check a TOML config or a run manifest."""
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError([f"{source}: cannot read: {err.strerror}"]) from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)["config"]
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise ConfigError([f"{source}: not a run manifest: {err}"]) from None
        text = None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError([f"{source}: TOML syntax error: {err}"]) from None
    try:
        cfg = ExperimentConfig(**data)
    except ValidationError as err:
        raise ConfigError([_fmt(text, tuple(e["loc"]), e["msg"], source) for e in err.errors()]) from None
    return cfg, _resolve(cfg, text, source)


# ---------------------------------------------------------------------------
# execution


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError([f"{WORKERS_ENV}={raw!r} is not an integer"]) from None
    if n < 1:
        raise ConfigError([f"{WORKERS_ENV} must be >= 1, got {n}"])
    return n


def _run_point(job) -> PointResult:
    cfg_dict, params = job
    cfg = ExperimentConfig(**cfg_dict)
    exp = REGISTRY[cfg.experiment]
    return exp.runner(cfg, exp, params)


def _columns(cfg: ExperimentConfig) -> list[str]:
    own = REGISTRY[cfg.experiment].columns
    return [a for a in cfg.sweep if a not in own] + list(own)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    return str(v)


def _plain(v):
    """JSON-safe copy with non-finite floats spelled out."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


def _dump(obj, sort_keys: bool = True) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=sort_keys, ensure_ascii=False) + "\n"


def _aggregate(rows: list[dict], columns: list[str]) -> dict:
    out = {}
    for c in columns:
        vals = [r[c] for r in rows if isinstance(r.get(c), (int, float)) and not isinstance(r.get(c), bool)]
        vals = [float(v) for v in vals if math.isfinite(float(v))]
        if vals:
            out[c] = {"min": min(vals), "max": max(vals)}
    return out


def run(config: ExperimentConfig, points: list[dict], out_dir: Optional[str | os.PathLike] = None) -> int:
    """Execute a validated configuration and write the report files; returns the exit status."""
    exp = REGISTRY[config.experiment]
    out = Path(out_dir if out_dir is not None else config.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError([f"output directory {out}: {err.strerror}"]) from None
    workers = _workers()
    cfg_dict = config.model_dump(mode="json")
    jobs = [(cfg_dict, p) for p in points]
    error = None
    try:
        if workers > 1 and len(jobs) > 1 and exp.id != "lifespan":
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
                results = list(ex.map(_run_point, jobs))
        else:
            results = [_run_point(j) for j in jobs]
    except NUMERICAL_ERRORS as err:
        results, error = [], f"{type(err).__name__}: {err}"

    columns = _columns(config)
    rows, flagged, valid_rows, details = [], [], [], []
    for idx, (p, res) in enumerate(zip(points, results)):
        details.append({"point": idx, "sweep": {a: p[a] for a in config.sweep}, **res.detail})
        for row, flags in zip(res.rows, res.flags):
            full = dict(row)
            for a in config.sweep:
                full.setdefault(a, p[a])
            rows.append(full)
            if flags:
                flagged.append({"row": len(rows) - 1, "point": idx, "flags": list(flags)})
            else:
                valid_rows.append(full)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    (out / "results.csv").write_text(buf.getvalue())

    acceptance = None
    if config.acceptance is not None and error is None:
        acc = config.acceptance
        vals = [float(r[acc.column]) for r in valid_rows if r.get(acc.column) is not None]
        ok = bool(vals) and all(
            (acc.max is None or v <= acc.max) and (acc.min is None or v >= acc.min) for v in vals
        )
        acceptance = {"column": acc.column, "max": acc.max, "min": acc.min, "checked_rows": len(vals),
                      "observed_max": max(vals) if vals else None, "observed_min": min(vals) if vals else None,
                      "passed": ok}

    if error is not None:
        status = EXIT_NUMERICAL
    elif acceptance is not None and acceptance["checked_rows"] and not acceptance["passed"]:
        status = EXIT_ACCEPTANCE
    elif flagged or (acceptance is not None and not acceptance["checked_rows"]):
        status = EXIT_NUMERICAL
    else:
        status = EXIT_OK

    summary = {
        "experiment": exp.id,
        "operation": exp.operation,
        "points": len(points),
        "rows": len(rows),
        "valid_rows": len(valid_rows),
        "aggregate": _aggregate(valid_rows, columns),
        "flagged": flagged,
        "acceptance": acceptance,
        "error": error,
        "details": details,
        "exit_status": status,
    }
    (out / "summary.json").write_text(_dump(summary))
    manifest = {
        "config": cfg_dict,
        "experiment": {"id": exp.id, "operation": exp.operation, "annotation": exp.annotation},
        "versions": {
            "wavelab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(platform.python_version_tuple()[:2]),
        },
        "validity": {
            "flagged_rows": len(flagged),
            "flags": sorted({f for item in flagged for f in item["flags"]}),
            "error": error,
        },
        "outputs": ["results.csv", "summary.json"],
        "exit_status": status,
    }
    # key order is kept so that the sweep axes replay in their original order
    (out / "manifest.json").write_text(_dump(manifest, sort_keys=False))
    return status


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wavelab", description="Run numerical experiments on linear and cubic waves.")
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run an experiment from a TOML config or a run manifest")
    r.add_argument("config")
    r.add_argument("--out", help="override the output directory")
    ls = sub.add_parser("list", help="print the experiment catalog")
    ls.add_argument("--json", action="store_true", help="machine-readable catalog")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "list":
        cat = list_experiments()
        if args.json:
            print(json.dumps([{"id": i, "operation": o, "annotation": a} for i, o, a in cat], indent=2))
        else:
            width = max(len(i) for i, _, _ in cat)
            for i, o, a in cat:
                print(f"{i:<{width}}  {o}: {a}")
        return EXIT_OK
    try:
        cfg, points = load_config(args.config)
        if args.verb == "validate":
            print(f"{args.config}: ok ({cfg.experiment}, {len(points)} sweep point{'s' if len(points) != 1 else ''})")
            return EXIT_OK
        status = run(cfg, points, args.out)
    except ConfigError as err:
        for d in err.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output.dir
    print(f"{cfg.experiment}: {len(points)} point(s), results in {out} (exit {status})")
    return status


if __name__ == "__main__":
    sys.exit(main())
