"""Model equations written as cubic coefficient tensors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .system import SystemSpec, TensorBuilder

__all__ = ["ModelPreset", "make_preset", "PRESET_NAMES"]

PRESET_NAMES = (
    "relativistic-membrane",
    "nonlinear-membrane",
    "maxwell-scalar",
    "liquid-crystal",
    "wave-maps-cubic",
)

_SPACE = (1, 2, 3)
_S = (0, 0, 0, 0)  # scalar latin indices


@dataclass(frozen=True, eq=False)
class ModelPreset:
    name: str
    params: dict
    spec: SystemSpec
    truncation: str = ""


def _relativistic_membrane() -> tuple[SystemSpec, str]:
    # -|grad u|^2 u_tt - (u_t^2 - |grad u|^2) Lap u + 2 u_t grad u . grad u_t
    # - sum_pq u_p u_q u_pq
    b = TensorBuilder(1)
    for g in _SPACE:
        b.add("Q1", (0, 0, g, g), _S, -1.0)
    for p in _SPACE:
        b.add("Q1", (p, p, 0, 0), _S, -1.0)
        for g in _SPACE:
            b.add("Q1", (p, p, g, g), _S, 1.0)
        b.add("Q1", (0, p, 0, p), _S, 2.0)
        for q in _SPACE:
            b.add("Q1", (p, q, p, q), _S, -1.0)
    return b.build((1.0,), "relativistic-membrane"), "exact cubic form of the C^2 equation"


def _nonlinear_membrane() -> tuple[SystemSpec, str]:
    # |grad u|^2 Lap u - sum_pq u_p u_q u_pq - 3/2 |grad u|^2 u_tt
    b = TensorBuilder(1)
    for p in _SPACE:
        for g in _SPACE:
            b.add("Q1", (p, p, g, g), _S, 1.0)
            b.add("Q1", (p, g, p, g), _S, -1.0)
        b.add("Q1", (0, 0, p, p), _S, -1.5)
    return b.build((1.0,), "nonlinear-membrane"), "O(|grad u|^4) u_tt remainder dropped"


def _maxwell_scalar() -> tuple[SystemSpec, str]:
    # -(1 + u_t^2) u_tt + Lap u = 0  <=>  Box u = -u_t^2 u_tt
    b = TensorBuilder(1).add("Q1", (0, 0, 0, 0), _S, -1.0)
    return b.build((1.0,), "maxwell-scalar"), "exact"


def _liquid_crystal(alpha: float, beta: float) -> tuple[SystemSpec, str]:
    if not (alpha > 0 and beta > 0) or alpha == beta:
        raise ValueError(f"liquid crystal needs alpha, beta > 0 and alpha != beta, got {alpha}, {beta}")
    lam = 2.0 * alpha * (beta - alpha)
    b = TensorBuilder(1)
    for p in _SPACE:
        b.add("Q3", (p, p), _S, lam)
        b.add("S2", (p, p), _S, lam)
    return b.build((alpha,), "liquid-crystal"), "O(u^3)(Lap u + |grad u|^2) remainder dropped"


def _wave_maps(C: np.ndarray) -> tuple[SystemSpec, str]:
    C = np.asarray(C, float)
    m = C.shape[0]
    if C.shape != (m,) * 4:
        raise ValueError(f"C must have shape (m, m, m, m), got {C.shape}")
    S2 = np.zeros((4, 4) + (m,) * 4)
    S2[0, 0] = C
    for p in _SPACE:
        S2[p, p] = -C
    return SystemSpec((1.0,) * m, S2=S2, name="wave-maps-cubic"), "Taylor expansion of the Christoffel symbols cut at first order"


def make_preset(name: str, params: Optional[dict[str, Any]] = None) -> ModelPreset:
    """Build a named model.

    ``liquid-crystal`` takes ``alpha`` and ``beta``; ``wave-maps-cubic`` takes
    either an explicit ``C`` array of shape ``(m, m, m, m)`` or ``m`` and
    ``seed`` for a random one.
    """
    params = dict(params or {})
    if name == "relativistic-membrane":
        spec, note = _relativistic_membrane()
    elif name == "nonlinear-membrane":
        spec, note = _nonlinear_membrane()
    elif name == "maxwell-scalar":
        spec, note = _maxwell_scalar()
    elif name == "liquid-crystal":
        params.setdefault("alpha", 1.0)
        params.setdefault("beta", 2.0)
        spec, note = _liquid_crystal(float(params["alpha"]), float(params["beta"]))
    elif name == "wave-maps-cubic":
        if "C" in params:
            C = np.asarray(params["C"], float)
        else:
            m = int(params.setdefault("m", 2))
            if m < 1:
                raise ValueError("wave maps need m >= 1")
            rng = np.random.default_rng(params.setdefault("seed", 0))
            C = rng.uniform(-1.0, 1.0, (m,) * 4)
        spec, note = _wave_maps(C)
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return ModelPreset(name, params, spec, note)
