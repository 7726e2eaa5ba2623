"""Coefficient tensors of a cubic multi-speed wave system.

Component ``i`` obeys ``u^i_tt - c_i^2 Lap u^i = G^i`` with

.. code-block:: text

    G^i = Q1[a,b,g,d,i,j,k,l] d2_ab u^j d_g u^k d_d u^l
        + Q2[a,b,g,i,j,k,l]   d2_ab u^j d_g u^k u^l
        + Q3[a,b,i,j,k,l]     d2_ab u^j u^k u^l
        + S1[a,b,g,i,j,k,l]   d_a u^j d_b u^k d_g u^l
        + S2[a,b,i,j,k,l]     d_a u^j d_b u^k u^l
        + S3[a,i,j,k,l]       d_a u^j u^k u^l

summed over repeated indices; Greek indices run over ``0..3`` with ``0`` the
time direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "SystemSpec",
    "SymmetryError",
    "TensorBuilder",
    "TENSOR_NAMES",
    "canonicalize",
]

TENSOR_NAMES = ("Q1", "Q2", "Q3", "S1", "S2", "S3")
_GREEK = {"Q1": 4, "Q2": 3, "Q3": 2, "S1": 3, "S2": 2, "S3": 1}


class SymmetryError(ValueError):
    """Quasilinear coefficients are not symmetric in (alpha, beta) and (i, j)."""


def _shape(name: str, m: int) -> tuple:
    return (4,) * _GREEK[name] + (m,) * 4


def _swap_axes(name: str, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = _GREEK[name]
    return np.swapaxes(T, 0, 1), np.swapaxes(T, g, g + 1)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Speeds and coefficient tensors; quasilinear symmetry is checked on construction."""

    speeds: tuple
    Q1: Optional[np.ndarray] = None
    Q2: Optional[np.ndarray] = None
    Q3: Optional[np.ndarray] = None
    S1: Optional[np.ndarray] = None
    S2: Optional[np.ndarray] = None
    S3: Optional[np.ndarray] = None
    name: str = "custom"
    atol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        c = tuple(float(s) for s in np.atleast_1d(self.speeds))
        if not c or any(not (s > 0 and np.isfinite(s)) for s in c):
            raise ValueError(f"speeds must be positive and finite, got {self.speeds}")
        object.__setattr__(self, "speeds", c)
        m = len(c)
        for name in TENSOR_NAMES:
            T = getattr(self, name)
            T = np.zeros(_shape(name, m)) if T is None else np.array(T, dtype=float)
            if T.shape != _shape(name, m):
                raise ValueError(f"{name} must have shape {_shape(name, m)}, got {T.shape}")
            if not np.all(np.isfinite(T)):
                raise ValueError(f"{name} has non-finite entries")
            T.setflags(write=False)
            object.__setattr__(self, name, T)
        for name in ("Q1", "Q2", "Q3"):
            T = getattr(self, name)
            sab, sij = _swap_axes(name, T)
            scale = self.atol * max(1.0, float(np.abs(T).max()))
            if np.abs(T - sab).max() > scale:
                raise SymmetryError(f"{name} is not symmetric under alpha <-> beta")
            if np.abs(T - sij).max() > scale:
                raise SymmetryError(f"{name} is not symmetric under i <-> j")

    @property
    def m(self) -> int:
        return len(self.speeds)

    @property
    def c_max(self) -> float:
        return max(self.speeds)

    @property
    def is_linear(self) -> bool:
        return all(not np.any(getattr(self, n)) for n in TENSOR_NAMES)

    @property
    def pure_cubic_derivative(self) -> bool:
        """True when no term involves undifferentiated ``u``."""
        return not any(np.any(getattr(self, n)) for n in ("Q2", "Q3", "S2", "S3"))

    @property
    def time_time_free(self) -> bool:
        """True when ``Q^{00..}`` vanishes, so ``G`` does not involve ``u_tt``."""
        return not (np.any(self.Q1[0, 0]) or np.any(self.Q2[0, 0]) or np.any(self.Q3[0, 0]))

    def tensors(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in TENSOR_NAMES}

    def to_dict(self) -> dict:
        """Sparse listing of nonzero coefficients, for manifests."""
        out = {"name": self.name, "speeds": list(self.speeds)}
        for n in TENSOR_NAMES:
            T = getattr(self, n)
            idx = np.argwhere(T != 0)
            out[n] = [[int(v) for v in ix] + [float(T[tuple(ix)])] for ix in idx]
        return out


class TensorBuilder:
    """Accumulates coefficients, symmetrizing quasilinear entries as they are added.

    ``add("Q1", (a, b, g, d), (i, j, k, l), value)`` spreads ``value`` evenly
    over the orbit of ``(a, b)`` and ``(i, j)`` swaps, which leaves the
    represented right-hand side unchanged.
    """

    def __init__(self, m: int):
        self.m = int(m)
        self._T = {n: np.zeros(_shape(n, self.m)) for n in TENSOR_NAMES}

    def add(self, name: str, greek: tuple, latin: tuple, value: float) -> "TensorBuilder":
        if len(greek) != _GREEK[name] or len(latin) != 4:
            raise ValueError(f"{name} takes {_GREEK[name]} greek and 4 latin indices")
        T = self._T[name]
        if name.startswith("Q"):
            a, b, *rest = greek
            i, j, k, l = latin
            orbit = {((a, b), (i, j)), ((b, a), (i, j)), ((a, b), (j, i)), ((b, a), (j, i))}
            w = value / len(orbit)
            for (p, q), (r, s) in orbit:
                T[(p, q, *rest, r, s, k, l)] += w
        else:
            T[tuple(greek) + tuple(latin)] += value
        return self

    def build(self, speeds, name: str = "custom") -> SystemSpec:
        return SystemSpec(tuple(speeds), name=name, **{n: self._T[n].copy() for n in TENSOR_NAMES})


def canonicalize(spec: SystemSpec) -> SystemSpec:
    """Remove the ``u_tt`` dependence of ``G`` up to quintic order.

    Substitutes ``u^j_tt = c_j^2 Lap u^j + O(cubic)`` into the ``(0,0)`` slot,
    which moves ``Q^{00}`` onto ``c_j^2 Q^{pp}`` for each spatial ``p``.  Raises
    :class:`SymmetryError` when unequal speeds make the result asymmetric.
    """
    c2 = np.array(spec.speeds) ** 2
    new = {}
    for name in ("Q1", "Q2", "Q3"):
        T = np.array(getattr(spec, name))
        g = _GREEK[name]
        t00 = T[0, 0].copy()
        # latin j sits at axis g - 2 + 1 of the (0,0) slice
        shape = [1] * t00.ndim
        shape[g - 2 + 1] = spec.m
        moved = t00 * c2.reshape(shape)
        for p in (1, 2, 3):
            T[p, p] += moved
        T[0, 0] = 0.0
        new[name] = T
    return SystemSpec(spec.speeds, Q1=new["Q1"], Q2=new["Q2"], Q3=new["Q3"],
                      S1=spec.S1, S2=spec.S2, S3=spec.S3, name=spec.name + "-canonical", atol=spec.atol)
