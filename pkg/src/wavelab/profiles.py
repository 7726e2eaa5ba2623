"""Radial building blocks for test data."""
from __future__ import annotations

import numpy as np

__all__ = ["compact_bump", "poly_bump", "gaussian", "tail_profile"]


def compact_bump(r, R: float = 1.0):
    """``exp(1 - 1/(1 - (r/R)^2))`` inside ``r < R``, zero outside; peak value 1."""
    x = np.asarray(r, float) / R
    inside = np.abs(x) < 1
    xx = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - xx * xx)), 0.0)


def poly_bump(r, R: float = 1.0, q: int = 14):
    """``(1 - (r/R)^2)^q`` inside ``r < R``, zero outside.

    Only ``C^{q-1}``, but its spectrum decays algebraically rather than like
    ``exp(-sqrt(rho))``, so high Sobolev norms are resolvable on modest grids.
    """
    x = np.asarray(r, float) / R
    return np.where(np.abs(x) < 1, np.clip(1.0 - x * x, 0.0, None) ** q, 0.0)


def gaussian(r, sigma: float = 1.0):
    r = np.asarray(r, float)
    return np.exp(-0.5 * (r / sigma) ** 2)


def tail_profile(r, q: float, sigma: float = 1.0, r_cut: float = 8.0):
    """``<r/sigma>^{-q}`` with a super-Gaussian roll-off at ``r_cut``."""
    r = np.asarray(r, float)
    return (1.0 + (r / sigma) ** 2) ** (-q / 2) * np.exp(-((r / r_cut) ** 8))
