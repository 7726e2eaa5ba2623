"""Ratio statistics returned by the numerical inequality checks."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

__all__ = ["ConstantReport", "make_report", "compare_refinement"]


@dataclass(frozen=True)
class ConstantReport:
    """Observed ``LHS / RHS`` ratios of one inequality over a family and sweep.

    ``sup`` is the empirical constant.  ``flags`` lists anything that makes the
    report untrustworthy (an unresolved quadrature, a wrapped support, an
    unstable refinement); a report with flags is not ``valid``.
    """

    inequality: str
    params: dict
    samples: np.ndarray
    sup: float
    median: float
    p90: float
    slopes: dict = field(default_factory=dict)
    flags: tuple = ()
    extras: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.flags and bool(np.isfinite(self.sup))

    def with_flags(self, *flags: str) -> "ConstantReport":
        return replace(self, flags=tuple(dict.fromkeys(self.flags + flags)))

    def summary(self) -> dict[str, Any]:
        return {
            "inequality": self.inequality,
            "params": {k: _plain(v) for k, v in self.params.items()},
            "sup": float(self.sup),
            "median": float(self.median),
            "p90": float(self.p90),
            "count": int(np.size(self.samples)),
            "slopes": {k: float(v) for k, v in self.slopes.items()},
            "flags": list(self.flags),
            "valid": self.valid,
        }


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def make_report(inequality: str, params: dict, ratios, flags=(), slopes=None, extras=None) -> ConstantReport:
    s = np.asarray(ratios, float).ravel()
    flags = tuple(flags)
    if s.size == 0:
        return ConstantReport(inequality, params, s, np.nan, np.nan, np.nan, slopes or {}, flags + ("empty",), extras or {})
    if not np.all(np.isfinite(s)):
        flags = flags + ("non-finite",)
    fin = s[np.isfinite(s)]
    sup = float(s.max()) if np.all(np.isfinite(s)) else float("inf")
    med = float(np.median(fin)) if fin.size else np.nan
    p90 = float(np.quantile(fin, 0.9)) if fin.size else np.nan
    return ConstantReport(inequality, dict(params), s, sup, med, p90, dict(slopes or {}), tuple(dict.fromkeys(flags)), dict(extras or {}))


def compare_refinement(coarse: ConstantReport, fine: ConstantReport, tolerance: float = 0.3) -> ConstantReport:
    """Return ``fine`` flagged ``unstable`` if its sup moved by more than ``tolerance``."""
    change = abs(fine.sup / coarse.sup - 1.0) if coarse.sup else np.inf
    extras = dict(fine.extras, refinement_change=float(change), coarse_sup=float(coarse.sup))
    out = replace(fine, extras=extras)
    if not np.isfinite(change) or change > tolerance:
        out = out.with_flags("unstable")
    return out
