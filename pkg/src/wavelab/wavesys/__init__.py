"""Cubic quasilinear wave systems: specs, presets, time stepping and diagnostics."""
from .presets import PRESET_NAMES, ModelPreset, make_preset
from .solver import (
    AliasingError,
    CFLError,
    FixedPointError,
    SmallnessError,
    SpectralOps,
    State,
    Stepper,
    eval_nonlinearity,
    step,
)
from .system import SymmetryError, SystemSpec, TensorBuilder, canonicalize
from .diagnostics import DiagnosticsTrace, ScatteringResult, cumulative_lp, evolve, scattering_profile
from .data import (
    PROFILES,
    InitialData,
    LifespanRow,
    UnresolvedDataError,
    lifespan_probe,
    make_initial_data,
    tail_exponents,
    weighted_derivative_norms,
)
