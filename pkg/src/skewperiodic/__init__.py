"""Thermodynamic formalism for periodic skew-product extensions of interval maps.

Pressure, critical exponents, drift-based classification, Hessenberg
spectral radii and seeded walk simulation for Z- and N-extensions of
countable full-branch systems.
"""
__version__ = "0.1.0"

from .systems import (
    BranchData,
    DigitSequence,
    SystemSpec,
    TailModel,
    ValidationError,
    builtin,
    builtin_gauss,
    builtin_linearized_gauss,
    builtin_lueroth,
    builtin_power_lueroth,
    builtin_simple_walk,
    load_system,
    resolve_system,
)
from .pressure import PressureValue, convergence_boundary, cylinder_pressure, gibbs_weights, series_pressure
from .variational import (
    CriticalExponents,
    SkewPressureResult,
    critical_exponent,
    critical_exponents,
    skew_pressure_N,
    skew_pressure_Z,
)
from .analysis import (
    PhaseReport,
    TrichotomyReport,
    asymptotic_covariance,
    classify_trichotomy,
    dimension_gap_Z,
    drift,
    phase_transition,
)
from .hessenberg import HessenbergSpec, compare, spectral_radius_truncated, spectral_radius_variational
from .walksim import LevelTrace, recurrence_stats, run_walk, sample_digits
