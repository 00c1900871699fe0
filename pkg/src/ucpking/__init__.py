"""Michie-King model of ultracold neutral plasmas.

Threshold fields of Gaussian ion clouds, the self-consistent trapped-electron
profile, extraction-sweep inference of T_e and a Rydberg avalanche model.
"""
from .avalanche import (
    AvalancheTrajectory,
    Regime,
    RydbergSample,
    classify_regime,
    efficiency_vs_density,
    expansion_sigma,
    ionization_step,
    simulate_avalanche,
)
from .core import (
    CONSTANTS,
    ConfigurationError,
    DomainError,
    GaussianIonCloud,
    PlasmaObservation,
    convert_units,
    derive_peak_density,
)
from .extraction import (
    InferenceResult,
    SweepCurve,
    calibrate_counts,
    fit_threshold,
    infer_plasma_state,
    simulate_sweep,
)
from .king import (
    ConvergenceError,
    KingSolution,
    NoTrapError,
    reduced_density,
    solve_selfconsistent,
    temperature_scan,
    thermalization_time,
    trap_depth_estimate,
)
from .space_charge import (
    field_profile,
    gaussian_field,
    invert_threshold,
    threshold_coefficient,
    threshold_field,
    threshold_voltage,
)

__version__ = "0.1.0"

__all__ = [
    "AvalancheTrajectory",
    "Regime",
    "RydbergSample",
    "classify_regime",
    "efficiency_vs_density",
    "expansion_sigma",
    "ionization_step",
    "simulate_avalanche",
    "CONSTANTS",
    "ConfigurationError",
    "DomainError",
    "GaussianIonCloud",
    "PlasmaObservation",
    "convert_units",
    "derive_peak_density",
    "InferenceResult",
    "SweepCurve",
    "calibrate_counts",
    "fit_threshold",
    "infer_plasma_state",
    "simulate_sweep",
    "ConvergenceError",
    "KingSolution",
    "NoTrapError",
    "reduced_density",
    "solve_selfconsistent",
    "temperature_scan",
    "thermalization_time",
    "trap_depth_estimate",
    "field_profile",
    "gaussian_field",
    "invert_threshold",
    "threshold_coefficient",
    "threshold_field",
    "threshold_voltage",
]
