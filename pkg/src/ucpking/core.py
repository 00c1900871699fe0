"""Physical constants, unit conversion and the shared plasma types.

Everything inside the package works in SI units; the helpers here are the
only place where laboratory units (um, V/cm, cm^-1, ...) are accepted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as _c


class DomainError(ValueError):
    """Raised when a physical input lies outside the domain of a formula."""


class ConfigurationError(ValueError):
    """Raised for malformed configuration such as an unknown unit tag."""


@dataclass(frozen=True)
class PhysicalConstants:
    elementary_charge: float = _c.e
    vacuum_permittivity: float = _c.epsilon_0
    boltzmann: float = _c.k
    electron_mass: float = _c.m_e
    rydberg_energy: float = _c.physical_constants["Rydberg constant times hc in J"][0]
    atomic_mass: float = _c.atomic_mass

    @property
    def coulomb_constant_times_e2(self) -> float:
        """e^2 / (4 pi eps0) in J m."""
        return self.elementary_charge**2 / (4.0 * math.pi * self.vacuum_permittivity)


CONSTANTS = PhysicalConstants()

CESIUM_MASS = 132.905451961 * CONSTANTS.atomic_mass


def derive_peak_density(ion_count: float, sigma: float) -> float:
    """Peak density of a spherical Gaussian cloud, N / ((2 pi)^{3/2} sigma^3)."""
    if not (ion_count > 0 and sigma > 0):
        raise DomainError(f"need N_i > 0 and sigma > 0, got N_i={ion_count!r}, sigma={sigma!r}")
    return ion_count / ((2.0 * math.pi) ** 1.5 * sigma**3)


@dataclass(frozen=True)
class GaussianIonCloud:
    """Frozen ion background n_i(r) = n_i0 exp(-r^2 / 2 sigma^2).

    The peak density is always derived from ``ion_count`` and ``sigma``.
    """

    ion_count: float
    sigma: float
    peak_density: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "peak_density", derive_peak_density(self.ion_count, self.sigma))

    def density(self, r):
        return self.peak_density * np.exp(-0.5 * (np.asarray(r, dtype=float) / self.sigma) ** 2)

    def scaled(self, factor: float) -> "GaussianIonCloud":
        return GaussianIonCloud(self.ion_count * factor, self.sigma)


@dataclass(frozen=True)
class PlasmaObservation:
    """One shot of the extraction experiment, as read from the gated integrators."""

    gi1_counts: float
    gi2_counts: float
    pulse1_voltage: float
    grid_gap: float
    mean_electron_number: float
    gi3_counts: float | None = None
    delay_t1: float | None = None
    delay_t2: float | None = None

    def __post_init__(self) -> None:
        counts = [self.gi1_counts, self.gi2_counts]
        if self.gi3_counts is not None:
            counts.append(self.gi3_counts)
        if any(c < 0 for c in counts):
            raise DomainError("gated-integrator counts must be non-negative")
        if not self.grid_gap > 0:
            raise DomainError("grid gap must be positive")
        if (
            self.delay_t1 is not None
            and self.delay_t2 is not None
            and not self.delay_t2 > self.delay_t1
        ):
            raise DomainError("delay_t2 must come after delay_t1")

    @property
    def applied_field(self) -> float:
        return self.pulse1_voltage / self.grid_gap


# unit tag -> (dimension, factor to SI)
_EV = CONSTANTS.elementary_charge
_INV_CM = _c.h * _c.c * 100.0
_UNITS: dict[str, tuple[str, float]] = {
    "m": ("length", 1.0),
    "cm": ("length", 1e-2),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "μm": ("length", 1e-6),
    "s": ("time", 1.0),
    "us": ("time", 1e-6),
    "μs": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "V/m": ("field", 1.0),
    "V/cm": ("field", 1e2),
    "J": ("energy", 1.0),
    "eV": ("energy", _EV),
    "cm-1": ("energy", _INV_CM),
    "cm^-1": ("energy", _INV_CM),
    "cm⁻¹": ("energy", _INV_CM),
    "K": ("energy", CONSTANTS.boltzmann),
}


def convert_units(value: float, from_unit: str, to_unit: str) -> float:
    """Convert between units of the same dimension.

    Temperatures count as energies (``K`` means k_B * T), so ``K`` converts to
    ``eV`` and ``cm-1`` as well.
    """
    try:
        dim_from, f_from = _UNITS[from_unit]
        dim_to, f_to = _UNITS[to_unit]
    except KeyError as exc:
        raise ConfigurationError(f"unknown unit tag {exc.args[0]!r}") from None
    if dim_from != dim_to:
        raise ConfigurationError(f"cannot convert {dim_from} ({from_unit}) to {dim_to} ({to_unit})")
    if f_from == f_to:
        return value
    return value * f_from / f_to


def supported_units() -> list[str]:
    return sorted(_UNITS)
