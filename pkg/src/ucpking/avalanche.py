"""Rydberg atoms inside an expanding ultracold plasma.

A single effective electron-impact ionization rate coefficient k drives
dN_R/dt = -k n_e N_R, with the central electron density following the
self-similar expansion of the Gaussian cloud.  Each ionized atom adds one
electron to the plasma.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .core import CESIUM_MASS, CONSTANTS, DomainError, derive_peak_density

# Cs nd series
D_SERIES_DEFECT = 2.475
IONS_PER_MICROJOULE = 4.0e4
DEFAULT_SIGMA0 = 250e-6
DEFAULT_T_E = 50.0

RateCoefficient = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class RydbergSample:
    n: int
    atom_count: float
    quantum_defect: float = D_SERIES_DEFECT

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 7:
            raise DomainError("principal quantum number must be an integer >= 7")
        if not self.n - self.quantum_defect > 0:
            raise DomainError("n - delta must be positive")
        if self.atom_count < 0:
            raise DomainError("atom count must be non-negative")

    @property
    def binding_energy(self) -> float:
        """Ry / (n - delta)^2 in J."""
        return CONSTANTS.rydberg_energy / (self.n - self.quantum_defect) ** 2


def expansion_sigma(sigma0: float, T_e: float, ion_mass: float, t):
    """sigma(t) = sqrt(sigma0^2 + (k_B T_e / m_ion) t^2)."""
    if not (sigma0 > 0 and T_e > 0 and ion_mass > 0):
        raise DomainError("sigma0, T_e and ion mass must be positive")
    v0_sq = CONSTANTS.boltzmann * T_e / ion_mass
    t = np.asarray(t, dtype=float)
    out = np.sqrt(sigma0**2 + v0_sq * t * t)
    return out if out.ndim else float(out)


def density_exposure(n0: float, sigma0: float, T_e: float, ion_mass: float, t0: float, t1: float) -> float:
    """int_{t0}^{t1} n0 (sigma0 / sigma(t))^3 dt, in closed form (m^-3 s)."""
    v0 = math.sqrt(CONSTANTS.boltzmann * T_e / ion_mass)
    g = lambda t: (v0 * t / sigma0) / math.sqrt(1.0 + (v0 * t / sigma0) ** 2)  # noqa: E731
    return n0 * sigma0 / v0 * (g(t1) - g(t0))


def _rate(rate_coefficient: RateCoefficient, T_e: float) -> float:
    k = rate_coefficient(T_e) if callable(rate_coefficient) else float(rate_coefficient)
    if k < 0:
        raise DomainError("rate coefficient must be non-negative")
    return k


def ionization_step(
    sample: RydbergSample, n_e_central: float, T_e: float, dt: float, rate_coefficient: RateCoefficient
) -> RydbergSample:
    """Advance the Rydberg population by ``dt`` at fixed electron density."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    k = _rate(rate_coefficient, T_e)
    return replace(sample, atom_count=sample.atom_count * math.exp(-k * n_e_central * dt))


@dataclass(frozen=True)
class AvalancheTrajectory:
    times: np.ndarray
    sigma_t: np.ndarray
    peak_ion_density: np.ndarray
    surviving_rydberg_fraction: np.ndarray
    rydberg_count: np.ndarray
    free_electrons: np.ndarray

    @property
    def efficiency(self) -> float:
        """Percentage of Rydberg atoms ionized by the final time."""
        return 100.0 * (1.0 - float(self.surviving_rydberg_fraction[-1]))

    def rows(self):
        return [
            {"t_s": t, "sigma_m": s, "ni0_per_m3": n, "rydberg_fraction": f}
            for t, s, n, f in zip(self.times, self.sigma_t, self.peak_ion_density, self.surviving_rydberg_fraction)
        ]


def simulate_avalanche(
    sample: RydbergSample,
    ion_count: float,
    t_end: float,
    *,
    sigma0: float = DEFAULT_SIGMA0,
    T_e: float = DEFAULT_T_E,
    ion_mass: float = CESIUM_MASS,
    rate_coefficient: RateCoefficient | None = None,
    electron_fraction: float = 1.0,
    n_steps: int = 200,
) -> AvalancheTrajectory:
    """Rydberg survival in a plasma of ``ion_count`` ions expanding from ``sigma0``.

    The central electron density is ``electron_fraction`` times the peak ion
    density; each step uses its exact time-averaged value, so the survival
    at ``t_end`` does not depend on ``n_steps``.
    """
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    if rate_coefficient is None:
        rate_coefficient = DEFAULT_RATE_COEFFICIENT
    times = np.linspace(0.0, t_end, n_steps + 1)
    sig = np.asarray(expansion_sigma(sigma0, T_e, ion_mass, times))
    if ion_count > 0:
        n0 = derive_peak_density(ion_count, sigma0)
        dens = n0 * (sigma0 / sig) ** 3
    else:
        n0 = 0.0
        dens = np.zeros_like(times)

    counts = [sample.atom_count]
    current = sample
    for t0, t1 in zip(times[:-1], times[1:]):
        exposure = density_exposure(n0, sigma0, T_e, ion_mass, t0, t1) if n0 > 0 else 0.0
        mean_ne = electron_fraction * exposure / (t1 - t0)
        nxt = ionization_step(current, mean_ne, T_e, t1 - t0, rate_coefficient)
        counts.append(nxt.atom_count)
        current = nxt
    counts = np.array(counts)
    # every ionized atom adds one electron
    electrons = sample.atom_count - counts
    if sample.atom_count > 0:
        frac = counts / sample.atom_count
    else:
        # with no atoms the survival follows the single-atom decay law
        probe = simulate_avalanche(
            replace(sample, atom_count=1.0), ion_count, t_end, sigma0=sigma0, T_e=T_e, ion_mass=ion_mass,
            rate_coefficient=rate_coefficient, electron_fraction=electron_fraction, n_steps=n_steps,
        )
        frac = probe.surviving_rydberg_fraction
    return AvalancheTrajectory(times, sig, dens, frac, counts, electrons)


def calibrate_rate_coefficient(
    target_fraction: float = 0.99,
    peak_density: float = 1.6e15,
    t_end: float = 10e-6,
    sigma0: float = DEFAULT_SIGMA0,
    T_e: float = DEFAULT_T_E,
    ion_mass: float = CESIUM_MASS,
) -> float:
    """Smallest k (m^3/s) that ionizes ``target_fraction`` by ``t_end``."""
    if not 0 < target_fraction < 1:
        raise DomainError("target fraction must lie in (0, 1)")
    exposure = density_exposure(peak_density, sigma0, T_e, ion_mass, 0.0, t_end)
    return -math.log1p(-target_fraction) / exposure


# 1.6e9 cm^-3 and 10 us need k >= 7.05e-10 m^3/s for 99 %; rounded up.
DEFAULT_RATE_COEFFICIENT = 1.0e-9


def efficiency_vs_density(
    sample: RydbergSample, laser_energies, t_end: float, **kwargs
) -> list[tuple[float, float]]:
    """Ionization efficiency (%) against plasma laser energy (uJ), 4e4 ions per uJ."""
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    out = []
    for p in laser_energies:
        if p < 0:
            raise DomainError("laser energy must be non-negative")
        if p == 0:
            out.append((float(p), 0.0))
            continue
        traj = simulate_avalanche(sample, IONS_PER_MICROJOULE * p, t_end, **kwargs)
        out.append((float(p), traj.efficiency))
    return out


class Regime(enum.Enum):
    IONIZING_COOLING = "Ionizing/Cooling"
    SUPERELASTIC_HEATING = "Superelastic/Heating"


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    ratio: float  # E_b / (c k_B T_e)


def classify_regime(sample: RydbergSample, T_e: float, boundary_factor: float = 3.0) -> RegimeClassification:
    """Collisions ionize (and cool) when E_b < c k_B T_e, otherwise they deepen the binding."""
    if not boundary_factor > 0:
        raise DomainError("boundary factor must be positive")
    if not T_e > 0:
        raise DomainError("T_e must be positive")
    boundary = boundary_factor * CONSTANTS.boltzmann * T_e
    ratio = sample.binding_energy / boundary
    # equality (to rounding) counts as superelastic
    tie = math.isclose(sample.binding_energy, boundary, rel_tol=1e-12)
    regime = Regime.IONIZING_COOLING if ratio < 1.0 and not tie else Regime.SUPERELASTIC_HEATING
    return RegimeClassification(regime, ratio)
