"""Pulsed-field extraction: calibration, forward sweep model, threshold fit, inference.

Forward model
-------------
Electrons leave in order of binding.  An electron bound by ``eps`` (in kT,
below the escape energy) of a trap of depth ``eta`` escapes when

    eps / eta <= 1 - (q / q0) * w(E_a / (q E_th))

where q0 = (N_i - N_e)/N_i is the initial net-charge fraction, q the net
charge fraction once the escaped electrons are gone, and w the depth of a
Gaussian well of charge q N_i tilted by the uniform field E_a, relative to its
untilted depth.  For weak fields w = 1 - 2 sqrt(e^3 Q E_a / 4 pi eps0) / D(Q)
(the point-charge barrier lowering); w vanishes when E_a reaches the maximum
space-charge field, so the last electron leaves exactly at the threshold
field of the bare ion cloud.  Escaped count and q are solved together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erf, erfc

from .core import DomainError, GaussianIonCloud
from .king import KingSolution, _rho, _simpson_weights, temperature_scan, trap_depth_estimate
from .space_charge import invert_threshold, threshold_field

SQRT_PI = math.sqrt(math.pi)
PLATEAU_EPS = 0.02


class DegenerateShotError(DomainError):
    """GI1 + GI2 = 0: the shot carries no electron signal and is dropped."""


class UnsaturatedSweepError(ValueError):
    """The sweep never reaches a plateau, so no threshold can be read off it."""


class NoElectronsError(ValueError):
    pass


def calibrate_counts(gi1: float, gi2: float, mean_electrons: float) -> float:
    """Electrons ejected by the first pulse: mean_N_e * GI1 / (GI1 + GI2)."""
    if gi1 < 0 or gi2 < 0:
        raise DomainError("gated-integrator counts must be non-negative")
    if not mean_electrons > 0:
        raise DomainError("mean electron number must be positive")
    total = gi1 + gi2
    if total == 0:
        raise DegenerateShotError("GI1 + GI2 = 0")
    return mean_electrons * (gi1 / total)


@dataclass(frozen=True)
class SweepCurve:
    applied_field: np.ndarray
    ejected_count: np.ndarray
    source: str = "measured"

    def __post_init__(self):
        f = np.asarray(self.applied_field, dtype=float)
        c = np.asarray(self.ejected_count, dtype=float)
        if f.shape != c.shape or f.ndim != 1:
            raise DomainError("field and count arrays must be 1-D and equal length")
        if np.any(np.diff(f) <= 0):
            raise DomainError("applied fields must be strictly increasing")
        if self.source not in ("measured", "simulated"):
            raise DomainError("source must be 'measured' or 'simulated'")
        object.__setattr__(self, "applied_field", f)
        object.__setattr__(self, "ejected_count", c)

    def __len__(self):
        return len(self.applied_field)


# ---------------------------------------------------------------------------
# tilted Gaussian well


def _well_shape(v):
    # potential of a unit Gaussian charge along a line, normalized to 1 at the centre
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = math.sqrt(math.pi / 2.0) * erf(v / math.sqrt(2.0)) / v
    return np.where(v == 0, 1.0, out)


def _well_slope(v):
    # -d/dv of _well_shape, i.e. the normalized field
    v = np.asarray(v, dtype=float)
    return math.sqrt(math.pi / 2.0) * erf(v / math.sqrt(2.0)) / v**2 - np.exp(-0.5 * v * v) / v


@lru_cache(maxsize=None)
def _critical_slope() -> tuple[float, float]:
    res = minimize_scalar(lambda v: -_well_slope(v), bounds=(0.5, 3.0), method="bounded", options={"xatol": 1e-12})
    return -float(res.fun), float(res.x)


def relative_well_depth(x: float) -> float:
    """Depth of a Gaussian well tilted by a field ``x`` times its maximum field.

    Relative to the untilted depth: 1 at x = 0, 0 for x >= 1.
    """
    if x <= 0:
        return 1.0
    if x >= 1:
        return 0.0
    a_c, v_star = _critical_slope()
    a = x * a_c
    if x < 1e-10:
        # saddle far out in the Coulomb tail: point-charge barrier lowering
        return 1.0 - 2.0 * math.sqrt(math.sqrt(math.pi / 2.0) * a)
    f = lambda v: float(_well_slope(v)) - a  # noqa: E731
    v1 = brentq(f, 1e-12, v_star, xtol=1e-15, rtol=1e-14)
    hi = max(2.0 * v_star, 2.0 * math.sqrt(math.sqrt(math.pi / 2.0) / a))
    while f(hi) > 0:
        hi *= 2.0
    v2 = brentq(f, v_star, hi, xtol=1e-15, rtol=1e-14)
    u = lambda v: -float(_well_shape(v)) - a * v  # noqa: E731
    return max(0.0, u(v2) - u(v1))


# ---------------------------------------------------------------------------
# binding-energy distribution of the King electrons


class BindingDistribution:
    """Cumulative distribution of electron binding below the escape energy."""

    def __init__(self, solution: KingSolution):
        self.solution = solution
        s = solution.s
        u = np.log(s)
        self._eta_t = np.clip(solution.eta_profile, 0.0, None)
        self._w = _simpson_weights(len(s), u[1] - u[0]) * s**3
        self._total = float(self._w @ _rho(self._eta_t))

    def fraction_below(self, binding):
        """Fraction of electrons with binding <= ``binding`` (units of kT)."""
        b = np.atleast_1d(np.asarray(binding, dtype=float))
        out = np.array([self._fraction(x) for x in b])
        return out if np.ndim(binding) else float(out[0])

    def _fraction(self, delta: float) -> float:
        if delta <= 0:
            return 0.0
        if delta >= self.solution.eta:
            return 1.0
        et = self._eta_t
        hi = np.sqrt(et)
        lo = np.sqrt(np.clip(et - delta, 0.0, None))
        # (4/sqrt pi) int_lo^hi x^2 (e^{eta_t - x^2} - 1) dx
        gauss = (erfc(lo) - erfc(hi)) - (2.0 / SQRT_PI) * (hi * np.exp(-hi * hi) - lo * np.exp(-lo * lo))
        part = np.exp(et) * gauss - (4.0 / (3.0 * SQRT_PI)) * (hi**3 - lo**3)
        return float(np.clip(self._w @ part / self._total, 0.0, 1.0))


def sample_binding(solution: KingSolution, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo binding energies (kT units) drawn from the King phase-space density.

    Radii by rejection from a blockwise-constant envelope of s^3 rho(eta_t);
    speeds by rejection, per radius, from the truncated Maxwellian
    x^2 (exp(eta_t - x^2) - 1) on [0, sqrt(eta_t)].
    """
    u = np.log(solution.s)
    eta_spline = CubicSpline(u, solution.eta_profile)
    weight = lambda uu: np.exp(3.0 * uu) * _rho(eta_spline(uu))  # noqa: E731
    edges = u[::16]
    if edges[-1] != u[-1]:
        edges = np.r_[edges, u[-1]]
    fine = np.linspace(u[0], u[-1], 16 * len(u))
    wf = weight(fine)
    block = np.clip(np.searchsorted(edges, fine, side="right") - 1, 0, len(edges) - 2)
    env = np.zeros(len(edges) - 1)
    np.maximum.at(env, block, wf)
    # widen by the neighbouring blocks so the envelope stays above the spline
    env = 1.1 * np.maximum.reduce([env, np.r_[env[1:], 0.0], np.r_[0.0, env[:-1]]])
    mass = env * np.diff(edges)
    mass /= mass.sum()

    radii = np.empty(0)
    while radii.size < n_samples:
        m = 2 * (n_samples - radii.size) + 1000
        k = rng.choice(len(mass), size=m, p=mass)
        uu = rng.uniform(edges[k], edges[k + 1])
        radii = np.concatenate([radii, uu[rng.uniform(size=m) * env[k] < weight(uu)]])
    et = np.clip(eta_spline(radii[:n_samples]), 0.0, None)

    x2 = np.full(n_samples, np.nan)
    todo = np.flatnonzero(et > 0)
    while todo.size:
        e = et[todo]
        shallow = e < 1.5
        # deep wells: Maxwellian proposal, keep with prob 1 - exp(x^2 - eta_t)
        prop = np.sum(rng.normal(0.0, math.sqrt(0.5), (todo.size, 3)) ** 2, axis=1)
        ok = (prop < e) & (rng.uniform(size=todo.size) < -np.expm1(prop - e))
        # shallow wells: uniform speed proposal under the bound eta_t (e^eta_t - 1)
        xs = rng.uniform(size=todo.size) * np.sqrt(e)
        ok_s = rng.uniform(size=todo.size) * e * np.expm1(e) < xs * xs * np.expm1(e - xs * xs)
        prop = np.where(shallow, xs * xs, prop)
        ok = np.where(shallow, ok_s, ok)
        x2[todo[ok]] = prop[ok]
        todo = todo[~ok]
    out = et - np.nan_to_num(x2, nan=0.0)
    return out[:n_samples]


# ---------------------------------------------------------------------------
# forward model


def _escape_state(dist: BindingDistribution, E_a: float, E_th: float, q0: float, ne_frac: float):
    """Return (ejected fraction of N_e, binding cut as fraction of eta)."""
    if E_a <= 0:
        return 0.0, 0.0
    if E_a >= E_th:
        return 1.0, 1.0
    eta = dist.solution.eta

    def cut(frac):
        q = q0 + ne_frac * frac
        return 1.0 - (q / q0) * relative_well_depth(E_a / (q * E_th))

    def g(frac):
        return dist.fraction_below(cut(frac) * eta) - frac

    if g(1.0) >= 0:
        return 1.0, 1.0
    if g(0.0) <= 0:
        return 0.0, cut(0.0)
    frac = brentq(g, 0.0, 1.0, xtol=1e-14, rtol=1e-12)
    return frac, cut(frac)


def simulate_sweep(solution: KingSolution, fields) -> SweepCurve:
    """Electrons ejected by each applied field (V/m) from a solved King plasma."""
    fields = np.asarray(fields, dtype=float)
    if np.any(fields < 0):
        raise DomainError("applied fields must be non-negative")
    cloud = solution.cloud
    dist = BindingDistribution(solution)
    E_th = threshold_field(cloud)
    n_e = solution.electron_count
    q0 = (cloud.ion_count - n_e) / cloud.ion_count
    ne_frac = n_e / cloud.ion_count
    counts = np.array([n_e * _escape_state(dist, E, E_th, q0, ne_frac)[0] for E in fields])
    # guard against round-off non-monotonicity of the root finder
    counts = np.maximum.accumulate(counts)
    return SweepCurve(fields, counts, source="simulated")


def escape_binding_cut(solution: KingSolution, E_a: float) -> tuple[float, float]:
    """(ejected fraction, binding cut in kT) at applied field ``E_a``."""
    cloud = solution.cloud
    dist = BindingDistribution(solution)
    n_e = solution.electron_count
    frac, cut = _escape_state(
        dist, E_a, threshold_field(cloud), (cloud.ion_count - n_e) / cloud.ion_count, n_e / cloud.ion_count
    )
    return frac, cut * solution.eta


# ---------------------------------------------------------------------------
# threshold fit and inference


@dataclass(frozen=True)
class ThresholdFit:
    field: float  # V/m
    plateau: float  # electrons; estimate of mean N_e
    slope: float  # electrons per V/m on the rising edge
    low_confidence: bool = False


def fit_threshold(curve: SweepCurve, eps: float = PLATEAU_EPS) -> ThresholdFit:
    """Knee of a sweep: where the rising-edge line meets the plateau.

    Plateau points are the trailing run within ``eps`` of the largest count;
    the rising edge is fitted by least squares over the points between 20 %
    and (1 - eps) of the plateau.  A curve that is flat from its first point
    gives the first field, flagged low-confidence.
    """
    E = curve.applied_field
    y = curve.ejected_count
    if len(E) < 5:
        raise UnsaturatedSweepError(f"need at least 5 sweep points, got {len(E)}")
    top = float(np.max(y))
    if not top > 0:
        raise UnsaturatedSweepError("no electrons detected at any field")
    if y[-1] > (1.0 + 0.05) * y[-2] or y[-2] > (1.0 + 0.05) * y[-3]:
        raise UnsaturatedSweepError("sweep still rising at its last points")

    on_plateau = y >= (1.0 - eps) * top
    # trailing run of plateau points
    start = len(y)
    while start > 0 and on_plateau[start - 1]:
        start -= 1
    if start == len(y):
        raise UnsaturatedSweepError("no plateau at the end of the sweep")
    plateau = float(np.mean(y[start:]))
    if start == 0:
        return ThresholdFit(float(E[0]), plateau, 0.0, low_confidence=True)

    rising = np.arange(start)
    rising = rising[(y[rising] >= 0.2 * plateau) & (y[rising] < (1.0 - eps) * plateau)]
    if len(rising) < 2:
        # too few points on the edge: interpolate between the last two points around the knee
        i = start
        lo = max(i - 1, 0)
        slope = (y[i] - y[lo]) / (E[i] - E[lo])
        level = (1.0 - eps) * plateau
        knee = float(np.interp(level, [y[lo], y[i]], [E[lo], E[i]]))
        return ThresholdFit(knee, plateau, float(slope), low_confidence=True)
    slope, intercept = np.polyfit(E[rising], y[rising], 1)
    if not slope > 0:
        raise UnsaturatedSweepError("rising edge has no positive slope")
    knee = (plateau - intercept) / slope
    knee = float(np.clip(knee, E[rising[-1]], E[start]))
    return ThresholdFit(knee, plateau, float(slope))


@dataclass(frozen=True)
class InferenceResult:
    E_th: float
    cloud: GaussianIonCloud
    N_e: float
    delta_N: float
    te_vs_eta: list = field(default_factory=list)
    fit: ThresholdFit | None = None

    def table(self) -> list[dict]:
        return [
            {"eta": p.eta, "Te_kelvin": p.T_e, "ne0_per_m3": p.n_e0, "delta_N": self.delta_N}
            for p in self.te_vs_eta
        ]

    def summary(self) -> dict:
        out = {
            "E_th_V_per_m": self.E_th,
            "ion_count": self.cloud.ion_count,
            "sigma_m": self.cloud.sigma,
            "peak_ion_density_per_m3": self.cloud.peak_density,
            "electron_count": self.N_e,
            "delta_N": self.delta_N,
            "trap_depth_J": trap_depth_estimate(self.cloud.ion_count, self.N_e, self.cloud.sigma),
        }
        if self.fit is not None:
            out["fit"] = {
                "plateau": self.fit.plateau,
                "slope_per_V_per_m": self.fit.slope,
                "low_confidence": self.fit.low_confidence,
            }
        out["failed_eta"] = [p.eta for p in self.te_vs_eta if p.error]
        return out


DEFAULT_ETAS = (4.0, 6.0, 8.0, 10.0, 12.0)


def infer_plasma_state(
    curve: SweepCurve, sigma: float, eta_range=DEFAULT_ETAS, jobs: int = 1, options=None
) -> InferenceResult:
    """Sweep -> threshold -> ion cloud -> T_e(eta) table."""
    if not np.max(curve.ejected_count) > 0:
        raise NoElectronsError("plateau at zero electrons")
    fit = fit_threshold(curve)
    cloud = invert_threshold(fit.field, sigma)
    n_e = fit.plateau
    if not n_e > 0:
        raise NoElectronsError("plateau at zero electrons")
    delta = cloud.ion_count - n_e
    if not delta > 0:
        raise DomainError(
            f"inferred N_i={cloud.ion_count:.4g} does not exceed N_e={n_e:.4g}: no trap"
        )
    table = temperature_scan(cloud, n_e, eta_range, options=options, jobs=jobs)
    return InferenceResult(fit.field, cloud, n_e, delta, table, fit)


def curve_from_shots(
    voltages, gi1, gi2, grid_gap: float, mean_electrons: float
) -> SweepCurve:
    """Calibrated sweep from per-shot integrator readings, averaging repeated voltages.

    Degenerate shots (GI1 + GI2 = 0) are dropped.
    """
    per_v: dict[float, list[float]] = {}
    for v, a, b in zip(voltages, gi1, gi2):
        try:
            n = calibrate_counts(a, b, mean_electrons)
        except DegenerateShotError:
            continue
        per_v.setdefault(float(v), []).append(n)
    if not per_v:
        raise NoElectronsError("no usable shots")
    vs = sorted(per_v)
    return SweepCurve(
        np.array(vs) / grid_gap, np.array([np.mean(per_v[v]) for v in vs]), source="measured"
    )
