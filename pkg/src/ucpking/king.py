"""Michie-King electrons trapped in a Gaussian ion cloud.

The electrons follow f ~ exp(-E/kT) - exp(-E_t/kT) below the escape energy
E_t.  With eta_t(r) = (E_t - U(r)) / kT the density is n_e0 rho(eta_t)/rho(eta),
eta = eta_t(0), and Poisson's equation in s = r/sigma reads

    (1/s^2) d/ds (s^2 d eta_t/ds) = -Lam [exp(-s^2/2) - mu rho(eta_t)/rho(eta)]

with Lam = e^2 n_i0 sigma^2 / (eps0 kT) and mu = n_e0 / n_i0.  The solver
finds (Lam, mu) and the profile for a given eta and electron number.

The outer boundary sits at 50 sigma where eta_t is matched to the Coulomb
tail A/r of the net enclosed charge, i.e. d(r eta_t)/dr = 0.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import spsolve
from scipy.special import erf, gammaln

from .core import CONSTANTS, DomainError, GaussianIonCloud

log = logging.getLogger(__name__)

SQRT_PI = math.sqrt(math.pi)
# rho(x) ~ SERIES_LEADING * x^{5/2} as x -> 0
SERIES_LEADING = 8.0 / (15.0 * SQRT_PI)
# ions inside infinite radius, in units of n_i0 sigma^3 / (4 pi)
ION_MOMENT = math.sqrt(math.pi / 2.0)

_SERIES_CUTOFF = 4.0
_SERIES_TERMS = 60
_CONTINUATION_START = 10.0


class NoTrapError(DomainError):
    """The cloud has no net positive charge, so no electron can be bound."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# reduced density and its derivative


def _series_coefficients(n_terms: int) -> np.ndarray:
    # (2/sqrt(pi)) 2^k / (2k+1)!!  for k = 2..n_terms+1
    k = np.arange(2, n_terms + 2)
    log_dfact = gammaln(2 * k + 2) - gammaln(k + 1) - k * math.log(2.0)
    return (2.0 / SQRT_PI) * np.exp(k * math.log(2.0) - log_dfact)


_COEF = _series_coefficients(_SERIES_TERMS)


def _rho_series(x: np.ndarray) -> np.ndarray:
    # sum_k c_k x^{k+1/2}; the two leading terms cancel against the subtracted
    # polynomial, leaving a positive series without cancellation
    sx = np.sqrt(x)
    return sx * np.polynomial.polynomial.polyval(x, np.concatenate([[0.0, 0.0], _COEF]))


def reduced_density(eta_t):
    """rho(eta_t) = e^eta_t erf(sqrt eta_t) - (2/sqrt pi)(eta_t^{1/2} + 2/3 eta_t^{3/2}).

    Accepts scalars or arrays; negative input is a domain error.
    """
    x = np.asarray(eta_t, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("reduced_density needs eta_t >= 0")
    out = _rho(x)
    return out if out.ndim else float(out)


def _rho(x: np.ndarray) -> np.ndarray:
    # no checks; x <= 0 maps to zero (no trapped phase space)
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, 0.0, None)
    small = xc < _SERIES_CUTOFF
    out = np.empty_like(xc)
    out[small] = _rho_series(xc[small])
    xs = xc[~small]
    sx = np.sqrt(xs)
    out[~small] = np.exp(xs) * erf(sx) - (2.0 / SQRT_PI) * (sx + (2.0 / 3.0) * xs * sx)
    return out


def _drho(x: np.ndarray) -> np.ndarray:
    # d rho / d eta = e^eta erf(sqrt eta) - (2/sqrt pi) sqrt(eta) = rho + (4/3sqrt pi) eta^{3/2}
    xc = np.clip(np.asarray(x, dtype=float), 0.0, None)
    return _rho(xc) + (4.0 / (3.0 * SQRT_PI)) * xc**1.5


def reduced_density_quadrature(eta_t: float) -> float:
    """Direct velocity-space integral of the truncated Maxwellian.

    (4/sqrt pi) int_0^sqrt(eta_t) x^2 (exp(eta_t - x^2) - 1) dx, which equals
    reduced_density(eta_t).  Kept as an independent check of the closed form.
    """
    if eta_t < 0:
        raise DomainError("eta_t must be >= 0")
    if eta_t == 0:
        return 0.0
    a = math.sqrt(eta_t)
    val, _ = quad(lambda x: x * x * math.expm1(eta_t - x * x), 0.0, a, epsabs=0.0, epsrel=1e-13, limit=200)
    return 4.0 / SQRT_PI * val


# ---------------------------------------------------------------------------
# trap depth and collision time


def trap_depth_estimate(ion_count: float, electron_count: float, sigma: float) -> float:
    """Central depth (J) of the well of a Gaussian net charge e (N_i - N_e)."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if electron_count < 0 or not ion_count > electron_count:
        raise DomainError("need N_i > N_e >= 0")
    return math.sqrt(2.0 / math.pi) * CONSTANTS.coulomb_constant_times_e2 * (ion_count - electron_count) / sigma


def coulomb_logarithm(n_e: float, T_e: float) -> float:
    """ln(12 pi n lambda_D^3), clamped below at 2."""
    kT = CONSTANTS.boltzmann * T_e
    debye = math.sqrt(CONSTANTS.vacuum_permittivity * kT / (n_e * CONSTANTS.elementary_charge**2))
    return max(2.0, math.log(12.0 * math.pi * n_e * debye**3))


def thermalization_time(n_e: float, T_e: float) -> float:
    """Spitzer electron self-collision time (s).

    tau_ee = 6 sqrt(2) pi^{3/2} eps0^2 sqrt(m_e) (kT)^{3/2} / (ln Lambda e^4 n_e),
    i.e. the usual 3.44e5 T[eV]^{3/2} / (n[cm^-3] ln Lambda) seconds.
    """
    if not (n_e > 0 and T_e > 0):
        raise DomainError("need n_e > 0 and T_e > 0")
    c = CONSTANTS
    kT = c.boltzmann * T_e
    num = 6.0 * math.sqrt(2.0) * math.pi**1.5 * c.vacuum_permittivity**2 * math.sqrt(c.electron_mass) * kT**1.5
    return num / (coulomb_logarithm(n_e, T_e) * c.elementary_charge**4 * n_e)


# ---------------------------------------------------------------------------
# self-consistent solution


@dataclass(frozen=True)
class KingSolution:
    eta: float
    radii: np.ndarray
    eta_profile: np.ndarray
    T_e: float
    n_e0: float
    E_t: float
    electron_count: float
    cloud: GaussianIonCloud
    poisson_residual: float
    coupling: float  # Lam
    density_ratio: float  # mu = n_e0 / n_i0
    newton_iterations: int = 0

    @property
    def s(self) -> np.ndarray:
        return self.radii / self.cloud.sigma

    def electron_density(self, r=None):
        if r is None:
            eta_t = self.eta_profile
        else:
            eta_t = self.eta_at(r)
        return self.n_e0 * _rho(eta_t) / _rho(np.array(self.eta))

    def eta_at(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.radii[-1] * (1 + 1e-12)):
            raise DomainError("radius outside the solution grid")
        inner = r < self.radii[0]
        # inside the first grid point the series eta - Lam (1 - mu) s^2 / 6 is exact enough
        s = r / self.cloud.sigma
        core = self.eta - self.coupling * (1.0 - self.density_ratio) * s * s / 6.0
        interp = _cubic_log_interp(self.radii, self.eta_profile, np.clip(r, self.radii[0], None))
        out = np.where(inner, core, interp)
        return out if out.ndim else float(out)

    @property
    def ion_count(self) -> float:
        return self.cloud.ion_count

    def tail_coefficient(self) -> float:
        """A (m) in eta_t ~ A/r for the net charge e (N_i - N_e)."""
        return CONSTANTS.coulomb_constant_times_e2 * (self.cloud.ion_count - self.electron_count) / (
            CONSTANTS.boltzmann * self.T_e
        )

    def summary(self) -> dict:
        return {
            "eta": self.eta,
            "T_e": self.T_e,
            "n_e0": self.n_e0,
            "electron_count": self.electron_count,
            "ion_count": self.cloud.ion_count,
            "sigma": self.cloud.sigma,
            "coupling": self.coupling,
            "density_ratio": self.density_ratio,
            "poisson_residual": self.poisson_residual,
        }


def _cubic_log_interp(x, y, xq):
    from scipy.interpolate import CubicSpline

    return CubicSpline(np.log(x), y)(np.log(xq))


@dataclass
class SolverOptions:
    n_points: int = 2001
    s_min: float = 1e-3
    s_max: float = 50.0
    tol: float = 1e-10
    residual_tol: float = 1e-6
    max_newton: int = 80
    max_refinements: int = 2
    extra: dict = field(default_factory=dict)


def _simpson_weights(n: int, h: float) -> np.ndarray:
    w = np.zeros(n)
    if n % 2 == 1:
        w[0:-1:2] += 1.0
        w[1::2] += 4.0
        w[2::2] += 1.0
        w[-1] = 1.0
        w *= h / 3.0
        w[0] = h / 3.0
        return w
    raise ValueError("Simpson weights need an odd number of points")


class _Problem:
    """Discretized equations in u = ln s with Numerov on w = exp(u/2) eta_t."""

    def __init__(self, eta: float, electron_fraction: float, opts: SolverOptions):
        n = opts.n_points | 1
        self.n = n
        self.eta = eta
        self.u = np.linspace(math.log(opts.s_min), math.log(opts.s_max), n)
        self.h = self.u[1] - self.u[0]
        self.s = np.exp(self.u)
        self.ion = np.exp(-0.5 * self.s**2)
        self.e5 = np.exp(2.5 * self.u)
        self.ehalf = np.exp(0.5 * self.u)
        self.w_int = _simpson_weights(n, self.h) * self.s**3
        self.q_target = electron_fraction * ION_MOMENT
        self.rho_c = float(_rho(np.array(eta)))
        # one-sided 4th-order derivative at the outer edge
        self.d_out = np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / (12.0 * self.h)

    def electrons(self, y, mu):
        return mu * _rho(y) / self.rho_c

    def charge_q(self, y, mu):
        # int_0^{s_max} nu_e s^2 ds with the analytic core below s_min
        s0 = self.s[0]
        return float(self.w_int @ self.electrons(y, mu)) + mu * s0**3 / 3.0

    def residual(self, y, lam, mu):
        h2 = self.h**2 / 12.0
        ne = self.electrons(y, mu)
        F = -lam * (self.ion - ne)
        w = self.ehalf * y
        g = 0.25 * w + self.e5 * F
        res = np.empty(self.n + 2)
        res[1:-3] = (w[2:] - 2 * w[1:-1] + w[:-2]) - h2 * (g[2:] + 10 * g[1:-1] + g[:-2])
        F0 = -lam * (1.0 - mu)
        res[0] = y[0] - (self.eta + F0 * self.s[0] ** 2 / 6.0)
        res[-3] = y[1] - (self.eta + F0 * self.s[1] ** 2 / 6.0)
        res[-2] = self.d_out @ y[-5:] + y[-1]
        res[-1] = self.charge_q(y, mu) / self.q_target - 1.0
        return res

    def jacobian(self, y, lam, mu):
        n = self.n
        h2 = self.h**2 / 12.0
        R = _rho(y) / self.rho_c
        dR = np.where(y > 0, _drho(y) / self.rho_c, 0.0)
        dg = 0.25 * self.ehalf + self.e5 * lam * mu * dR
        dg_lam = -self.e5 * (self.ion - mu * R)
        dg_mu = self.e5 * lam * R
        j = np.arange(1, n - 1)
        rows = [j, j, j]
        cols = [j - 1, j, j + 1]
        vals = [
            self.ehalf[j - 1] - h2 * dg[j - 1],
            -2.0 * self.ehalf[j] - 10.0 * h2 * dg[j],
            self.ehalf[j + 1] - h2 * dg[j + 1],
        ]
        rows += [j, j]
        cols += [np.full(n - 2, n), np.full(n - 2, n + 1)]
        vals += [
            -h2 * (dg_lam[2:] + 10 * dg_lam[1:-1] + dg_lam[:-2]),
            -h2 * (dg_mu[2:] + 10 * dg_mu[1:-1] + dg_mu[:-2]),
        ]
        s0, s1 = self.s[0] ** 2 / 6.0, self.s[1] ** 2 / 6.0
        rows.append(np.array([0, 0, 0, n - 1, n - 1, n - 1]))
        cols.append(np.array([0, n, n + 1, 1, n, n + 1]))
        vals.append(np.array([1.0, (1 - mu) * s0, -lam * s0, 1.0, (1 - mu) * s1, -lam * s1]))
        d_out = self.d_out.copy()
        d_out[-1] += 1.0
        rows.append(np.full(5, n))
        cols.append(np.arange(n - 5, n))
        vals.append(d_out)
        rows.append(np.full(n + 1, n + 1))
        cols.append(np.r_[np.arange(n), n + 1])
        q = self.charge_q(y, mu)
        vals.append(np.r_[self.w_int * mu * dR, q / mu] / self.q_target)
        J = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n + 2, n + 2)
        )
        return J.tocsc()


def _initial_guess(prob: _Problem, eta: float, electron_fraction: float):
    # Gaussian net charge shape, Lam from eta kT = trap depth (exactly eta / q)
    q = 1.0 - electron_fraction
    s = prob.s
    shape = np.sqrt(np.pi / 2.0) * erf(s / math.sqrt(2.0)) / s
    return eta * shape, eta / q, electron_fraction


def _newton(prob: _Problem, y, lam, mu, opts: SolverOptions):
    n = prob.n
    x = np.r_[y, lam, mu]
    res = prob.residual(x[:n], x[n], x[n + 1])
    norm = np.linalg.norm(res)
    for it in range(1, opts.max_newton + 1):
        J = prob.jacobian(x[:n], x[n], x[n + 1])
        dx = spsolve(J, -res)
        if not np.all(np.isfinite(dx)):
            raise ConvergenceError("singular Newton step", {"iteration": it, "residual": norm})
        # damp so that Lam and mu stay positive and the residual decreases
        t = 1.0
        for scale_idx in (n, n + 1):
            if x[scale_idx] + t * dx[scale_idx] <= 0:
                t = min(t, 0.5 * x[scale_idx] / -dx[scale_idx])
        while True:
            trial = x + t * dx
            # overshooting trials may overflow; they are rejected below
            with np.errstate(over="ignore", invalid="ignore"):
                new_res = prob.residual(trial[:n], trial[n], trial[n + 1])
            new_norm = np.linalg.norm(new_res)
            if np.isfinite(new_norm) and (new_norm < (1.0 - 1e-4 * t) * norm or t < 1e-6):
                break
            t *= 0.5
        x, res, norm = trial, new_res, new_norm
        step = np.linalg.norm(t * dx[:n], np.inf) / max(1.0, prob.eta)
        log.debug("newton %d: |res|=%.3e step=%.3e t=%.3g lam=%.6g mu=%.6g", it, norm, step, t, x[n], x[n + 1])
        if np.linalg.norm(res, np.inf) < opts.tol and step < 1e-9:
            return x[:n], x[n], x[n + 1], it
    raise ConvergenceError(
        "Newton iteration did not converge",
        {"iterations": opts.max_newton, "residual": norm, "coupling": x[n], "density_ratio": x[n + 1]},
    )


def _continue(make, p0: float, p1: float, state, opts: SolverOptions):
    """Follow the solution of ``make(p)`` from p0 to p1, halving the step on failure."""
    y, lam, mu, its = state
    p, step = p0, 0.25 * abs(p1 - p0) if abs(p1 - p0) < 4.0 else 1.0
    while p != p1:
        p_next = p1 if abs(p1 - p) <= step else p + math.copysign(step, p1 - p)
        sub = make(p_next)
        try:
            y_n, lam_n, mu_n, its = _newton(sub, y * (sub.eta / make(p).eta), lam, mu, opts)
        except ConvergenceError:
            step *= 0.5
            if step < 1e-3 * max(abs(p1 - p0), 1e-3):
                raise
            continue
        y, lam, mu, p = y_n, lam_n, mu_n, p_next
        step *= 2.0
    return y, lam, mu, its


def _solve_problem(prob: _Problem, frac: float, opts: SolverOptions, guess=None):
    if guess is not None:
        s_old, y_old, lam, mu = guess
        y = _cubic_log_interp(s_old, y_old, prob.s)
        return _newton(prob, y, lam, mu, opts)
    try:
        return _newton(prob, *_initial_guess(prob, prob.eta, frac), opts)
    except ConvergenceError as exc:
        first_error = exc
    sub_opts = opts_with_n(opts, prob.n)
    # continuation in eta from a well-conditioned starting depth
    if prob.eta != _CONTINUATION_START:
        try:
            sub = _Problem(_CONTINUATION_START, frac, sub_opts)
            state = _newton(sub, *_initial_guess(sub, _CONTINUATION_START, frac), opts)
            return _continue(lambda e: _Problem(e, frac, sub_opts), _CONTINUATION_START, prob.eta, state, opts)
        except ConvergenceError:
            pass
    # continuation in the electron fraction from a weakly neutralized cloud
    f0 = 0.5
    if frac > f0:
        try:
            sub = _Problem(prob.eta, f0, sub_opts)
            state = _newton(sub, *_initial_guess(sub, prob.eta, f0), opts)
            return _continue(lambda f: _Problem(prob.eta, f, sub_opts), f0, frac, state, opts)
        except ConvergenceError:
            pass
    raise first_error


def opts_with_n(opts: SolverOptions, n_points: int) -> SolverOptions:
    return SolverOptions(**{**opts.__dict__, "n_points": n_points})


def _deriv4(y: np.ndarray, h: float, order: int) -> np.ndarray:
    # 4th-order finite differences on a uniform grid, one-sided near the ends
    d = np.empty_like(y)
    if order == 1:
        d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
        for i in (0, 1):
            d[i] = (-25 * y[i] + 48 * y[i + 1] - 36 * y[i + 2] + 16 * y[i + 3] - 3 * y[i + 4]) / (12 * h)
            j = -1 - i
            d[j] = (25 * y[j] - 48 * y[j - 1] + 36 * y[j - 2] - 16 * y[j - 3] + 3 * y[j - 4]) / (12 * h)
    else:
        d[2:-2] = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / (12 * h * h)
        for i in (0, 1):
            d[i] = (45 * y[i] - 154 * y[i + 1] + 214 * y[i + 2] - 156 * y[i + 3] + 61 * y[i + 4] - 10 * y[i + 5]) / (
                12 * h * h
            )
            j = -1 - i
            d[j] = (45 * y[j] - 154 * y[j - 1] + 214 * y[j - 2] - 156 * y[j - 3] + 61 * y[j - 4] - 10 * y[j - 5]) / (
                12 * h * h
            )
    return d


def poisson_residual(s: np.ndarray, eta_t: np.ndarray, coupling: float, density_ratio: float, eta: float) -> float:
    """Max dimensionless residual of the Poisson equation for a tabulated profile.

    ``s`` must be geometric.  The Laplacian is rebuilt with 4th-order central
    differences in ln s (independent of the solver's Numerov stencil) and the
    mismatch with the charge source is scaled by the largest ion source term.
    """
    u = np.log(s)
    h = u[1] - u[0]
    lap = _deriv4(eta_t, h, 2) + _deriv4(eta_t, h, 1)
    ne = density_ratio * _rho(eta_t) / _rho(np.array(eta))
    source = -coupling * s * s * (np.exp(-0.5 * s * s) - ne)
    scale = coupling * np.max(s * s * np.exp(-0.5 * s * s))
    return float(np.max(np.abs(lap - source)) / scale)


def solve_selfconsistent(
    cloud: GaussianIonCloud,
    target_electrons: float,
    eta: float,
    options: SolverOptions | None = None,
) -> KingSolution:
    """Self-consistent King profile holding ``target_electrons`` with central depth ``eta``.

    Raises NoTrapError when target_electrons >= N_i and ConvergenceError if the
    Newton iteration fails.
    """
    opts = options or SolverOptions()
    if not eta > 0:
        raise DomainError("eta must be positive")
    if not target_electrons > 0:
        raise DomainError("target electron number must be positive")
    if target_electrons >= cloud.ion_count:
        raise NoTrapError(
            f"N_e={target_electrons:g} >= N_i={cloud.ion_count:g}: no net positive charge, no trap"
        )
    frac = target_electrons / cloud.ion_count
    n_points = opts.n_points
    guess = None
    for attempt in range(opts.max_refinements + 1):
        prob = _Problem(eta, frac, opts_with_n(opts, n_points))
        y, lam, mu, its = _solve_problem(prob, frac, opts, guess)
        resid = poisson_residual(prob.s, y, lam, mu, eta)
        if resid < opts.residual_tol:
            break
        log.info("residual %.2e above tolerance with %d points, refining", resid, prob.n)
        guess = (prob.s, y, lam, mu)
        n_points = 2 * prob.n - 1
    else:
        raise ConvergenceError(
            "Poisson residual above tolerance after grid refinement",
            {"residual": resid, "n_points": prob.n, "coupling": lam, "density_ratio": mu},
        )

    c = CONSTANTS
    n0 = cloud.peak_density
    kT = c.elementary_charge**2 * n0 * cloud.sigma**2 / (c.vacuum_permittivity * lam)
    n_e_count = 4.0 * math.pi * n0 * cloud.sigma**3 * prob.charge_q(y, mu)
    return KingSolution(
        eta=float(eta),
        radii=prob.s * cloud.sigma,
        eta_profile=y,
        T_e=kT / c.boltzmann,
        n_e0=mu * n0,
        # potential energy measured from the cloud centre
        E_t=eta * kT,
        electron_count=n_e_count,
        cloud=cloud,
        poisson_residual=resid,
        coupling=lam,
        density_ratio=mu,
        newton_iterations=its,
    )


@dataclass(frozen=True)
class ScanPoint:
    eta: float
    T_e: float
    n_e0: float
    error: str | None = None


def _scan_one(args) -> ScanPoint:
    cloud, n_e, eta, options = args
    try:
        sol = solve_selfconsistent(cloud, n_e, eta, options)
    except (ConvergenceError, DomainError) as exc:
        return ScanPoint(eta, math.nan, math.nan, f"{type(exc).__name__}: {exc}")
    return ScanPoint(eta, sol.T_e, sol.n_e0)


def temperature_scan(
    cloud: GaussianIonCloud,
    target_electrons: float,
    eta_values,
    options: SolverOptions | None = None,
    jobs: int = 1,
) -> list[ScanPoint]:
    """T_e and n_e0 for each eta; a failing point is reported, not raised."""
    etas = [float(e) for e in eta_values]
    if any(not 0 < e <= 30 for e in etas):
        raise DomainError("eta values must lie in (0, 30]")
    if any(b < a for a, b in zip(etas, etas[1:])):
        raise DomainError("eta values must be sorted")
    work = [(cloud, target_electrons, e, options) for e in etas]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_scan_one, work))
    return [_scan_one(w) for w in work]
