"""Command-line front end: ``ucpking {threshold,solve,infer,sweep,avalanche}``.

Every option may also be given in a TOML file passed with ``--config``;
keys are the option names with dashes replaced by underscores.  Flags win
over the file.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 solver or physics error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import avalanche as av
from .core import ConfigurationError, DomainError, GaussianIonCloud, convert_units
from .extraction import (
    DEFAULT_ETAS,
    NoElectronsError,
    UnsaturatedSweepError,
    curve_from_shots,
    escape_binding_cut,
    infer_plasma_state,
    sample_binding,
    simulate_sweep,
)
from .king import ConvergenceError, solve_selfconsistent, thermalization_time
from .report import line_plot_svg, write_csv
from .space_charge import field_profile, invert_threshold, threshold_field, threshold_voltage

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("ucpking")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

SWEEP_HEADER = ["v1_volts", "gi1", "gi2"]
INFER_HEADER = ["eta", "Te_kelvin", "ne0_per_m3", "delta_N"]
TRAJECTORY_HEADER = ["t_s", "sigma_m", "ni0_per_m3", "rydberg_fraction"]
EFFICIENCY_HEADER = ["laser_uJ", "efficiency_percent"]
PROFILE_HEADER = ["r_m", "field_V_per_m"]
KING_HEADER = ["r_m", "eta_t", "ne_per_m3"]

# display units for --units lab
_LAB = {"length": "um", "field": "V/cm", "energy": "K", "time": "us"}


class DataError(ValueError):
    """Input data that cannot be used (empty file, no usable rows, unsaturated sweep)."""


# ---------------------------------------------------------------------------
# configuration


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from None


class Settings:
    """Merged view of flags and config-file keys."""

    def __init__(self, args: argparse.Namespace, file_values: dict):
        self._flags = {k: v for k, v in vars(args).items() if v is not None}
        self._file = file_values

    def get(self, key, default=None):
        if key in self._flags:
            return self._flags[key]
        return self._file.get(key, default)

    def number(self, key, default=None, positive=True, required=True):
        v = self.get(key, default)
        if v is None:
            if required:
                raise ConfigurationError(f"missing required option --{key.replace('_', '-')}")
            return None
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise ConfigurationError(f"--{key.replace('_', '-')} must be a number, got {v!r}") from None
        if positive and not v > 0:
            raise ConfigurationError(f"--{key.replace('_', '-')} must be positive, got {v!r}")
        if not math.isfinite(v):
            raise ConfigurationError(f"--{key.replace('_', '-')} must be finite")
        return v

    def etas(self) -> list[float]:
        etas = _float_list(self.get("etas", list(DEFAULT_ETAS)))
        if not etas or any(not 0 < e <= 30 for e in etas):
            raise ConfigurationError("eta grid must lie in (0, 30]")
        return sorted(etas)

    def out_dir(self) -> Path:
        out = Path(self.get("out", "."))
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigurationError(f"cannot create output directory {out}: {exc}") from None
        if not out.is_dir():
            raise ConfigurationError(f"{out} is not a directory")
        return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"bad config {path}: {exc}") from None
    # allow a [ucpking] table or flat keys
    data = data.get("ucpking", data)
    return {k.replace("-", "_"): v for k, v in data.items()}


class _Display:
    def __init__(self, mode: str):
        if mode not in ("si", "lab"):
            raise ConfigurationError(f"--units must be 'si' or 'lab', got {mode!r}")
        self.mode = mode

    _SI = {"length": "m", "field": "V/m", "energy": "J", "time": "s"}

    def __call__(self, value: float, dim: str) -> str:
        if self.mode == "si":
            return f"{value:.6g} {self._SI[dim]}"
        unit = _LAB[dim]
        return f"{convert_units(value, self._SI[dim], unit):.6g} {unit}"


def _cloud(cfg: Settings) -> GaussianIonCloud:
    sigma = cfg.number("sigma_um") * 1e-6
    return GaussianIonCloud(cfg.number("ni"), sigma)


# ---------------------------------------------------------------------------
# commands


def cmd_threshold(cfg: Settings, show: _Display) -> int:
    sigma = cfg.number("sigma_um") * 1e-6
    gap = cfg.number("gap_mm", 1.57) * 1e-3
    e_th = cfg.number("e_th", required=False)
    if e_th is not None:
        cloud = invert_threshold(e_th, sigma)
        print(f"N_i = {cloud.ion_count:.6g}")
    elif cfg.get("ni") is not None:
        cloud = _cloud(cfg)
    else:
        raise ConfigurationError("give --ni or --e-th")
    print(f"n_i0 = {cloud.peak_density:.6g} m^-3")
    print(f"E_th = {show(threshold_field(cloud), 'field')}")
    print(f"V_th = {threshold_voltage(cloud, gap):.6g} V (gap {show(gap, 'length')})")
    prof = field_profile(cloud)
    print(f"field maximum at r = {show(prof.location_of_max, 'length')}")
    path = write_csv(cfg.out_dir() / "field_profile.csv", PROFILE_HEADER, zip(prof.radii, prof.field_magnitude))
    print(f"wrote {path}")
    return EXIT_OK


def _electron_count(cfg: Settings, cloud: GaussianIonCloud) -> float:
    ne = cfg.number("ne", required=False)
    if ne is None:
        dn = cfg.number("delta_n", required=False)
        if dn is None:
            raise ConfigurationError("give --ne or --delta-n")
        ne = cloud.ion_count - dn
    return ne


def _solve(cfg: Settings):
    cloud = _cloud(cfg)
    ne = _electron_count(cfg, cloud)
    eta = cfg.number("eta", 10.0)
    if eta > 30:
        raise ConfigurationError("eta must lie in (0, 30]")
    return solve_selfconsistent(cloud, ne, eta)


def cmd_solve(cfg: Settings, show: _Display) -> int:
    sol = _solve(cfg)
    print(f"eta = {sol.eta:g}")
    print(f"T_e = {sol.T_e:.6g} K")
    print(f"n_e0 = {sol.n_e0:.6g} m^-3")
    print(f"E_t = {show(sol.E_t, 'energy')} above the central potential energy")
    print(f"N_e = {sol.electron_count:.6g}, Poisson residual = {sol.poisson_residual:.2e}")
    print(f"tau_ee = {show(thermalization_time(sol.n_e0, sol.T_e), 'time')}")
    out = cfg.out_dir()
    write_csv(out / "king_profile.csv", KING_HEADER, zip(sol.radii, sol.eta_profile, sol.electron_density()))
    (out / "king_summary.json").write_text(json.dumps(sol.summary(), indent=2) + "\n")
    print(f"wrote {out / 'king_profile.csv'}")
    return EXIT_OK


def read_sweep_file(path) -> tuple[list[float], list[float], list[float]]:
    """Rows of ``v1_volts,gi1,gi2[,gi3]``; malformed rows are skipped with a warning."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read sweep file {path}: {exc}") from None
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise DataError(f"sweep file {path} is empty")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header[:3] != SWEEP_HEADER or len(header) > 4 or (len(header) == 4 and header[3] != "gi3"):
        raise DataError(f"{path}: header must be v1_volts,gi1,gi2[,gi3], got {','.join(header)}")
    v, g1, g2 = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            vals = [float(x) for x in row]
            if not all(math.isfinite(x) for x in vals) or min(vals[1:]) < 0:
                raise ValueError("counts must be finite and non-negative")
        except ValueError as exc:
            log.warning("%s line %d skipped: %s", path, lineno, exc)
            continue
        v.append(vals[0])
        g1.append(vals[1])
        g2.append(vals[2])
    if not v:
        raise DataError(f"sweep file {path} has no usable rows")
    return v, g1, g2


def cmd_infer(cfg: Settings, show: _Display) -> int:
    path = cfg.get("sweep")
    if path is None:
        raise ConfigurationError("missing required option --sweep")
    sigma = cfg.number("sigma_um") * 1e-6
    gap = cfg.number("gap_mm", 1.57) * 1e-3
    etas = cfg.etas()
    jobs = int(cfg.number("jobs", 1))
    out = cfg.out_dir()
    volts, g1, g2 = read_sweep_file(path)
    mean_ne = cfg.number("mean_electrons", required=False)
    if mean_ne is None:
        # counts already in electrons: GI1 + GI2 is the per-shot total
        mean_ne = float(np.mean(np.add(g1, g2)))
        if not mean_ne > 0:
            raise DataError("all shots are empty")
    try:
        curve = curve_from_shots(volts, g1, g2, gap, mean_ne)
        res = infer_plasma_state(curve, sigma, etas, jobs=jobs)
    except (UnsaturatedSweepError, NoElectronsError) as exc:
        raise DataError(str(exc)) from None
    print(f"E_th = {show(res.E_th, 'field')}")
    print(f"N_i = {res.cloud.ion_count:.6g}, N_e = {res.N_e:.6g}")
    print(f"delta_N = {res.delta_N:.6g}")
    for p in res.te_vs_eta:
        if p.eta in (4.0, 8.0, 12.0):
            print(f"eta = {p.eta:g}: T_e = {p.T_e:.6g} K" + (f" ({p.error})" if p.error else ""))
    write_csv(out / "inference.csv", INFER_HEADER, res.table())
    (out / "inference.json").write_text(json.dumps(res.summary(), indent=2) + "\n")
    print(f"wrote {out / 'inference.csv'}")
    return EXIT_OK


def cmd_sweep(cfg: Settings, show: _Display) -> int:
    sol = _solve(cfg)
    gap = cfg.number("gap_mm", 1.57) * 1e-3
    v_th = threshold_voltage(sol.cloud, gap)
    volts = cfg.get("voltages")
    if volts is not None:
        volts = _float_list(volts)
        if any(b <= a for a, b in zip(volts, volts[1:])) or min(volts) < 0:
            raise ConfigurationError("voltages must be non-negative and strictly increasing")
    else:
        n = int(cfg.number("n_points", 61))
        volts = list(np.linspace(0.0, cfg.number("v_max", 1.5 * v_th), n))
    curve = simulate_sweep(sol, np.asarray(volts) / gap)
    n_e = sol.electron_count
    rows = [(v, c, n_e - c) for v, c in zip(volts, curve.ejected_count)]
    out = cfg.out_dir()
    write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    line_plot_svg(
        out / "sweep.svg", volts, curve.ejected_count, xlabel="V1 (V)", ylabel="electrons ejected",
        title=f"eta = {sol.eta:g}, T_e = {sol.T_e:.3g} K", vlines=[v_th],
    )
    print(f"T_e = {sol.T_e:.6g} K, N_e = {n_e:.6g}, V_th = {v_th:.6g} V")
    n_mc = int(cfg.number("mc_samples", 0, positive=False))
    if n_mc > 0:
        seed = int(cfg.number("seed", 0, positive=False))
        E_mid = 0.5 * threshold_field(sol.cloud)
        frac, cut = escape_binding_cut(sol, E_mid)
        b = sample_binding(sol, n_mc, np.random.default_rng(seed))
        p = float(np.mean(b <= cut))
        err = math.sqrt(max(p * (1 - p), 1e-300) / n_mc)
        print(f"Monte-Carlo check at E_th/2: model {frac:.6f}, sampled {p:.6f} +- {err:.6f}")
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_avalanche(cfg: Settings, show: _Display) -> int:
    n = cfg.number("n", 30)
    if n != int(n):
        raise DomainError("principal quantum number must be an integer")
    sample = av.RydbergSample(int(n), cfg.number("atoms", 1e5), cfg.number("defect", av.D_SERIES_DEFECT, positive=False))
    t_end = cfg.number("t_end_us", 1.0) * 1e-6
    energies = _float_list(cfg.get("energies", "1,2,3,4,5,6,7,8,9,10"))
    if not energies or min(energies) < 0:
        raise ConfigurationError("laser energies must be non-negative")
    kw = dict(
        sigma0=cfg.number("sigma_um", av.DEFAULT_SIGMA0 * 1e6) * 1e-6,
        T_e=cfg.number("te", av.DEFAULT_T_E),
        rate_coefficient=cfg.number("rate", av.DEFAULT_RATE_COEFFICIENT, positive=False),
        n_steps=int(cfg.number("n_steps", 200)),
    )
    eff = av.efficiency_vs_density(sample, energies, t_end, **kw)
    p_traj = cfg.number("energy_uj", max(energies), positive=False)
    out = cfg.out_dir()
    if p_traj > 0:
        traj = av.simulate_avalanche(sample, av.IONS_PER_MICROJOULE * p_traj, t_end, **kw)
        write_csv(out / "trajectory.csv", TRAJECTORY_HEADER, traj.rows())
        print(f"P1 = {p_traj:g} uJ: efficiency {traj.efficiency:.4g} % at t = {show(t_end, 'time')}")
    write_csv(out / "efficiency.csv", EFFICIENCY_HEADER, eff)
    line_plot_svg(
        out / "efficiency.svg", [p for p, _ in eff], [e for _, e in eff],
        xlabel="plasma laser energy (uJ)", ylabel="Rydberg ionization (%)",
        title=f"{sample.n}d, t = {t_end * 1e6:g} us",
    )
    c = cfg.number("boundary_factor", 3.0)
    reg = av.classify_regime(sample, kw["T_e"], c)
    print(
        f"regime: n={sample.n}, T_e={kw['T_e']:g} K, E_b/(c k T_e)={reg.ratio:.4g} (c={c:g}) -> {reg.regime.value}"
    )
    print(f"wrote {out / 'efficiency.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with option defaults")
    common.add_argument("--out", help="output directory (default: current)")
    common.add_argument("--units", choices=["si", "lab"], help="display units for printed values")
    common.add_argument("--jobs", type=int, help="worker processes for eta scans")
    common.add_argument("--seed", type=int, help="seed for Monte-Carlo checks")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ucpking", description="Ultracold plasma King-model toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def cloud_args(sp):
        sp.add_argument("--ni", type=float, help="ion number N_i")
        sp.add_argument("--sigma-um", type=float, help="rms cloud radius in um")

    t = sub.add_parser("threshold", parents=[common], help="threshold field/voltage or inverted N_i")
    cloud_args(t)
    t.add_argument("--e-th", type=float, help="measured threshold field in V/m (inverts to N_i)")
    t.add_argument("--gap-mm", type=float, help="grid gap in mm (default 1.57)")

    s = sub.add_parser("solve", parents=[common], help="self-consistent King profile")
    cloud_args(s)
    s.add_argument("--ne", type=float, help="trapped electron number")
    s.add_argument("--delta-n", type=float, help="N_i - N_e (alternative to --ne)")
    s.add_argument("--eta", type=float, help="central trap depth in kT (default 10)")

    i = sub.add_parser("infer", parents=[common], help="T_e(eta) from an extraction sweep file")
    i.add_argument("--sweep", help="CSV with header v1_volts,gi1,gi2[,gi3]")
    i.add_argument("--sigma-um", type=float)
    i.add_argument("--gap-mm", type=float)
    i.add_argument("--mean-electrons", type=float, help="mean electron number (default: mean GI1+GI2)")
    i.add_argument("--etas", help="comma-separated eta grid (default 4,6,8,10,12)")

    w = sub.add_parser("sweep", parents=[common], help="simulated extraction sweep")
    cloud_args(w)
    w.add_argument("--ne", type=float)
    w.add_argument("--delta-n", type=float)
    w.add_argument("--eta", type=float)
    w.add_argument("--gap-mm", type=float)
    w.add_argument("--voltages", help="comma-separated V1 values (V)")
    w.add_argument("--v-max", type=float, help="largest V1 (default 1.5 V_th)")
    w.add_argument("--n-points", type=int)
    w.add_argument("--mc-samples", type=int, help="Monte-Carlo check of the escape fraction at E_th/2")

    a = sub.add_parser("avalanche", parents=[common], help="Rydberg avalanche efficiency")
    a.add_argument("--n", type=float, help="principal quantum number (default 30)")
    a.add_argument("--defect", type=float, help="quantum defect (default 2.475, Cs d)")
    a.add_argument("--atoms", type=float, help="Rydberg atom number")
    a.add_argument("--energies", help="plasma laser energies in uJ, comma-separated")
    a.add_argument("--energy-uj", type=float, help="energy for the trajectory file (default: largest)")
    a.add_argument("--t-end-us", type=float, help="interaction time in us (default 1)")
    a.add_argument("--sigma-um", type=float)
    a.add_argument("--te", type=float, help="electron temperature in K (default 50)")
    a.add_argument("--rate", type=float, help="ionization rate coefficient in m^3/s")
    a.add_argument("--boundary-factor", type=float, help="c in E_b = c k T_e (default 3)")
    a.add_argument("--n-steps", type=int)
    return p


COMMANDS = {
    "threshold": cmd_threshold,
    "solve": cmd_solve,
    "infer": cmd_infer,
    "sweep": cmd_sweep,
    "avalanche": cmd_avalanche,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    command = args.command
    try:
        file_values = _load_config(args.config)
        ns = argparse.Namespace(**{k: v for k, v in vars(args).items() if k not in ("config", "command", "verbose")})
        cfg = Settings(ns, file_values)
        show = _Display(cfg.get("units", "si"))
        return COMMANDS[command](cfg, show)
    except ConfigurationError as exc:
        print(f"ucpking {command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"ucpking {command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, DomainError) as exc:
        print(f"ucpking {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
