"""Acceptance criteria 1-9, one PASS/FAIL line each (see the terminal summary)."""
import math
import time
import xml.etree.ElementTree as ET

import numpy as np

from ucpking import space_charge
from ucpking.avalanche import (
    Regime,
    RydbergSample,
    classify_regime,
    efficiency_vs_density,
    simulate_avalanche,
)
from ucpking.cli import main
from ucpking.core import CONSTANTS, GaussianIonCloud
from ucpking.extraction import escape_binding_cut, fit_threshold, sample_binding, simulate_sweep
from ucpking.king import (
    SERIES_LEADING,
    SolverOptions,
    reduced_density,
    reduced_density_quadrature,
    solve_selfconsistent,
    temperature_scan,
    thermalization_time,
    trap_depth_estimate,
)
from ucpking.report import read_csv
from ucpking.space_charge import invert_threshold, threshold_field, threshold_voltage

ETAS = [4.0, 6.0, 8.0, 10.0, 12.0]


def test_criterion_1_threshold_coefficient(acceptance):
    space_charge.threshold_coefficient.cache_clear()
    t0 = time.perf_counter()
    coeff, x_star = space_charge.threshold_coefficient()
    dt = time.perf_counter() - t0
    acceptance(1, "field-maximum coefficient", {
        "coefficient 2.38 +- 0.01": (abs(coeff - 2.38) <= 0.01, f"{coeff:.6f}"),
        "r* 1.36 +- 0.02 sigma": (abs(x_star - 1.36) <= 0.02, f"{x_star:.6f}"),
        "runtime < 1 s": (dt < 1.0, f"{dt:.3f} s"),
    })


def test_criterion_2_king_density(acceptance):
    grid = np.linspace(0.0, 20.0, 401)
    rel = max(
        abs(reduced_density(x) - reduced_density_quadrature(x)) / reduced_density_quadrature(x)
        for x in grid[1:]
    )
    zero_ok = reduced_density(0.0) == 0.0 == reduced_density_quadrature(0.0)
    small = np.logspace(-8, -2, 25)
    # next term of the series is (4/7) eta_t relative to the leading one
    dev = np.abs(reduced_density(small) / small**2.5 / SERIES_LEADING - 1.0) / small
    acceptance(2, "King density closed form", {
        "quadrature rel 1e-8 on [0, 20]": (rel < 1e-8 and zero_ok, f"max rel {rel:.2e}"),
        "rho/eta^2.5 -> 8/(15 sqrt pi) for eta <= 1e-2": (
            bool(np.all(dev <= 1.0)), f"max |ratio-1|/eta {dev.max():.3f}"),
    })


def test_criterion_3_selfconsistent_solve(acceptance):
    cloud = GaussianIonCloud(4e5, 250e-6)
    t0 = time.perf_counter()
    sol = solve_selfconsistent(cloud, 3.8e5, 10.0)
    dt = time.perf_counter() - t0
    r = sol.radii
    n_direct = np.trapezoid(4 * np.pi * r * r * sol.electron_density(), r)
    charge = abs(n_direct - 3.8e5) / 3.8e5
    s = sol.s
    tail = (s >= 5.0) & (s <= s[-1])
    slope = np.polyfit(np.log(s[tail]), np.log(sol.eta_profile[tail]), 1)[0]
    fine = solve_selfconsistent(cloud, 3.8e5, 10.0, SolverOptions(n_points=2 * len(s) - 1))
    shift = abs(fine.T_e - sol.T_e) / sol.T_e
    acceptance(3, "self-consistent solve", {
        "Poisson residual < 1e-6": (sol.poisson_residual < 1e-6, f"{sol.poisson_residual:.2e}"),
        "charge bookkeeping 0.1%": (charge < 1e-3, f"{charge:.2e}"),
        "Coulomb tail exponent -1 within 5% (5-50 sigma)": (abs(slope + 1.0) <= 0.05, f"slope {slope:.4f}"),
        "grid halving moves T_e < 0.1%": (shift < 1e-3, f"{shift:.2e}"),
        "runtime < 10 s": (dt < 10.0, f"{dt:.2f} s"),
    })


def test_criterion_4_trap_depth_relation(acceptance):
    checks = {}
    cloud = GaussianIonCloud(4e5, 250e-6)
    for q in (0.02, 0.05, 0.2, 0.5):
        ne = (1 - q) * cloud.ion_count
        depth = trap_depth_estimate(cloud.ion_count, ne, cloud.sigma)
        pts = temperature_scan(cloud, ne, ETAS)
        ratios = [p.eta * CONSTANTS.boltzmann * p.T_e / depth for p in pts]
        products = [p.eta * p.T_e for p in pts]
        spread = max(products) / min(products)
        checks[f"dN/N_i={q}: eta kT / D within x2"] = (
            all(0.5 <= x <= 2.0 for x in ratios), "ratios " + ",".join(f"{x:.2f}" for x in ratios))
        checks[f"dN/N_i={q}: eta T_e spread < 2"] = (spread < 2.0, f"{spread:.2f}")
    acceptance(4, "trap-depth relation", checks)


def test_criterion_5_worked_numbers(acceptance):
    v = threshold_voltage(GaussianIonCloud(4e5, 250e-6), 1.57e-3)
    T = trap_depth_estimate(4e5 + 1e4, 4e5, 250e-6) / (10 * CONSTANTS.boltzmann)
    tau = thermalization_time(1e15, 50.0)
    acceptance(5, "worked numbers", {
        "V_th ~ 3.1 V": (round(v, 1) == 3.1, f"{v:.4f} V"),
        "T_e ~ 53 K": (round(T) == 53, f"{T:.2f} K"),
        "tau_ee in 10-100 ns": (10e-9 <= tau <= 100e-9, f"{tau * 1e9:.1f} ns"),
    })


def test_criterion_6_sweep_closed_loop(acceptance):
    cloud = GaussianIonCloud(4e5, 250e-6)
    ne = 3.8e5
    truth = solve_selfconsistent(cloud, ne, 10.0)
    E_th = threshold_field(cloud)
    curve = simulate_sweep(truth, np.linspace(0.0, 1.5 * E_th, 151))
    fit = fit_threshold(curve)
    inferred = invert_threshold(fit.field, cloud.sigma)
    dn_true = cloud.ion_count - ne
    dn = inferred.ion_count - fit.plateau
    checks = {
        "N_i within 5%": (abs(inferred.ion_count / cloud.ion_count - 1) <= 0.05,
                          f"{inferred.ion_count:.5g} vs {cloud.ion_count:.5g}"),
        "delta N within 10%": (dn > 0 and abs(dn / dn_true - 1) <= 0.10, f"{dn:.5g} vs {dn_true:.5g}"),
    }
    if dn > 0:
        got = temperature_scan(inferred, fit.plateau, ETAS)
        ref = temperature_scan(cloud, ne, ETAS)
        errs = [abs(g.T_e / r.T_e - 1) for g, r in zip(got, ref)]
        checks["T_e(eta) within 15%"] = (
            all(e <= 0.15 for e in errs), "rel err " + ",".join(f"{e:.2f}" for e in errs))
    else:
        checks["T_e(eta) within 15%"] = (False, "no trap inferred")
    # Monte-Carlo oracle of the escape fractions
    b = sample_binding(truth, 1_000_000, np.random.default_rng(2024))
    worst = 0.0
    for x in (0.1, 0.25, 0.5, 0.75, 0.9):
        frac, cut = escape_binding_cut(truth, x * E_th)
        p = float(np.mean(b <= cut))
        sd = math.sqrt(max(frac * (1 - frac), 1e-12) / b.size)
        worst = max(worst, abs(p - frac) / sd)
    checks["escape fractions vs 1e6-sample Monte Carlo within 3 sigma"] = (worst <= 3.0, f"max {worst:.2f} sigma")
    acceptance(6, "sweep closed loop", checks)


def test_criterion_7_avalanche(acceptance):
    s = RydbergSample(30, 1e5)
    energies = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0]
    eff = [e for _, e in efficiency_vs_density(s, energies, 1e-6)]
    times = [0.1e-6, 0.5e-6, 1e-6, 5e-6, 10e-6, 20e-6]
    eff_t = [simulate_avalanche(s, 4e5, t).efficiency for t in times]
    inv = [simulate_avalanche(RydbergSample(30, n), 4e5, 1e-6).efficiency for n in (1.0, 1e3, 1e5, 1e7)]
    traj = simulate_avalanche(s, 4e5, 10e-6)
    book = np.max(np.abs(np.diff(traj.free_electrons) + np.diff(traj.rydberg_count)))
    full = simulate_avalanche(s, 4e5, 10e-6).efficiency
    n0 = GaussianIonCloud(4e5, 250e-6).peak_density
    acceptance(7, "avalanche properties", {
        "monotone in plasma density": (all(b >= a for a, b in zip(eff, eff[1:])), ",".join(f"{e:.1f}" for e in eff)),
        "monotone in interaction time": (all(b >= a for a, b in zip(eff_t, eff_t[1:])), ",".join(f"{e:.1f}" for e in eff_t)),
        "invariant under Rydberg count": (max(inv) - min(inv) <= 1e-9, f"spread {max(inv) - min(inv):.1e}"),
        "electron bookkeeping": (book <= 1e-9 * s.atom_count, f"max mismatch {book:.1e}"),
        "30d >= 99% by 10 us at 1.6e9 cm^-3": (full >= 99.0 and abs(n0 / 1.6e15 - 1) < 0.02,
                                                f"{full:.3f}% at n_i0 {n0 * 1e-6:.3g} cm^-3"),
    })


def test_criterion_8_regime(acceptance):
    r19 = classify_regime(RydbergSample(19, 1), 50.0, 3.0)
    r70 = classify_regime(RydbergSample(70, 1), 50.0, 3.0)
    s = RydbergSample(30, 1)
    tie = classify_regime(s, s.binding_energy / (3.0 * CONSTANTS.boltzmann), 3.0)
    acceptance(8, "regime classifier", {
        "19d at 50 K superelastic": (r19.regime is Regime.SUPERELASTIC_HEATING, f"ratio {r19.ratio:.3f}"),
        "n=70 at 50 K ionizing": (r70.regime is Regime.IONIZING_COOLING, f"ratio {r70.ratio:.3f}"),
        "tie -> superelastic, ratio 1": (
            tie.regime is Regime.SUPERELASTIC_HEATING and abs(tie.ratio - 1) < 1e-12, f"ratio {tie.ratio!r}"),
    })


def _svg_ok(path):
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError:
        return False
    return root.tag.endswith("svg") and len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 1


def test_criterion_9_cli_contract(acceptance, tmp_path, capsys):
    out = tmp_path
    codes = {
        "threshold ok -> 0": (main(["threshold", "--ni", "4e5", "--sigma-um", "250", "--out", str(out)]), 0),
        "missing sigma -> 2": (main(["threshold", "--ni", "4e5"]), 2),
        "sweep ok -> 0": (main(["sweep", "--ni", "4e5", "--ne", "3.8e5", "--sigma-um", "250",
                                "--n-points", "31", "--out", str(out)]), 0),
        "infer ok -> 0": (main(["infer", "--sweep", str(out / "sweep.csv"), "--sigma-um", "250",
                                "--etas", "4,8,12", "--out", str(out)]), 0),
        "avalanche ok -> 0": (main(["avalanche", "--out", str(out)]), 0),
        "solve ok -> 0": (main(["solve", "--ni", "4e5", "--ne", "3.8e5", "--sigma-um", "250", "--out", str(out)]), 0),
    }
    (out / "empty.csv").write_text("")
    codes["empty sweep -> 3"] = (main(["infer", "--sweep", str(out / "empty.csv"), "--sigma-um", "250"]), 3)
    codes["no trap -> 4"] = (main(["solve", "--ni", "4e5", "--ne", "5e5", "--sigma-um", "250"]), 4)
    codes["bad quantum number -> 4"] = (main(["avalanche", "--n", "5", "--out", str(out)]), 4)
    capsys.readouterr()

    csvs = ["field_profile.csv", "sweep.csv", "inference.csv", "efficiency.csv", "trajectory.csv", "king_profile.csv"]
    reread = []
    for name in csvs:
        h1, rows1 = read_csv(out / name)
        text = (out / name).read_text()
        # re-emit and re-read: the table must be unchanged
        from ucpking.report import write_csv
        write_csv(out / ("again_" + name), h1, rows1)
        h2, rows2 = read_csv(out / ("again_" + name))
        reread.append(h1 == h2 and rows1 == rows2 and (out / ("again_" + name)).read_text() == text)
    svgs = [_svg_ok(out / n) for n in ("sweep.svg", "efficiency.svg")]
    acceptance(9, "CLI contract", {
        "exit codes": (all(got == want for got, want in codes.values()),
                       ", ".join(f"{k}: {got}" for k, (got, _) in codes.items())),
        "CSV re-ingest identical": (all(reread), f"{sum(reread)}/{len(reread)} files"),
        "SVG well-formed": (all(svgs), f"{sum(svgs)}/{len(svgs)} files"),
    })
