"""Relaxation times for the N=20 edge-cooled chain and the quartic periodic chains, both directions.

Writes one CSV row per (chain, direction) with tau_R in t0 and in seconds.
"""

import argparse
import csv
import math
import sys

from ioncool.baths import DOPPLER_T, EdgeCooling, PeriodicCooling
from ioncool.chain import HarmonicTrap, fit_quartic, solve_equilibrium, spacing_window
from ioncool.dynamics import ChainSystem, relaxation_run
from ioncool.units import build_unit_system


def main(path, exclude):
    u = build_unit_system()
    omega_x = 2 * math.pi * 5.1e6 / u.omega0
    cases = [("harmonic N=20 edge 5", solve_equilibrium(HarmonicTrap(2 * math.pi * 34e3 / u.omega0), 20),
              EdgeCooling(5))]
    for n in (41, 81, 121):
        fit = fit_quartic(n, 1.0, spacing_window(n, exclude))
        cases.append((f"quartic N={n} period 10", fit.equilibrium, PeriodicCooling(10)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "direction", "tau_R_t0", "tau_R_s"])
        for label, eq, cooling in cases:
            for d in ("axial", "transverse"):
                s = ChainSystem.from_equilibrium(eq, d, omega_x if d == "transverse" else None, u.alpha)
                res, _, _ = relaxation_run(s, cooling, T_init=2 * DOPPLER_T)
                w.writerow([label, d, f"{res.tau_R_t0:.6g}", f"{res.tau_R_t0 * u.t0:.4g}"])
                print(f"{label:26s} {d:10s} tau_R = {res.tau_R_t0:10.4g} t0 = {res.tau_R_t0 * u.t0 * 1e3:8.3f} ms")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="relaxation_times.csv")
    p.add_argument("--exclude-per-edge", type=int, default=15)
    a = p.parse_args()
    sys.exit(main(a.out, a.exclude_per_edge))
