"""One test per acceptance criterion; each records a PASS/FAIL line for the terminal summary."""

import math

import numpy as np
import pytest

from ioncool.baths import EdgeCooling, PeriodicCooling, assign_baths, noise_strengths, uniform_baths
from ioncool.chain import UniformTrap, fit_quartic, solve_equilibrium, spacing_window
from ioncool.config import build_equilibrium, load_preset
from ioncool.dynamics import (ChainSystem, T0, evolve_second_moments, ideal_profile, lyapunov_steady_state,
                              noise_power, relaxation_run, solve_steady, steady_state, thermal_profile,
                              upper_bound_limit, upper_bound_profile)
from ioncool.metrics import (efficiency_edge, efficiency_periodic, gate_infidelity_axial,
                             gate_infidelity_transverse, local_phonon_number, sweep_gamma, sweep_size)
from ioncool.oracle import compare_with_closed_form, max_stable_dt, simulate_trajectories
from ioncool.units import phonon_rate_si

from conftest import ACCEPTANCE_LINES, OMEGA_X, T_D, UNITS, system

pytestmark = pytest.mark.acceptance


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def test_criterion_01_units():
    t0_us = UNITS.t0 * 1e6
    ok = abs(UNITS.alpha / 2.0e-3 - 1) <= 0.05 and abs(t0_us / 7.0 - 1) <= 0.05
    record(1, ok, f"alpha={UNITS.alpha:.5g} (2.0e-3 +-5%), t0={t0_us:.4g} us (7 +-5%)")


def test_criterion_02_phonon_rates():
    w34 = 2 * math.pi * 34e3 / UNITS.omega0
    w84 = 2 * math.pi * 8.4e3 / UNITS.omega0
    r34 = phonon_rate_si(UNITS, 1e-4, w34)
    r84 = phonon_rate_si(UNITS, 1e-4, w84)
    ok = abs(r34 - 60) <= 6 and abs(r84 - 240) <= 24
    record(2, ok, f"34 kHz: {r34:.2f}/s (60+-6), 8.4 kHz: {r84:.2f}/s (240+-24)")


def test_criterion_03_phonon_number():
    n = local_phonon_number(1e-6, OMEGA_X, 2.0e-3)
    record(3, abs(n - 8.5) <= 0.2, f"n_i={n:.4f} (8.5+-0.2, alpha=2.0e-3)")


@pytest.fixture(scope="module")
def fig3_eq():
    return build_equilibrium(load_preset("fig3"))[0]


def test_criterion_04_detailed_balance(chain20, fig3_eq):
    worst = {}
    for name, eq in (("N=20", chain20), ("N=121", fig3_eq)):
        for d in ("axial", "transverse"):
            s = system(eq, d)
            for T in (0.5 * T_D, T_D, 10 * T_D, 1000 * T_D):
                baths = uniform_baths(eq.n_ions, 0.1, T)
                prof = solve_steady(s, baths)
                ref = thermal_profile(s.modes, T, s.alpha)
                err = float(np.max(np.abs(prof.xx / ref.xx - 1)))
                key = (name, d)
                worst[key] = max(worst.get(key, 0.0), err)
    ok = all(v < 1e-6 for v in worst.values())
    detail = ", ".join(f"{k[0]} {k[1]} {v:.2e}" for k, v in worst.items())
    record(4, ok, f"max rel err vs coth profile (<1e-6) over T in {{0.5,1,10,1000}} T_D: {detail}")


def test_criterion_05_oracle():
    cfg = load_preset("oracle5")
    eq, _ = build_equilibrium(cfg)
    s = ChainSystem.from_equilibrium(eq, "axial", None, cfg.units.alpha)
    cooling = cfg.cooling.build()
    baths = assign_baths(cooling, cfg.N, cfg.heating.kappa, cfg.heating.T_bg)
    assert len(baths.cooled) == 2 and len(baths.heated) == 3
    theta = noise_strengths(s.modes, baths)
    o = cfg.oracle
    ens = simulate_trajectories(s.A, baths, theta, ideal_profile(s, cooling), o.n_traj,
                                max_stable_dt(s.A.entries, baths.gamma), o.t_end, cfg.seed,
                                average_from=o.average_from, alpha=s.alpha, workers=4)
    rep = compare_with_closed_form(ens, solve_steady(s, baths))
    zmax = float(np.max(np.abs(np.r_[rep.z_xx, rep.z_pp])))
    record(5, zmax < 4, f"N=5, 2 cooled + 3 heated, {o.n_traj} trajectories: max |z|={zmax:.2f} (<4)")


def test_criterion_06_lyapunov(fig3_eq):
    cfg = load_preset("fig3")
    cooling = cfg.cooling.build()
    worst = 0.0
    for d in ("axial", "transverse"):
        s = ChainSystem.from_equilibrium(fig3_eq, d, cfg.omega_x, cfg.units.alpha)
        T_bg = upper_bound_profile(s, cooling, cfg.heating.kappa).meta["T_bg"]
        baths = assign_baths(cooling, cfg.N, cfg.heating.kappa, T_bg)
        theta = noise_strengths(s.modes, baths)
        spec = s.spectrum(baths.gamma)
        a = steady_state(spec, theta, baths.gamma)
        b = lyapunov_steady_state(spec.omega_matrix, noise_power(theta, baths.gamma))
        worst = max(worst, float(np.max(np.abs(a.xx / b.xx - 1))), float(np.max(np.abs(a.pp / b.pp - 1))))
    record(6, worst < 1e-8, f"fig3 harmonic N=121 N_h=21 at converged T_bg: max rel diff {worst:.2e} (<1e-8)")


def test_criterion_07_uniform_edge():
    eq = solve_equilibrium(UniformTrap(1.0), 121)
    s = system(eq, "axial")
    cfg = EdgeCooling(10, 0.1)
    H = assign_baths(cfg, 121).heated
    prof = upper_bound_limit(s, cfg, 1e-4)
    rep = efficiency_edge(prof, ideal_profile(s, cfg), H)
    at61 = float(rep.ratios[60 - H[0]])
    ok = abs(at61 - 1.04) <= 0.02
    record(7, ok, f"uniform N=121, N_h={H.size}: normalized dz at ion 61 = {at61:.4f} (1.04+-0.02), "
                  f"max {rep.max_normalized:.4f} at ion {rep.argmax + 1}")


@pytest.fixture(scope="module")
def quartic10():
    fit = fit_quartic(121, 1.0, spacing_window(121, 10))
    return {d: system(fit.equilibrium, d) for d in ("axial", "transverse")}


def test_criterion_08_periodic(quartic10):
    s = quartic10["transverse"]
    vals = {}
    for P in (10, 24):
        cfg = PeriodicCooling(P, 0.1)
        H = assign_baths(cfg, 121).heated
        vals[P] = efficiency_periodic(upper_bound_limit(s, cfg, 1e-4), ideal_profile(s, cfg), H).max_normalized
    ok = vals[10] <= 1.25 and vals[24] <= 2.0
    record(8, ok, f"transverse max dx/ideal: P=10 {vals[10]:.4f} (<=1.25), P=24 {vals[24]:.4f} (<=2)")


def test_criterion_09_gamma_sweep(quartic10):
    grid = np.geomspace(1e-3, 1e3, 13)
    cfg = PeriodicCooling(10)
    ax = sweep_gamma(quartic10["axial"], cfg, grid, workers=4)
    tr = sweep_gamma(quartic10["transverse"], cfg, grid, workers=4)
    e = dict(zip(np.round(np.log10(ax.values), 6), (r.max_normalized for r in ax.reports)))
    mid = [e[-1.0], e[0.0], e[1.0]]
    u_ok = max(mid) < min(e[-3.0], e[3.0])
    opt = tr.metadata["argmin"]
    ok = u_ok and 0.02 <= opt <= 0.05
    record(9, ok, f"axial at 0.1/1/10: {mid[0]:.5f}/{mid[1]:.5f}/{mid[2]:.5f} vs 1e-3 {e[-3.0]:.5f}, "
                  f"1e3 {e[3.0]:.5f}; transverse optimum gamma={opt:.4g} in [0.02,0.05] (13-point grid)")


def test_criterion_10_relaxation(chain20, quartic10):
    tau = {}
    for d in ("axial", "transverse"):
        res, _, _ = relaxation_run(system(chain20, d), EdgeCooling(5), T_init=2 * T_D)
        tau[("N20", d)] = res.tau_R_t0
        res, _, _ = relaxation_run(quartic10[d], PeriodicCooling(10), T_init=2 * T_D)
        tau[("N121", d)] = res.tau_R_t0
    a20, t20 = tau[("N20", "axial")], tau[("N20", "transverse")]
    a121, t121 = tau[("N121", "axial")], tau[("N121", "transverse")]
    ratio = t121 / a121
    checks = [3e4 <= a20 <= 3e5, 3e5 <= t20 <= 3e6, max(a121, t121) <= 1e4, 3 <= ratio <= 30]
    record(10, all(checks), f"N=20 axial {a20:.4g} t0 [3e4,3e5] {'ok' if checks[0] else 'out'}, "
                            f"transverse {t20:.4g} t0 [3e5,3e6] {'ok' if checks[1] else 'out'}; "
                            f"N=121 axial {a121:.4g}, transverse {t121:.4g} t0 (<=1e4), ratio {ratio:.3g} [3,30]")


def test_criterion_11_size_scaling():
    sizes = [41, 81, 121]
    tr = sweep_size(sizes, 10, direction="transverse", omega_x=OMEGA_X, alpha=UNITS.alpha, T_init=2 * T_D,
                    workers=3)
    ax = sweep_size(sizes, 10, direction="axial", alpha=UNITS.alpha, T_init=2 * T_D, workers=3)
    t = [r.tau_R_t0 for r in tr.reports]
    a = [r.tau_R_t0 for r in ax.reports]
    spread = max(t) / min(t) - 1
    mono = all(y <= x for x, y in zip(a, a[1:]))
    record(11, spread < 0.2 and mono and len(t) == 3 == len(a),
           f"transverse tau_R {', '.join(f'{v:.4g}' for v in t)} t0, variation {spread:.1%} (<20%); "
           f"axial {', '.join(f'{v:.4g}' for v in a)} t0 non-increasing: {mono}")


def test_criterion_12_properties(chain20):
    notes, ok = [], True
    u = np.array([1e-4, 3e-3, 0.05])
    q = bool(np.all(gate_infidelity_transverse(2 * u, 157) == 16 * gate_infidelity_transverse(u, 157))
             and np.all(gate_infidelity_axial(2 * u, 1.5) == 16 * gate_infidelity_axial(u, 1.5)))
    ok &= q
    notes.append(f"quartic scaling exact: {q}")

    s = system(chain20, "axial")
    cfg = EdgeCooling(5)
    profs = [solve_steady(s, assign_baths(cfg, 20, k, 10 * T_D)).xx for k in (0.0, 1e-5, 1e-4, 1e-3)]
    mono = all(np.all(b >= a) for a, b in zip(profs, profs[1:]))
    ok &= mono
    notes.append(f"kappa monotone: {mono}")

    res, _, steady = relaxation_run(s, cfg, T_init=2 * T_D)
    baths = assign_baths(cfg, 20)
    theta = noise_strengths(s.modes, baths)
    spec = s.spectrum(baths.gamma)
    t = np.array([5 * res.tau_R])
    ends = [evolve_second_moments(spec, theta, baths.gamma, thermal_profile(s.modes, T, s.alpha), t,
                                  with_momenta=False).xx[-1] for T in (2 * T_D, 20 * T_D, 0.1 * T_D)]
    dev = max(float(np.max(np.abs(e / steady.xx - 1))) for e in ends)
    spread = max(float(np.max(np.abs(e / ends[0] - 1))) for e in ends[1:])
    ic = spread < 5e-3
    ok &= ic
    notes.append(f"initial-condition spread at 5 tau_R {spread:.2e} (<5e-3; {dev:.2e} from steady)")

    A = np.array([[4.0]])
    b1 = uniform_baths(1, 1.0, 1.0)
    runs = [simulate_trajectories(A, b1, np.ones(1), None, 300, 0.01, 2.0, 11, workers=w).xx[0] for w in (1, 2)]
    det = runs[0] == runs[1] == simulate_trajectories(A, b1, np.ones(1), None, 300, 0.01, 2.0, 11).xx[0]
    ok &= det
    notes.append(f"oracle seed determinism: {det}")

    rec = max(system(chain20, d).spectrum(g).reconstruction_error()
              for d in ("axial", "transverse") for g in (np.full(20, 0.1), assign_baths(cfg, 20).gamma))
    ok &= rec < 1e-8
    notes.append(f"reconstruction residual {rec:.2e} (<1e-8)")
    record(12, ok, "; ".join(notes))
