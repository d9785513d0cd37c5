"""Command-line entry point: ``ioncool {equilibrium,steady,evolve,sweep,oracle}``.

Exit codes: 0 success, 2 configuration error, 3 numerical error, 4 oracle
validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baths import assign_baths, noise_strengths
from .chain import compute_d0
from .config import (PRESETS, RunConfig, build_equilibrium, load_config, load_preset, with_overrides)
from .dynamics import T0, ChainSystem, MomentProfile, ideal_profile, relaxation_run, solve_steady
from .errors import ConfigError, IonCoolError, InvalidInputError
from .metrics import (efficiency, gate_infidelity_axial, gate_infidelity_transverse, heated_profile,
                      local_phonon_number, sweep_background, sweep_gamma, sweep_heated_count, sweep_period,
                      sweep_size)
from .oracle import compare_with_closed_form, max_stable_dt, simulate_trajectories
from .units import CONSTANTS

log = logging.getLogger("ioncool")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORACLE = 0, 2, 3, 4


def _dump(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if hasattr(v, "__dataclass_fields__"):
        from dataclasses import asdict
        return {"type": type(v).__name__, **asdict(v)}
    raise TypeError(f"not serialisable: {type(v).__name__}")


def write_snapshot(out: Path, cfg: RunConfig, command: str):
    u = cfg.units
    _dump(out / "config_snapshot.json", {
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "constants": {**CONSTANTS, "omega0": u.omega0, "t0": u.t0, "alpha": u.alpha, "temp_unit_K": u.temp_unit},
    })


def _system(cfg: RunConfig, eq, direction) -> ChainSystem:
    return ChainSystem.from_equilibrium(eq, direction, cfg.omega_x if direction == "transverse" else None,
                                        cfg.units.alpha)


def _finite_T_bg(cfg: RunConfig, what: str):
    """Background temperature for runs that need a finite one (``None`` without heating)."""
    if cfg.heating.kappa == 0:
        return None
    if isinstance(cfg.heating.T_bg, str):
        raise ConfigError(f"heating.T_bg: {what} needs a finite background temperature with kappa > 0")
    return cfg.heating.T_bg


# --- commands -----------------------------------------------------------------


def cmd_equilibrium(cfg: RunConfig, out: Path):
    eq, fit = build_equilibrium(cfg)
    out.mkdir(parents=True, exist_ok=True)
    eq.to_csv(out / "equilibrium.csv")
    summary = {"N": eq.n_ions, "residual": eq.residual, "iterations": eq.iterations,
               "trap": {"type": type(eq.trap).__name__, **{k: getattr(eq.trap, k) for k in eq.trap.__dataclass_fields__}}}
    if eq.n_ions >= 2:
        summary["d0"] = compute_d0(eq)
        summary["min_spacing"] = float(eq.spacings.min())
    if fit is not None:
        summary["fit"] = {"shape_ratio": fit.shape_ratio, "relative_spread": fit.relative_spread,
                          "window": list(fit.window), "evaluations": fit.evaluations}
    _dump(out / "summary.json", summary)
    return EXIT_OK


STEADY_COLUMNS = ["ion", "z0", "delta_x", "delta_z", "delta_x_ideal", "delta_z_ideal"]


def cmd_steady(cfg: RunConfig, out: Path):
    eq, _ = build_equilibrium(cfg)
    cooling = cfg.cooling.build()
    n = eq.n_ions
    cols = {}
    summary = {"kappa": cfg.heating.kappa, "T_bg": cfg.heating.T_bg, "directions": {}}
    for d in cfg.directions:
        system = _system(cfg, eq, d)
        ideal = ideal_profile(system, cooling)
        prof = heated_profile(system, cooling, cfg.heating.kappa, cfg.heating.T_bg)
        key = "x" if d == "transverse" else "z"
        cols[f"delta_{key}"] = prof.delta
        cols[f"delta_{key}_ideal"] = ideal.delta
        H = assign_baths(cooling, n).heated
        rep = efficiency(prof, ideal, H if H.size else np.arange(n), cooling)
        info = {"max_normalized": rep.max_normalized, "mean_normalized": rep.mean_normalized,
                "argmax_ion": rep.argmax + 1, "T_bg_used": prof.meta.get("T_bg", cfg.heating.T_bg)}
        if d == "transverse":
            cols["n_x"] = local_phonon_number(prof.xx, cfg.omega_x, system.alpha)
            if cfg.dk_d0:
                cols["infidelity_x"] = gate_infidelity_transverse(prof.delta, cfg.dk_d0)
                info["max_infidelity"] = float(cols["infidelity_x"].max())
        elif cfg.beam_waist:
            cols["infidelity_z"] = gate_infidelity_axial(prof.delta, cfg.beam_waist)
            info["max_infidelity"] = float(cols["infidelity_z"].max())
        summary["directions"][d] = info
    out.mkdir(parents=True, exist_ok=True)
    extra = [c for c in ("n_x", "infidelity_x", "infidelity_z") if c in cols]
    with open(out / "profile.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STEADY_COLUMNS + extra)
        for i in range(n):
            row = [i + 1, repr(float(eq.positions[i]))]
            for c in STEADY_COLUMNS[2:] + extra:
                row.append(repr(float(cols[c][i])) if c in cols else "")
            w.writerow(row)
    _dump(out / "summary.json", summary)
    return EXIT_OK


def cmd_evolve(cfg: RunConfig, out: Path):
    eq, _ = build_equilibrium(cfg)
    cooling = cfg.cooling.build()
    T_bg = _finite_T_bg(cfg, "evolve")
    ev = cfg.evolve
    results = {}
    u = cfg.units
    for d in cfg.directions:
        system = _system(cfg, eq, d)
        res, series, steady = relaxation_run(
            system, cooling, kappa=cfg.heating.kappa, T_bg=T_bg, T_init=ev.T_init, criterion=ev.criterion,
            window=ev.window * T0, t_max=None if ev.t_max is None else ev.t_max * T0, n_log=ev.n_log,
            samples=ev.samples, seed=cfg.seed)
        results[d] = (res, series)
    out.mkdir(parents=True, exist_ok=True)
    doc = {}
    for d, (res, series) in results.items():
        series.to_csv(out / f"series_{d}.csv")
        res.to_csv(out / f"coarse_{d}.csv")
        doc[d] = {"tau_R_t0": res.tau_R_t0, "tau_R_seconds": u.time_to_si(res.tau_R),
                  "per_ion_t0": (np.asarray(res.per_ion) / T0).tolist(), "criterion": res.criterion,
                  "flags": series.flags}
    _dump(out / "relaxation.json", doc)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path):
    if cfg.sweep is None:
        raise ConfigError("sweep: section required for the sweep command")
    axis, values = cfg.sweep.axis, cfg.sweep.values
    h, c = cfg.heating, cfg.cooling
    results = {}
    if axis == "N":
        if c.kind != "periodic" or cfg.trap.kind != "quartic_fit":
            raise ConfigError("sweep over N needs periodic cooling and a quartic_fit trap")
        ev = cfg.evolve
        for d in cfg.directions:
            results[d] = sweep_size(values, c.period, direction=d, omega_x=cfg.omega_x, alpha=cfg.units.alpha,
                                    kappa=h.kappa, T_bg=_finite_T_bg(cfg, "a size sweep"), gamma=c.gamma,
                                    exclude_per_edge=cfg.trap.exclude_per_edge, workers=cfg.threads,
                                    criterion=ev.criterion, window=ev.window * T0,
                                    t_max=None if ev.t_max is None else ev.t_max * T0, n_log=ev.n_log,
                                    samples=ev.samples, seed=cfg.seed, T_init=ev.T_init)
    else:
        eq, _ = build_equilibrium(cfg)
        for d in cfg.directions:
            system = _system(cfg, eq, d)
            if axis == "gamma":
                r = sweep_gamma(system, c.build(), values, kappa=h.kappa, T_bg=h.T_bg, workers=cfg.threads)
            elif axis == "period":
                r = sweep_period(system, values, gamma=c.gamma, kappa=h.kappa, T_bg=h.T_bg, T_cool=c.T_cool,
                                 workers=cfg.threads)
            elif axis == "N_h":
                r = sweep_heated_count(system, values, gamma=c.gamma, kappa=h.kappa, T_bg=h.T_bg, T_cool=c.T_cool,
                                       workers=cfg.threads)
            else:
                if h.kappa <= 0:
                    raise ConfigError("sweep over T_bg needs kappa > 0")
                r = sweep_background(system, c.build(), values, kappa=h.kappa, workers=cfg.threads)
            results[d] = r
    out.mkdir(parents=True, exist_ok=True)
    for d, r in results.items():
        r.metadata["config_file"] = "config_snapshot.json"
        r.to_csv(out / f"sweep_{d}.csv")
        r.to_json(out / f"sweep_{d}.json")
        for f in r.flags:
            log.warning("%s: %s", d, f)
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out: Path):
    if cfg.N > 10:
        raise ConfigError("oracle runs are limited to N <= 10")
    eq, _ = build_equilibrium(cfg)
    cooling = cfg.cooling.build()
    T_bg = _finite_T_bg(cfg, "the oracle")
    o = cfg.oracle
    reports = {}
    for d in cfg.directions:
        system = _system(cfg, eq, d)
        baths = assign_baths(cooling, eq.n_ions, cfg.heating.kappa, T_bg)
        theta = noise_strengths(system.modes, baths)
        steady = solve_steady(system, baths)
        dt = o.dt or max_stable_dt(system.A.entries, baths.gamma)
        init = ideal_profile(system, cooling)
        ens = simulate_trajectories(system.A, baths, theta, init, o.n_traj, dt, o.t_end, cfg.seed,
                                    average_from=o.average_from, alpha=system.alpha, workers=cfg.threads)
        ref = steady
        if o.perturb:
            ref = MomentProfile(steady.xx * (1 + o.perturb), steady.pp * (1 + o.perturb), steady.alpha, steady.time,
                                steady.direction)
        rep = compare_with_closed_form(ens, ref)
        rep.meta.update(direction=d, perturb=o.perturb, t_end=o.t_end, average_from=o.average_from)
        reports[d] = (rep, ens)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for d, (rep, ens) in reports.items():
        rep.to_json(out / f"oracle_{d}.json")
        ok &= rep.passed
        log.info("%s: max |z| = %.2f, passed = %s", d, rep.max_abs_z, rep.passed)
    return EXIT_OK if ok else EXIT_ORACLE


COMMANDS = {"equilibrium": cmd_equilibrium, "steady": cmd_steady, "evolve": cmd_evolve, "sweep": cmd_sweep,
            "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ioncool", description="Sympathetic cooling of linear ion chains.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="YAML config (or a run's config_snapshot.json)")
        src.add_argument("--preset", choices=PRESETS, help="bundled figure scenario")
        s.add_argument("--out", type=Path, default=None, help="output directory (default runs/<command>)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_preset(args.preset) if args.preset else load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = with_overrides(cfg, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path("runs") / args.command
    try:
        code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IonCoolError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    write_snapshot(out, cfg, args.command)
    if code == EXIT_ORACLE:
        print("oracle comparison failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
