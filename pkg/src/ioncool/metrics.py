"""Gate infidelities, phonon numbers, cooling-efficiency statistics and sweeps."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .baths import EdgeCooling, PeriodicCooling, assign_baths
from .chain import fit_quartic, middle_index, spacing_window
from .dynamics import (ChainSystem, MomentProfile, RelaxationResult, ideal_profile, relaxation_run, solve_steady,
                       upper_bound_limit, upper_bound_profile)
from .errors import ConvergenceError, InvalidInputError, NoSteadyStateError, NotRelaxedError


def local_phonon_number(xx, omega_x: float, alpha: float, pp=None):
    """Local phonon number of an ion from its position (and optionally momentum) variance.

    ``xx`` and ``pp`` are in d0 units (already multiplied by ``alpha**2``).
    Without ``pp`` the virial approximation ``xx * omega_x / alpha**2 - 1/2``
    is returned.
    """
    xx = np.asarray(xx, dtype=float)
    if np.any(xx < 0):
        raise InvalidInputError("position variance must be non-negative")
    a2 = alpha**2
    if pp is None:
        n = omega_x * xx / a2 - 0.5
    else:
        n = 0.5 * (omega_x * xx + np.asarray(pp, dtype=float) / omega_x) / a2 - 0.5
    return n[()] if n.ndim == 0 else n


def gate_infidelity_transverse(delta_x, dk_d0: float):
    """``pi^2 eta^4 / 4`` with Lamb-Dicke parameter ``eta = |dk| delta_x``."""
    if not dk_d0 > 0:
        raise InvalidInputError("|dk| d0 must be positive")
    delta_x = np.asarray(delta_x, dtype=float)
    if np.any(delta_x < 0):
        raise InvalidInputError("fluctuation must be non-negative")
    out = math.pi**2 * (dk_d0 * delta_x) ** 4 / 4
    return out[()] if out.ndim == 0 else out


def gate_infidelity_axial(delta_z, beam_waist: float):
    """``pi^2 (delta_z / w)^4 / 2`` for a Gaussian beam of waist ``w``."""
    if not beam_waist > 0:
        raise InvalidInputError("beam waist must be positive")
    delta_z = np.asarray(delta_z, dtype=float)
    if np.any(delta_z < 0):
        raise InvalidInputError("fluctuation must be non-negative")
    out = math.pi**2 * (delta_z / beam_waist) ** 4 / 2
    return out[()] if out.ndim == 0 else out


# --- efficiency ---------------------------------------------------------------


@dataclass
class EfficiencyReport:
    max_normalized: float
    mean_normalized: float
    direction: str
    argmax: int  # 0-based ion index of the maximum
    reference: str  # "middle" (edge metric) or "per-ion" (periodic metric)
    ratios: np.ndarray = field(repr=False, default=None)

    def as_row(self) -> dict:
        return {"max_normalized": self.max_normalized, "mean_normalized": self.mean_normalized,
                "argmax_ion": self.argmax + 1}


def _check_pair(profile: MomentProfile, ideal: MomentProfile, H):
    if len(profile.xx) != len(ideal.xx):
        raise InvalidInputError("profile and ideal refer to different chain sizes")
    if profile.direction != ideal.direction:
        raise InvalidInputError("profile and ideal refer to different directions")
    H = np.asarray(H, dtype=int)
    if H.size == 0:
        raise InvalidInputError("heated set H is empty")
    if H.min() < 0 or H.max() >= len(profile.xx):
        raise InvalidInputError("heated index out of range")
    return H


def efficiency_edge(profile: MomentProfile, ideal: MomentProfile, H) -> EfficiencyReport:
    """Largest fluctuation over ``H`` relative to the ideal middle-ion fluctuation."""
    H = _check_pair(profile, ideal, H)
    d, d0 = profile.delta, ideal.delta
    k = H[int(np.argmax(d[H]))]
    ratios = d[H] / d0[middle_index(len(d))]
    return EfficiencyReport(float(d[k] / d0[middle_index(len(d))]), float(np.mean(d[H] / d0[H])),
                            profile.direction, int(k), "middle", ratios)


def efficiency_periodic(profile: MomentProfile, ideal: MomentProfile, H) -> EfficiencyReport:
    """Mean (and max) over ``H`` of the per-ion ratio to the ideal fluctuation."""
    H = _check_pair(profile, ideal, H)
    ratios = profile.delta[H] / ideal.delta[H]
    j = int(np.argmax(ratios))
    return EfficiencyReport(float(ratios[j]), float(np.mean(ratios)), profile.direction, int(H[j]), "per-ion",
                            ratios)


def efficiency(profile, ideal, H, config) -> EfficiencyReport:
    if isinstance(config, EdgeCooling):
        return efficiency_edge(profile, ideal, H)
    return efficiency_periodic(profile, ideal, H)


def heated_profile(system: ChainSystem, config, kappa: float, T_bg="limit") -> MomentProfile:
    """Steady state with background heating.

    ``T_bg`` is a temperature, ``"limit"`` for the ``T_bg -> inf`` bound at
    fixed ``kappa`` or ``"escalate"`` for doubling until converged.
    """
    if T_bg == "limit":
        return upper_bound_limit(system, config, kappa)
    if T_bg == "escalate":
        return upper_bound_profile(system, config, kappa)
    return solve_steady(system, assign_baths(config, system.n_ions, kappa, float(T_bg)))


# --- sweeps -------------------------------------------------------------------


def _plain(v):
    if is_dataclass(v):
        return {"type": type(v).__name__, **{k: _plain(x) for k, x in asdict(v).items()}}
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: list
    metadata: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.values) != len(self.reports):
            raise InvalidInputError("a sweep needs one report per axis value")

    def rows(self) -> list[dict]:
        out = []
        for v, r in zip(self.values, self.reports):
            if isinstance(r, RelaxationResult):
                row = {"tau_R": r.tau_R, "tau_R_t0": r.tau_R_t0}
            elif isinstance(r, dict):
                row = dict(r)
            else:
                row = r.as_row()
            out.append({self.axis: v, **row})
        return out

    def argmin(self, key: str = "mean_normalized"):
        """Axis value minimising ``key``."""
        rows = self.rows()
        return rows[int(np.argmin([r[key] for r in rows]))][self.axis]

    def to_csv(self, path):
        rows = self.rows()
        cols = list(rows[0]) if rows else [self.axis]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})

    def to_json(self, path):
        doc = {"axis": self.axis, "rows": _plain(self.rows()), "metadata": _plain(self.metadata),
               "flags": list(self.flags)}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _guarded(fn, items, workers, flags):
    """Run ``fn`` per item; numerical failures drop the point and leave a flag."""

    def safe(x):
        try:
            return fn(x)
        except (NoSteadyStateError, ConvergenceError, NotRelaxedError) as exc:
            return exc

    out = _map(safe, items, workers)
    kept, reports = [], []
    for x, r in zip(items, out):
        if isinstance(r, Exception):
            flags.append(f"point {x} dropped: {type(r).__name__}: {r}")
        else:
            kept.append(x)
            reports.append(r)
    return kept, reports


def sweep_gamma(system: ChainSystem, config, gamma_grid, *, kappa: float = 1e-4, T_bg="limit",
                workers: int = 1) -> SweepResult:
    """Steady-state efficiency as a function of the cooling rate ``gamma``.

    The coupling matrix and its normal modes are shared across points; only
    the drift matrix changes.
    """
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.size == 0:
        raise InvalidInputError("empty gamma grid")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("gamma grid must be positive and ascending")

    def point(g):
        cfg = type(config)(**{**asdict(config), "gamma_cool": float(g)})
        ideal = ideal_profile(system, cfg)
        prof = heated_profile(system, cfg, kappa, T_bg)
        H = assign_baths(cfg, system.n_ions).heated
        return efficiency(prof, ideal, H, cfg)

    flags = []
    kept, reports = _guarded(point, grid.tolist(), workers, flags)
    res = SweepResult("gamma", kept, reports,
                      {"config": config, "kappa": kappa, "T_bg": T_bg, "direction": system.direction}, flags)
    if reports:
        res.metadata["argmin"] = res.argmin("mean_normalized")
    return res


def sweep_period(system: ChainSystem, periods, *, gamma: float = 0.1, kappa: float = 1e-4, T_bg="limit",
                 T_cool: float | None = None, workers: int = 1) -> SweepResult:
    """Periodic-node efficiency per period; periods that do not divide ``N - 1`` are skipped."""
    periods = list(periods)
    if not periods:
        raise InvalidInputError("empty period grid")
    n = system.n_ions
    kw = {} if T_cool is None else {"T_cool": T_cool}
    valid, flags = [], []
    for p in periods:
        if p < 1 or (n - 1) % p:
            flags.append(f"period {p} skipped: does not divide N-1={n - 1}")
        else:
            valid.append(int(p))

    def point(p):
        cfg = PeriodicCooling(p, gamma, **kw)
        ideal = ideal_profile(system, cfg)
        prof = heated_profile(system, cfg, kappa, T_bg)
        H = assign_baths(cfg, n).heated
        # P = 1 cools every ion; compare the whole chain instead
        return efficiency_periodic(prof, ideal, H if H.size else np.arange(n))

    valid, reports = _guarded(point, valid, workers, flags)
    return SweepResult("period", valid, reports,
                       {"gamma": gamma, "kappa": kappa, "T_bg": T_bg, "direction": system.direction}, flags)


def sweep_size(sizes, period: int = 10, *, direction: str = "transverse", omega_x: float | None = None,
               alpha: float = 1.0, kappa: float = 0.0, T_bg: float | None = None, gamma: float = 0.1,
               exclude_per_edge: int = 15, workers: int = 1, **relax_kw) -> SweepResult:
    """Relaxation time per chain size at fixed period.

    Each size gets its own quartic trap with uniform spacing over the central
    window that drops ``exclude_per_edge`` spacings at each end.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InvalidInputError("empty size grid")
    for n in sizes:
        if (n - 1) % period:
            raise InvalidInputError(f"period {period} does not divide N-1={n - 1}")

    def point(n):
        fit = fit_quartic(n, 1.0, spacing_window(n, exclude_per_edge))
        system = ChainSystem.from_equilibrium(fit.equilibrium, direction, omega_x, alpha)
        res, _, _ = relaxation_run(system, PeriodicCooling(period, gamma), kappa=kappa, T_bg=T_bg, **relax_kw)
        return res

    flags = []
    sizes, reports = _guarded(point, sizes, workers, flags)
    return SweepResult("N", sizes, reports,
                       {"period": period, "direction": direction, "kappa": kappa, "T_bg": T_bg, "gamma": gamma,
                        "exclude_per_edge": exclude_per_edge}, flags)


def sweep_heated_count(system: ChainSystem, counts, *, gamma: float = 0.1, kappa: float = 1e-4, T_bg="limit",
                       T_cool: float | None = None, workers: int = 1) -> SweepResult:
    """Edge-cooling efficiency against the number of heated ions ``N_h``.

    ``N - N_h`` must be even and positive; other counts are skipped.
    """
    counts = list(counts)
    if not counts:
        raise InvalidInputError("empty N_h grid")
    n = system.n_ions
    kw = {} if T_cool is None else {"T_cool": T_cool}
    valid, flags = [], []
    for nh in counts:
        if nh < 1 or nh >= n - 1 or (n - nh) % 2:
            flags.append(f"N_h={nh} skipped: needs N - N_h even and at least one cooled ion per side")
        else:
            valid.append(int(nh))

    def point(nh):
        cfg = EdgeCooling((n - nh) // 2, gamma, **kw)
        prof = heated_profile(system, cfg, kappa, T_bg)
        return efficiency_edge(prof, ideal_profile(system, cfg), assign_baths(cfg, n).heated)

    valid, reports = _guarded(point, valid, workers, flags)
    return SweepResult("N_h", valid, reports,
                       {"gamma": gamma, "kappa": kappa, "T_bg": T_bg, "direction": system.direction}, flags)


def sweep_background(system: ChainSystem, config, temperatures, *, kappa: float = 1e-4,
                     workers: int = 1) -> SweepResult:
    """Efficiency at fixed ``kappa`` for a list of background temperatures."""
    temps = [float(t) for t in temperatures]
    if not temps or any(t <= 0 for t in temps):
        raise InvalidInputError("background temperatures must be a non-empty positive list")
    ideal = ideal_profile(system, config)
    H = assign_baths(config, system.n_ions).heated

    def point(T):
        return efficiency(heated_profile(system, config, kappa, T), ideal, H, config)

    flags = []
    temps, reports = _guarded(point, temps, workers, flags)
    return SweepResult("T_bg", temps, reports, {"config": config, "kappa": kappa, "direction": system.direction},
                       flags)
