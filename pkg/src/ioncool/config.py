"""Run configuration: YAML schema, SI parsing and validation.

All resolved values are in simulation units (lengths in d0, frequencies in
omega0, temperatures in hbar omega0 / k_B). Times in the ``evolve`` section are in
t0 = 2 pi / omega0, those of the ``oracle`` section in 1 / omega0. A resolved config
serialises back to the same schema, so a snapshot can be rerun as is.

Accepted spellings:

* frequency: a bare number (units of omega0), ``"2π×5.1 MHz"`` (angular)
  or ``"34 kHz"`` (cyclic, multiplied by 2 pi);
* temperature: a bare number, ``"T_D"`` or ``"2 T_D"`` (multiples of the
  Doppler temperature), ``"0.5 mK"`` or ``"2π×9.9 MHz"`` (k_B T / hbar);
* time: a bare number (units of t0) or ``"10 ms"``.
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np
import yaml

from .baths import EdgeCooling, PeriodicCooling
from .chain import HarmonicTrap, QuarticTrap, UniformTrap, fit_quartic, solve_equilibrium, spacing_window
from .errors import ConfigError, IonCoolError
from .units import IonSpecies, UnitSystem, build_unit_system, parse_quantity, temperature_to_units

DOPPLER_ANGULAR = 2 * math.pi * 9.9e6  # k_B T_D / hbar, rad/s
PRESETS = tuple(f"fig{i}" for i in range(1, 9)) + ("oracle5",)
SWEEP_AXES = ("gamma", "period", "N", "N_h", "T_bg")


@dataclass
class TrapConfig:
    kind: str = "harmonic"  # harmonic | quartic | quartic_fit | uniform
    omega_z: float | None = None
    alpha2: float | None = None
    alpha4: float | None = None
    exclude_per_edge: int = 10
    spacing: float = 1.0


@dataclass
class CoolingConfig:
    kind: str = "edge"  # edge | periodic
    per_side: int | None = None
    period: int | None = None
    gamma: float = 0.1
    T_cool: float | None = None

    def build(self):
        if self.kind == "edge":
            return EdgeCooling(self.per_side, self.gamma, self.T_cool)
        return PeriodicCooling(self.period, self.gamma, self.T_cool)


@dataclass
class HeatingConfig:
    kappa: float = 0.0
    T_bg: object = "limit"  # "limit", "escalate" or a temperature


@dataclass
class EvolveConfig:
    T_init: float | None = None
    t_max: float | None = None  # t0
    n_log: int = 200
    samples: int = 16
    window: float = 20.0  # t0
    criterion: float = 0.01


@dataclass
class OracleConfig:
    n_traj: int = 4000
    dt: float | None = None  # omega0^-1; defaults to the stability limit
    t_end: float = 400.0  # omega0^-1
    average_from: float = 150.0
    perturb: float = 0.0


@dataclass
class SweepConfig:
    axis: str = "gamma"
    values: list = field(default_factory=list)


@dataclass
class RunConfig:
    N: int
    trap: TrapConfig
    cooling: CoolingConfig
    heating: HeatingConfig = field(default_factory=HeatingConfig)
    directions: list = field(default_factory=lambda: ["axial", "transverse"])
    omega_x: float | None = None
    d0: float = 10e-6  # m
    mass_amu: float = 170.9363302
    charge: int = 1
    dk_d0: float | None = None
    beam_waist: float | None = None
    evolve: EvolveConfig = field(default_factory=EvolveConfig)
    sweep: SweepConfig | None = None
    oracle: OracleConfig = field(default_factory=OracleConfig)
    seed: int = 0
    threads: int = 1

    @property
    def units(self) -> UnitSystem:
        return build_unit_system(IonSpecies(self.mass_amu, self.charge), self.d0)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.sweep is None:
            d.pop("sweep")
        return d


# --- parsing ------------------------------------------------------------------


def _freq(v, u: UnitSystem, key):
    if v is None:
        return None
    try:
        val, kind = parse_quantity(v)
    except IonCoolError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if kind is None:
        return float(val)
    if kind == "angular":
        return val / u.omega0
    if kind == "freq":
        return 2 * math.pi * val / u.omega0
    raise ConfigError(f"{key}: expected a frequency, got {v!r}")


_TD = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)?\s*(?:×|x|\*)?\s*T_D\s*$")


def _temp(v, u: UnitSystem, key):
    if v is None:
        return None
    if isinstance(v, str):
        m = _TD.match(v)
        if m:
            return (float(m.group(1)) if m.group(1) else 1.0) * temperature_to_units(u, DOPPLER_ANGULAR)
    try:
        val, kind = parse_quantity(v)
    except IonCoolError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if kind is None:
        out = float(val)
    elif kind == "temp":
        out = u.kelvin_to_units(val)
    elif kind == "angular":
        out = temperature_to_units(u, val)
    else:
        raise ConfigError(f"{key}: expected a temperature, got {v!r}")
    if out < 0:
        raise ConfigError(f"{key}: temperature must be non-negative")
    return out


def _time_t0(v, u: UnitSystem, key):
    if v is None:
        return None
    try:
        val, kind = parse_quantity(v)
    except IonCoolError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if kind is None:
        return float(val)
    if kind == "time":
        return val / u.t0
    raise ConfigError(f"{key}: expected a time, got {v!r}")


def _length_m(v, key):
    try:
        val, kind = parse_quantity(v)
    except IonCoolError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if kind not in (None, "length"):
        raise ConfigError(f"{key}: expected a length, got {v!r}")
    return float(val)


def _section(raw, name, allowed):
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {sorted(unknown)}")
    return sec


def _int(v, key, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) and not (isinstance(v, float) and v.is_integer()):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    v = int(v)
    if lo is not None and v < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {v}")
    return v


def _num(v, key, positive=False, nonneg=False):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None
    if not math.isfinite(x) or (positive and x <= 0) or (nonneg and x < 0):
        raise ConfigError(f"{key}: out of range ({v!r})")
    return x


_TOP = {"N", "trap", "cooling", "heating", "directions", "omega_x", "d0", "mass_amu", "charge", "dk_d0",
        "beam_waist", "evolve", "sweep", "oracle", "seed", "threads"}


def parse_config(raw: dict) -> RunConfig:
    """Validate a raw mapping and resolve it into simulation units."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "config" in raw and "version" in raw:  # a run snapshot
        raw = raw["config"]
    unknown = set(raw) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    if "N" not in raw:
        raise ConfigError("N: required")
    N = _int(raw["N"], "N", 1)
    d0 = _length_m(raw.get("d0", 10e-6), "d0")
    mass = _num(raw.get("mass_amu", 170.9363302), "mass_amu", positive=True)
    charge = _int(raw.get("charge", 1), "charge", 1)
    try:
        u = build_unit_system(IonSpecies(mass, charge), d0)
    except IonCoolError as exc:
        raise ConfigError(str(exc)) from None

    t = _section(raw, "trap", asdict(TrapConfig()))
    kind = t.get("kind", "harmonic")
    if kind not in ("harmonic", "quartic", "quartic_fit", "uniform"):
        raise ConfigError(f"trap.kind: unknown trap {kind!r}")
    trap = TrapConfig(kind, _freq(t.get("omega_z"), u, "trap.omega_z"),
                      None if t.get("alpha2") is None else _num(t["alpha2"], "trap.alpha2"),
                      None if t.get("alpha4") is None else _num(t["alpha4"], "trap.alpha4", positive=True),
                      _int(t.get("exclude_per_edge", 10), "trap.exclude_per_edge", 0),
                      _num(t.get("spacing", 1.0), "trap.spacing", positive=True))
    if kind == "harmonic" and not (trap.omega_z and trap.omega_z > 0):
        raise ConfigError("trap.omega_z: harmonic trap needs a positive omega_z")
    if kind == "quartic" and (trap.alpha2 is None or trap.alpha4 is None):
        raise ConfigError("trap: quartic trap needs alpha2 and alpha4")
    if kind == "quartic_fit" and (N < 10 or 2 * trap.exclude_per_edge + 1 >= N - 1):
        raise ConfigError("trap: quartic fit needs N >= 10 and a non-empty spacing window")

    T_D = temperature_to_units(u, DOPPLER_ANGULAR)
    c = _section(raw, "cooling", asdict(CoolingConfig()))
    ckind = c.get("kind", "edge")
    if ckind not in ("edge", "periodic"):
        raise ConfigError(f"cooling.kind: unknown cooling {ckind!r}")
    cooling = CoolingConfig(ckind,
                            None if c.get("per_side") is None else _int(c["per_side"], "cooling.per_side", 1),
                            None if c.get("period") is None else _int(c["period"], "cooling.period", 1),
                            _num(c.get("gamma", 0.1), "cooling.gamma", positive=True),
                            _temp(c.get("T_cool", "T_D"), u, "cooling.T_cool"))
    if ckind == "edge" and cooling.per_side is None:
        raise ConfigError("cooling.per_side: required for edge cooling")
    if ckind == "periodic" and cooling.period is None:
        raise ConfigError("cooling.period: required for periodic cooling")
    try:
        cooling.build().cooled_indices(N)
    except IonCoolError as exc:
        raise ConfigError(f"cooling: {exc}") from None

    h = _section(raw, "heating", asdict(HeatingConfig()))
    T_bg = h.get("T_bg", "limit")
    if T_bg not in ("limit", "escalate"):
        T_bg = _temp(T_bg, u, "heating.T_bg")
        if T_bg <= 0:
            raise ConfigError("heating.T_bg: must be positive")
    heating = HeatingConfig(_num(h.get("kappa", 0.0), "heating.kappa", nonneg=True), T_bg)

    dirs = raw.get("directions", ["axial", "transverse"])
    if isinstance(dirs, str):
        dirs = [dirs]
    if not dirs or any(d not in ("axial", "transverse") for d in dirs):
        raise ConfigError(f"directions: expected a subset of [axial, transverse], got {dirs!r}")
    omega_x = _freq(raw.get("omega_x"), u, "omega_x")
    if "transverse" in dirs and not (omega_x and omega_x > 0):
        raise ConfigError("omega_x: required (positive) for the transverse direction")

    e = _section(raw, "evolve", asdict(EvolveConfig()))
    evolve = EvolveConfig(_temp(e.get("T_init"), u, "evolve.T_init"), _time_t0(e.get("t_max"), u, "evolve.t_max"),
                          _int(e.get("n_log", 200), "evolve.n_log", 2), _int(e.get("samples", 16), "evolve.samples", 2),
                          _time_t0(e.get("window", 20.0), u, "evolve.window"),
                          _num(e.get("criterion", 0.01), "evolve.criterion", positive=True))
    if evolve.t_max is not None and evolve.t_max <= 0:
        raise ConfigError("evolve.t_max: must be positive")
    if evolve.window <= 0:
        raise ConfigError("evolve.window: must be positive")

    o = _section(raw, "oracle", asdict(OracleConfig()))
    oracle = OracleConfig(_int(o.get("n_traj", 4000), "oracle.n_traj", 100),
                          None if o.get("dt") is None else _num(o["dt"], "oracle.dt", positive=True),
                          _num(o.get("t_end", 400.0), "oracle.t_end", positive=True),
                          _num(o.get("average_from", 150.0), "oracle.average_from", nonneg=True),
                          _num(o.get("perturb", 0.0), "oracle.perturb"))
    if oracle.average_from >= oracle.t_end:
        raise ConfigError("oracle.average_from: must be below t_end")

    sweep = None
    if raw.get("sweep") is not None:
        s = _section(raw, "sweep", ("axis", "values"))
        axis = s.get("axis")
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis: expected one of {SWEEP_AXES}, got {axis!r}")
        vals = s.get("values")
        if isinstance(vals, dict):
            if set(vals) != {"geomspace"} or len(vals["geomspace"]) != 3:
                raise ConfigError("sweep.values: expected a list or {geomspace: [start, stop, count]}")
            a, b, n = vals["geomspace"]
            vals = np.geomspace(_num(a, "sweep.values", positive=True), _num(b, "sweep.values", positive=True),
                                _int(n, "sweep.values", 1)).tolist()
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep.values: empty grid")
        if axis in ("period", "N", "N_h"):
            vals = [_int(v, "sweep.values", 1) for v in vals]
        elif axis == "T_bg":
            vals = [_temp(v, u, "sweep.values") for v in vals]
        else:
            vals = [_num(v, "sweep.values", positive=True) for v in vals]
        sweep = SweepConfig(axis, vals)

    dk = raw.get("dk_d0")
    bw = raw.get("beam_waist")
    return RunConfig(N, trap, cooling, heating, list(dirs), omega_x, d0, mass, charge,
                     None if dk is None else _num(dk, "dk_d0", positive=True),
                     None if bw is None else _num(bw, "beam_waist", positive=True),
                     evolve, sweep, oracle, _int(raw.get("seed", 0), "seed", 0),
                     _int(raw.get("threads", 1), "threads", 1))


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML error: {exc}") from None
    return parse_config(raw)


def preset_raw(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("ioncool").joinpath("presets", f"{name}.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_raw(name))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    out = copy.deepcopy(cfg)
    for k, v in kw.items():
        if v is not None:
            setattr(out, k, v)
    return out


# --- building model objects --------------------------------------------------------


def build_trap(cfg: RunConfig, N: int | None = None):
    """Trap object and (for fitted quartics) the fit record."""
    N = cfg.N if N is None else N
    t = cfg.trap
    if t.kind == "harmonic":
        return HarmonicTrap(t.omega_z), None
    if t.kind == "quartic":
        return QuarticTrap(t.alpha2, t.alpha4), None
    if t.kind == "uniform":
        return UniformTrap(t.spacing, t.omega_z), None
    fit = fit_quartic(N, 1.0, spacing_window(N, t.exclude_per_edge))
    return fit.trap, fit


def build_equilibrium(cfg: RunConfig, N: int | None = None):
    N = cfg.N if N is None else N
    trap, fit = build_trap(cfg, N)
    if fit is not None:
        return fit.equilibrium, fit
    return solve_equilibrium(trap, N), None
