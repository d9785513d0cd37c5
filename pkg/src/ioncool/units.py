"""Dimensionless unit system for a single-species ion chain.

Lengths are measured in the ion spacing ``d0``, energies in ``e^2/d0`` and
frequencies in ``omega0 = sqrt(e^2 / (4 pi eps0 m d0^3))``. Temperatures are
expressed as ``k_B T / (hbar omega0)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import InvalidInputError

# CODATA 2018, SI.
CONSTANTS = {
    "e": 1.602176634e-19,  # C
    "eps0": 8.8541878128e-12,  # F/m
    "hbar": 1.054571817e-34,  # J s
    "k_B": 1.380649e-23,  # J/K
    "amu": 1.66053906660e-27,  # kg
}

YB171_MASS_AMU = 170.9363302


@dataclass(frozen=True)
class IonSpecies:
    mass: float = YB171_MASS_AMU
    charge: int = 1
    name: str = "171Yb+"

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidInputError(f"ion mass must be positive, got {self.mass}")
        if int(self.charge) != self.charge or self.charge < 1:
            raise InvalidInputError(f"charge must be a positive integer, got {self.charge}")

    @property
    def mass_kg(self) -> float:
        return self.mass * CONSTANTS["amu"]


YB171 = IonSpecies()


@dataclass(frozen=True)
class UnitSystem:
    species: IonSpecies
    d0: float  # m
    omega0: float  # rad/s
    t0: float  # s, one period 2 pi / omega0
    alpha: float  # ground-state length / d0 at omega0
    temp_unit: float  # K per (hbar omega0 / k_B)

    # conversions; "to_*" go SI -> simulation units

    def length_to_units(self, meters: float) -> float:
        return meters / self.d0

    def length_to_si(self, x: float) -> float:
        return x * self.d0

    def time_to_units(self, seconds: float) -> float:
        """Seconds to dimensionless time ``omega0 * t``."""
        return seconds * self.omega0

    def time_to_si(self, t: float) -> float:
        return t / self.omega0

    def frequency_to_units(self, omega: float) -> float:
        """Angular frequency (rad/s) to units of omega0."""
        return omega / self.omega0

    def frequency_to_si(self, w: float) -> float:
        return w * self.omega0

    def kelvin_to_units(self, kelvin: float) -> float:
        return kelvin / self.temp_unit

    def temperature_to_si(self, T: float) -> float:
        """Dimensionless temperature back to kelvin."""
        return T * self.temp_unit


def build_unit_system(species: IonSpecies = YB171, d0: float = 10e-6) -> UnitSystem:
    if not d0 > 0:
        raise InvalidInputError(f"d0 must be positive, got {d0}")
    c = CONSTANTS
    m = species.mass_kg
    q2 = (species.charge * c["e"]) ** 2 / (4 * math.pi * c["eps0"])
    omega0 = math.sqrt(q2 / (m * d0**3))
    return UnitSystem(
        species=species,
        d0=d0,
        omega0=omega0,
        t0=2 * math.pi / omega0,
        alpha=math.sqrt(c["hbar"] / (m * omega0)) / d0,
        temp_unit=c["hbar"] * omega0 / c["k_B"],
    )


def temperature_to_units(u: UnitSystem, T_angular: float) -> float:
    """Convert a temperature given as ``k_B T / hbar`` (rad/s) to units of ``hbar omega0 / k_B``."""
    if T_angular < 0:
        raise InvalidInputError(f"temperature must be non-negative, got {T_angular}")
    return T_angular / u.omega0


def phonon_rate_si(u: UnitSystem, kappa: float, omega_k: float) -> float:
    """Phonons generated per second in mode ``omega_k`` by background heating ``kappa``.

    The dimensionless rate ``kappa / omega_k`` (per unit ``1/omega0``) is
    converted to cycles per second, i.e. multiplied by ``omega0 / 2 pi``.
    """
    if not omega_k > 0:
        raise InvalidInputError(f"mode frequency must be positive, got {omega_k}")
    if kappa < 0:
        raise InvalidInputError(f"kappa must be non-negative, got {kappa}")
    return (kappa / omega_k) * u.omega0 / (2 * math.pi)


# --- SI string parsing ------------------------------------------------------

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "m": 1e-3, "u": 1e-6, "µ": 1e-6, "μ": 1e-6, "n": 1e-9}
_BASE = {"Hz": "freq", "m": "length", "s": "time", "K": "temp"}
_TWO_PI = re.compile(r"^\s*2\s*(?:π|pi)\s*(?:×|x|\*)\s*", re.IGNORECASE)
_QTY = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Zµμ]*)\s*$")


def parse_quantity(text) -> tuple[float, str | None]:
    """Parse strings like ``"2π×5.1 MHz"`` or ``"10 um"``.

    Returns ``(value_in_SI, kind)`` where ``kind`` is one of ``"freq"``,
    ``"angular"``, ``"length"``, ``"time"``, ``"temp"`` or ``None`` for a bare
    number. A leading ``2π×`` marks an angular frequency and the value is
    returned in rad/s.
    """
    if isinstance(text, (int, float)):
        return float(text), None
    s = str(text)
    angular = False
    m2 = _TWO_PI.match(s)
    if m2:
        angular = True
        s = s[m2.end():]
    m = _QTY.match(s)
    if not m:
        raise InvalidInputError(f"cannot parse quantity {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if not unit:
        if angular:
            return 2 * math.pi * value, "angular"
        return value, None
    for base, kind in _BASE.items():
        if unit.endswith(base) and unit[: -len(base)] in _PREFIX:
            v = value * _PREFIX[unit[: -len(base)]]
            if angular:
                if kind != "freq":
                    raise InvalidInputError(f"2π× prefix needs a frequency unit: {text!r}")
                return 2 * math.pi * v, "angular"
            return v, kind
    raise InvalidInputError(f"unknown unit {unit!r} in {text!r}")
