"""Per-ion reservoirs: Doppler-cooled ancillas and background heating."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .modes import NormalModes
from .units import build_unit_system, temperature_to_units

# k_B T_D / hbar = 2 pi x 9.9 MHz for Yb-171, in units of the 10 um system
DOPPLER_T = temperature_to_units(build_unit_system(), 2 * math.pi * 9.9e6)
DOPPLER_GAMMA = 0.1


@dataclass(frozen=True)
class EdgeCooling:
    cool_per_side: int
    gamma_cool: float = DOPPLER_GAMMA
    T_cool: float = DOPPLER_T

    def cooled_indices(self, n: int) -> np.ndarray:
        k = self.cool_per_side
        if k < 1 or 2 * k >= n:
            raise InvalidInputError(f"edge cooling of {k} ions per side needs 2*{k} < N={n}")
        return np.r_[np.arange(k), np.arange(n - k, n)]


@dataclass(frozen=True)
class PeriodicCooling:
    period: int
    gamma_cool: float = DOPPLER_GAMMA
    T_cool: float = DOPPLER_T

    def cooled_indices(self, n: int) -> np.ndarray:
        p = self.period
        if p < 1 or (n - 1) % p:
            raise InvalidInputError(f"period {p} must divide N-1={n - 1}")
        return np.arange(0, n, p)


@dataclass(frozen=True)
class BathAssignment:
    gamma: np.ndarray
    temperature: np.ndarray
    cooled: np.ndarray  # 0-based indices
    heated: np.ndarray

    @property
    def n_ions(self) -> int:
        return len(self.gamma)

    def __post_init__(self):
        if np.any(self.gamma < 0) or np.any(self.temperature < 0):
            raise InvalidInputError("damping rates and temperatures must be non-negative")


def assign_baths(config, n: int, kappa: float = 0.0, T_bg: float | None = None) -> BathAssignment:
    """Cooled ions get ``(gamma_cool, T_cool)``; the rest ``(kappa / T_bg, T_bg)``.

    With ``kappa == 0`` the heated ions are left undamped and ``T_bg`` only
    labels their (irrelevant) temperature.
    """
    if kappa < 0:
        raise InvalidInputError(f"kappa must be non-negative, got {kappa}")
    if kappa > 0 and not (T_bg is not None and T_bg > 0):
        raise InvalidInputError("background heating needs T_bg > 0")
    cooled = config.cooled_indices(n)
    heated = np.setdiff1d(np.arange(n), cooled)
    gamma = np.zeros(n)
    temp = np.zeros(n)
    gamma[cooled] = config.gamma_cool
    temp[cooled] = config.T_cool
    if kappa > 0:
        gamma[heated] = kappa / T_bg
    temp[heated] = T_bg if T_bg is not None else config.T_cool
    return BathAssignment(gamma, temp, cooled, heated)


def uniform_baths(n: int, gamma: float, T: float) -> BathAssignment:
    """Every ion on the same reservoir; all counted as cooled."""
    return BathAssignment(np.full(n, float(gamma)), np.full(n, float(T)), np.arange(n), np.array([], dtype=int))


def bose_occupation(omega_k, T):
    """Bose-Einstein occupation ``1 / (exp(omega_k / T) - 1)``; exactly 0 at ``T == 0``."""
    omega_k = np.asarray(omega_k, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(omega_k <= 0):
        raise InvalidInputError("mode frequencies must be positive")
    if np.any(T < 0):
        raise InvalidInputError("temperature must be non-negative")
    with np.errstate(divide="ignore", over="ignore"):
        out = 1.0 / np.expm1(omega_k / T)
    out = np.where(T == 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def mode_energy(omega_k, T):
    """``omega_k (n_B + 1/2)``, i.e. ``(omega_k / 2) coth(omega_k / 2T)``."""
    return np.asarray(omega_k) * (bose_occupation(omega_k, T) + 0.5)


def noise_strengths(modes: NormalModes, baths: BathAssignment) -> np.ndarray:
    """Local bath strengths ``Theta_i = sum_k omega_k G_ik^2 (n_B(omega_k, T_i) + 1/2)``."""
    G2 = modes.G**2
    if G2.shape[0] != baths.n_ions:
        raise InvalidInputError("modes and baths refer to different chain sizes")
    temps = np.asarray(baths.temperature, dtype=float)
    uniq, inv = np.unique(temps, return_inverse=True)
    # rows of E: mode energies at each distinct temperature
    E = np.array([mode_energy(modes.omega, T) for T in uniq])
    return np.einsum("ik,ik->i", G2, E[inv])
