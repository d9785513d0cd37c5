"""Trap potentials and classical equilibrium of a linear ion chain.

All quantities are dimensionless: lengths in d0, energies in e^2/d0, trap
curvatures in omega0^2.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DivergenceError, InvalidInputError


@dataclass(frozen=True)
class HarmonicTrap:
    omega_z: float

    def __post_init__(self):
        if not self.omega_z > 0:
            raise InvalidInputError(f"omega_z must be positive, got {self.omega_z}")

    def gradient(self, z):
        return self.omega_z**2 * z

    def curvature(self, z):
        return np.full_like(np.asarray(z, dtype=float), self.omega_z**2)

    def energy(self, z):
        return 0.5 * self.omega_z**2 * np.sum(z**2)


@dataclass(frozen=True)
class QuarticTrap:
    """``V(z) = alpha2 z^2 / 2 + alpha4 z^4 / 4``; ``alpha2`` may be negative."""

    alpha2: float
    alpha4: float

    def __post_init__(self):
        if not self.alpha4 > 0:
            raise InvalidInputError(f"alpha4 must be positive (confining), got {self.alpha4}")

    @property
    def shape_ratio(self) -> float:
        """Scale-free shape ``|alpha2|^(2/3) alpha2 / alpha4``."""
        return abs(self.alpha2) ** (2 / 3) * self.alpha2 / self.alpha4

    def gradient(self, z):
        return self.alpha2 * z + self.alpha4 * z**3

    def curvature(self, z):
        return self.alpha2 + 3 * self.alpha4 * np.asarray(z, dtype=float) ** 2

    def energy(self, z):
        return np.sum(0.5 * self.alpha2 * z**2 + 0.25 * self.alpha4 * z**4)

    def scaled(self, c: float) -> "QuarticTrap":
        """Trap whose equilibrium is this one's stretched by ``c``."""
        return QuarticTrap(self.alpha2 / c**3, self.alpha4 / c**5)


@dataclass(frozen=True)
class UniformTrap:
    """Perfectly uniform chain held by per-site pinning potentials.

    The pinning gradients cancel the static Coulomb force exactly. Each site
    gets the same axial curvature ``omega_z**2``, which makes the axial
    centre-of-mass mode sit at ``omega_z``. With ``omega_z=None`` the scale is
    taken from the lowest axial mode of the N=121 fitted quartic chain.
    """

    spacing: float = 1.0
    omega_z: float | None = None

    def __post_init__(self):
        if not self.spacing > 0:
            raise InvalidInputError(f"spacing must be positive, got {self.spacing}")
        if self.omega_z is not None and not self.omega_z > 0:
            raise InvalidInputError(f"omega_z must be positive, got {self.omega_z}")


@dataclass(frozen=True)
class D0Convention:
    kind: str = "exact"  # "min", "mean" or "exact"
    exclude_per_edge: int = 0
    value: float = 1.0

    @classmethod
    def min_central(cls):
        return cls("min")

    @classmethod
    def mean_central(cls, exclude_per_edge=10):
        return cls("mean", exclude_per_edge=exclude_per_edge)

    @classmethod
    def exact(cls, value=1.0):
        return cls("exact", value=value)


@dataclass
class ChainEquilibrium:
    trap: object
    positions: np.ndarray
    axial_curvatures: np.ndarray
    d0_convention: D0Convention = field(default_factory=D0Convention)
    residual: float = 0.0
    iterations: int = 0

    @property
    def n_ions(self) -> int:
        return len(self.positions)

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.positions)

    def to_csv(self, path):
        """Write ``index, z0, spacing, beta_z``; spacing is to the next ion (empty for the last)."""
        sp = self.spacings
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "z0", "spacing", "beta_z"])
            for i, (z, b) in enumerate(zip(self.positions, self.axial_curvatures)):
                w.writerow([i + 1, repr(float(z)), repr(float(sp[i])) if i < len(sp) else "", repr(float(b))])


def middle_index(n: int) -> int:
    """0-based index of the middle ion (lower middle for even ``n``)."""
    return (n + 1) // 2 - 1


def coulomb_force(z: np.ndarray) -> np.ndarray:
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, np.inf)
    return np.sum(np.sign(d) / d**2, axis=1)


def _coulomb_hessian(z: np.ndarray) -> np.ndarray:
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    k = 2.0 / d**3
    h = -k
    h[np.diag_indices_from(h)] = k.sum(axis=1)
    return h


def _energy(trap, z):
    d = z[:, None] - z[None, :]
    iu = np.triu_indices(len(z), 1)
    return trap.energy(z) + np.sum(1.0 / np.abs(d[iu]))


def _initial_guess(trap, n):
    # best equally spaced configuration, searched over the half-extent
    base = np.linspace(-1.0, 1.0, n)

    def e(logL):
        return _energy(trap, math.exp(logL) * base)

    res = optimize.minimize_scalar(e, bounds=(math.log(1e-3 * n), math.log(1e6 * n)), method="bounded")
    return math.exp(res.x) * base


def solve_equilibrium(trap, n: int, *, d0_convention: D0Convention | None = None,
                      tol: float = 1e-11, max_iter: int = 500) -> ChainEquilibrium:
    """Classical equilibrium positions of ``n`` ions in ``trap``.

    Damped Newton iteration on the force with the analytic Hessian; steps are
    shifted towards gradient descent whenever the Newton step fails to lower
    the energy or would reorder the ions.
    """
    if n < 1:
        raise InvalidInputError(f"need at least one ion, got {n}")
    if isinstance(trap, UniformTrap):
        z = (np.arange(n) - (n - 1) / 2) * trap.spacing
        conv = d0_convention or D0Convention.exact(trap.spacing)
        eq = ChainEquilibrium(trap, z, np.zeros(n), conv)
        eq.axial_curvatures = uniform_trap_curvatures(eq)
        return eq
    conv = d0_convention or D0Convention.exact(1.0)
    if n == 1:
        if isinstance(trap, QuarticTrap) and trap.alpha2 < 0:
            z = np.array([math.sqrt(-trap.alpha2 / trap.alpha4)])
        else:
            z = np.zeros(1)
        return ChainEquilibrium(trap, z, trap.curvature(z), conv)

    z = _initial_guess(trap, n)
    energy = _energy(trap, z)
    mu = 0.0
    g = trap.gradient(z) - coulomb_force(z)
    for it in range(1, max_iter + 1):
        gnorm = np.max(np.abs(g))
        if gnorm < tol:
            break
        h = _coulomb_hessian(z)
        h[np.diag_indices_from(h)] += trap.curvature(z)
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(h + mu * np.eye(n), -g)
            except np.linalg.LinAlgError:
                mu = max(10 * mu, 1e-8)
                continue
            trial = z + step
            if np.all(np.diff(trial) > 0):
                e_trial = _energy(trap, trial)
                if e_trial <= energy + 1e-14 * abs(energy) or np.max(np.abs(step)) < 1e-12:
                    accepted = True
                    break
            mu = max(10 * mu, 1e-8 * max(1.0, np.max(np.abs(h))))
        if not accepted:
            raise ConvergenceError("equilibrium line search failed", residual=gnorm, best=z)
        z, energy = trial, e_trial
        mu = mu / 10 if mu > 1e-12 else 0.0
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 1e12:
            raise DivergenceError("ion positions diverged; trap is not confining")
        g = trap.gradient(z) - coulomb_force(z)
    else:
        raise ConvergenceError(
            f"equilibrium not converged after {max_iter} iterations",
            residual=float(np.max(np.abs(g))), best=z)
    # symmetric traps: remove round-off asymmetry
    z = 0.5 * (z - z[::-1])
    res = float(np.max(np.abs(trap.gradient(z) - coulomb_force(z))))
    return ChainEquilibrium(trap, z, trap.curvature(z), conv, residual=res, iterations=it)


def net_force(eq: ChainEquilibrium) -> np.ndarray:
    """Residual force per ion; pinned (uniform) chains are exempt from the trap part."""
    f = coulomb_force(eq.positions)
    if isinstance(eq.trap, UniformTrap):
        return f - f  # the pinning potential cancels Coulomb by construction
    return f - eq.trap.gradient(eq.positions)


def compute_d0(eq: ChainEquilibrium) -> float:
    n = eq.n_ions
    if n < 2:
        raise InvalidInputError("d0 needs at least two ions")
    conv = eq.d0_convention
    sp = eq.spacings
    if conv.kind == "exact":
        if isinstance(eq.trap, UniformTrap):
            return eq.trap.spacing
        return conv.value
    if conv.kind == "min":
        return float(sp.min())
    if conv.kind == "mean":
        k = conv.exclude_per_edge
        if 2 * k >= len(sp):
            raise InvalidInputError(f"cannot exclude {k} spacings per edge from {len(sp)}")
        return float(sp[k:len(sp) - k].mean())
    raise InvalidInputError(f"unknown d0 convention {conv.kind!r}")


def uniform_trap_curvatures(eq: ChainEquilibrium) -> np.ndarray:
    if not isinstance(eq.trap, UniformTrap):
        raise InvalidInputError("uniform_trap_curvatures needs a UniformTrap equilibrium")
    w = eq.trap.omega_z
    if w is None:
        w = default_uniform_omega_z(eq.trap.spacing)
    return np.full(eq.n_ions, w**2)


@functools.lru_cache(maxsize=8)
def default_uniform_omega_z(spacing: float = 1.0) -> float:
    """Lowest axial mode frequency of the N=121 quartic chain fitted to ``spacing``."""
    from .modes import build_mode_matrix, normal_modes

    fit = fit_quartic(121, spacing, spacing_window(121, 10))
    return float(normal_modes(build_mode_matrix(fit.equilibrium, "axial")).omega[0])


# --- quartic fit --------------------------------------------------------------


def spacing_window(n: int, exclude_per_edge: int) -> tuple[int, int]:
    """1-based inclusive range of spacing indices with ``exclude_per_edge`` dropped at each end."""
    return exclude_per_edge + 1, n - 1 - exclude_per_edge


@dataclass
class QuarticFit:
    trap: QuarticTrap
    equilibrium: ChainEquilibrium
    shape_ratio: float
    relative_spread: float  # std / mean of the windowed spacings
    window: tuple[int, int]
    evaluations: int


def _trap_for_shape(eta, alpha4=2e-6):
    return QuarticTrap(eta * alpha4**0.6, alpha4)


def fit_quartic(n: int, target_spacing: float = 1.0, window: tuple[int, int] | None = None,
                seed_params=(-15.0, 10.0), *, grid_points: int = 26, xtol: float = 1e-5,
                maxiter: int = 200) -> QuarticFit:
    """Quartic trap with the most uniform spacing inside ``window``.

    The search runs over the scale-free shape ``eta = alpha2 / alpha4^(3/5)``
    (``eta = 0`` is a pure quartic, negative values have a central hump): a
    coarse scan over the ``seed_params`` bracket, then golden-section
    refinement. The overall scale is fixed afterwards so that the windowed
    mean spacing equals ``target_spacing``.
    """
    if n < 10:
        raise InvalidInputError(f"quartic fit needs N >= 10, got {n}")
    window = window or spacing_window(n, 10)
    lo, hi = window
    if not (1 <= lo < hi <= n - 1):
        raise InvalidInputError(f"spacing window {window} outside [1, {n - 1}]")
    e_lo, e_hi = sorted(seed_params)

    n_eval = 0

    def spread(eta):
        nonlocal n_eval
        n_eval += 1
        eq = solve_equilibrium(_trap_for_shape(eta), n)
        s = eq.spacings[lo - 1:hi]
        return float(np.std(s) / np.mean(s))

    grid = np.linspace(e_lo, e_hi, grid_points)
    vals = np.array([spread(e) for e in grid])
    k = int(np.argmin(vals))
    if k == 0 or k == len(grid) - 1:
        raise ConvergenceError(f"spacing spread minimum at the edge of the shape bracket {seed_params}",
                               best=float(grid[k]))
    res = optimize.minimize_scalar(spread, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden",
                                   options={"xtol": xtol, "maxiter": maxiter})
    if not res.success:
        raise ConvergenceError("golden-section search did not converge", best=float(res.x))
    base = solve_equilibrium(_trap_for_shape(float(res.x)), n)
    c = target_spacing / float(np.mean(base.spacings[lo - 1:hi]))
    trap = base.trap.scaled(c)
    eq = solve_equilibrium(trap, n, d0_convention=D0Convention.mean_central(lo - 1))
    s = eq.spacings[lo - 1:hi]
    return QuarticFit(trap, eq, trap.shape_ratio, float(np.std(s) / np.mean(s)), window, n_eval)
