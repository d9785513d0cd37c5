"""Second-moment dynamics of the damped, noise-driven ion chain.

Internally positions and momenta are measured in oscillator units
(``sqrt(hbar / m omega0)``); the public :class:`MomentProfile` carries them
multiplied by ``alpha**2`` so that ``sqrt(xx)`` is the position fluctuation
in units of d0.

With ``Omega = U diag(lam) U^-1`` and per-ion noise power
``D_s = 2 gamma_s Theta_s`` the diagonal moments are

    <q_mu^2>(t) = sum_ab U_ma U_mb [ exp(-(lam_a + lam_b) t) M0_ab
                                     + (1 - exp(-(lam_a + lam_b) t)) MD_ab / (lam_a + lam_b) ]

with ``M0 = U^-1 C(0) U^-T`` and ``MD = U^-1 diag(0, D) U^-T``. The initial
covariance ``C(0)`` is diagonal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .baths import BathAssignment, assign_baths, bose_occupation, noise_strengths
from .errors import ConvergenceError, InvalidInputError, NoSteadyStateError, NotRelaxedError, SingularTermError
from .modes import DriftSpectrum, ModeMatrix, NormalModes, build_drift_matrix, build_mode_matrix, normal_modes, \
    spectral_decomposition

SINGULAR_TOL = 1e-12
IMAG_TOL = 1e-8
T0 = 2 * math.pi  # one period of omega0 in dimensionless time


@dataclass
class MomentProfile:
    xx: np.ndarray  # <x_i^2> in d0^2
    pp: np.ndarray  # <p_i^2> in (d0 omega0)^2
    alpha: float = 1.0
    time: float = math.inf
    direction: str = "axial"
    meta: dict = field(default_factory=dict)

    @property
    def delta(self) -> np.ndarray:
        """Position fluctuation ``sqrt(<x_i^2>)`` in units of d0."""
        return np.sqrt(self.xx)

    @property
    def n_ions(self) -> int:
        return len(self.xx)

    def natural(self):
        """``(xx, pp)`` in oscillator units."""
        a2 = self.alpha**2
        return self.xx / a2, self.pp / a2


@dataclass
class TimeSeries:
    times: np.ndarray
    xx: np.ndarray  # (n_times, N), d0^2
    pp: np.ndarray
    alpha: float = 1.0
    direction: str = "axial"
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("time points must be strictly increasing")

    @property
    def delta(self) -> np.ndarray:
        return np.sqrt(self.xx)

    def profile(self, k: int) -> MomentProfile:
        return MomentProfile(self.xx[k], self.pp[k], self.alpha, float(self.times[k]), self.direction)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "time_t0", "ion", "delta", "xx", "pp"])
            for k, t in enumerate(self.times):
                for i in range(self.xx.shape[1]):
                    w.writerow([repr(float(t)), repr(float(t / T0)), i + 1, repr(float(math.sqrt(max(self.xx[k, i], 0.0)))),
                                repr(float(self.xx[k, i])), repr(float(self.pp[k, i]))])


@dataclass
class CoarseSeries:
    """Boxcar-averaged position fluctuation with per-window extremes."""

    times: np.ndarray
    coarse: np.ndarray  # (n_centers, N)
    upper: np.ndarray
    lower: np.ndarray
    window: float


@dataclass
class RelaxationResult:
    tau_R: float  # dimensionless time
    per_ion: np.ndarray
    coarse: CoarseSeries
    asymptote: np.ndarray
    criterion: float = 0.01
    ions: np.ndarray | None = None

    @property
    def tau_R_t0(self) -> float:
        return self.tau_R / T0

    @property
    def upper_env(self):
        return self.coarse.upper

    @property
    def lower_env(self):
        return self.coarse.lower

    def to_csv(self, path):
        c = self.coarse
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "time_t0", "ion", "coarse", "upper", "lower"])
            for k, t in enumerate(c.times):
                for i in range(c.coarse.shape[1]):
                    w.writerow([repr(float(t)), repr(float(t / T0)), i + 1, repr(float(c.coarse[k, i])),
                                repr(float(c.upper[k, i])), repr(float(c.lower[k, i]))])


# --- chain + direction bundle -----------------------------------------------


@dataclass
class ChainSystem:
    """A chain in one direction: coupling matrix, its normal modes and the length ratio alpha."""

    A: ModeMatrix
    modes: NormalModes
    alpha: float = 1.0

    @classmethod
    def from_equilibrium(cls, eq, direction, omega_x=None, alpha=1.0):
        A = build_mode_matrix(eq, direction, omega_x)
        return cls(A, normal_modes(A), alpha)

    @property
    def n_ions(self) -> int:
        return self.A.n_ions

    @property
    def direction(self) -> str:
        return self.A.direction

    def spectrum(self, gamma) -> DriftSpectrum:
        return spectral_decomposition(build_drift_matrix(self.A, gamma))


# --- thermal equilibrium ------------------------------------------------------


def thermal_moments(modes: NormalModes, T: float):
    """Per-ion ``(<x^2>, <p^2>)`` of the mode-thermal state, oscillator units."""
    if T < 0:
        raise InvalidInputError("temperature must be non-negative")
    occ = bose_occupation(modes.omega, T) + 0.5
    G2 = modes.G**2
    return G2 @ (occ / modes.omega), G2 @ (occ * modes.omega)


def thermal_profile(modes: NormalModes, T: float, alpha: float = 1.0) -> MomentProfile:
    xx, pp = thermal_moments(modes, T)
    a2 = alpha**2
    return MomentProfile(xx * a2, pp * a2, alpha, 0.0, modes.direction, {"T": T})


def thermal_equilibrium_pf(modes: NormalModes, T: float, alpha: float = 1.0) -> np.ndarray:
    """``sqrt(alpha^2 sum_k G_ik^2 coth(omega_k / 2T) / (2 omega_k))`` per ion."""
    return thermal_profile(modes, T, alpha).delta


# --- closed-form evolution ----------------------------------------------------


def noise_power(theta, gamma) -> np.ndarray:
    """``2 gamma_s Theta_s``; an undamped ion contributes nothing regardless of Theta."""
    theta = np.asarray(theta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    return np.where(gamma == 0, 0.0, 2 * gamma * theta)


def _projected(spec: DriftSpectrum, diag_cov):
    """``U^-1 diag(diag_cov) U^-T``."""
    return (spec.U_inv * diag_cov) @ spec.U_inv.T


def _rates(spec: DriftSpectrum):
    return spec.lam[:, None] + spec.lam[None, :]


def _check_singular(s, MD):
    small = np.abs(s) < SINGULAR_TOL
    if np.any(small):
        scale = max(np.abs(MD).max(), 1e-300)
        if np.any(np.abs(MD[small]) > SINGULAR_TOL * scale):
            raise SingularTermError("noise drives an undamped mode (lam_a + lam_b = 0)")
    return small


def _real_part(values, flags):
    mag = np.abs(values).max()
    if mag > 0 and np.abs(values.imag).max() > IMAG_TOL * mag:
        flags.append(f"imaginary residue {np.abs(values.imag).max() / mag:.1e} of moment magnitude")
    return values.real


def evolve_second_moments(spec: DriftSpectrum, theta, gamma, init: MomentProfile, times,
                          *, drive=None, method: str = "separable", with_momenta: bool = True,
                          chunk: int = 64) -> TimeSeries:
    """Diagonal second moments at each of ``times`` from a diagonal initial state.

    ``method="direct"`` evaluates the double sum term by term.
    ``method="separable"`` (default) uses ``exp(-(lam_a + lam_b) t) =
    exp(-lam_a t) exp(-lam_b t)`` to write the moments as
    ``C_inf + diag(V K V^T)`` with ``V = U exp(-lam t)``, one matrix product
    per time point. ``with_momenta=False`` skips the momentum rows (``pp`` is
    then NaN), halving the work for position-only studies.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise InvalidInputError("need a non-empty 1-d time grid")
    if np.any(times < 0):
        raise InvalidInputError("times must be non-negative")
    n = spec.n_ions
    xx0, pp0 = init.natural()
    if np.any(xx0 < 0) or np.any(pp0 < 0):
        raise InvalidInputError("initial moments must be non-negative")
    if len(xx0) != n:
        raise InvalidInputError("initial profile size does not match the chain")
    D = noise_power(theta, gamma) if drive is None else np.asarray(drive, dtype=float)
    M0 = _projected(spec, np.r_[xx0, pp0])
    MD = _projected(spec, np.r_[np.zeros(n), D])
    s = _rates(spec)
    small = _check_singular(s, MD)
    s_safe = np.where(small, 1.0, s)
    U = spec.U
    out = np.empty((len(times), 2 * n))
    flags = list(spec.flags)
    if method == "direct":
        for start in range(0, len(times), chunk):
            t = times[start:start + chunk, None, None]
            growth = np.where(small, t, -np.expm1(-s * t) / s_safe)
            W = np.exp(-s * t) * M0 + growth * MD
            UW = np.matmul(U[None], W)
            out[start:start + chunk] = _real_part(np.sum(UW * U[None], axis=2), flags)
    elif method == "separable":
        S = np.where(small, 0.0, MD / s_safe)
        K = M0 - S
        Ur = U if with_momenta else U[:n]
        c_inf = np.sum((Ur @ S) * Ur, axis=1)
        if not with_momenta:
            out[:, n:] = np.nan
        m = Ur.shape[0]
        for start in range(0, len(times), chunk):
            t = times[start:start + chunk]
            V = Ur[None, :, :] * np.exp(-np.outer(t, spec.lam))[:, None, :]
            VK = (V.reshape(-1, 2 * n) @ K).reshape(V.shape)
            vals = c_inf + np.einsum("tij,tij->ti", VK, V)
            out[start:start + chunk, :m] = _real_part(vals, flags)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    a2 = init.alpha**2
    out = np.where(np.isnan(out), out, np.clip(out, 0.0, None))
    return TimeSeries(times, out[:, :n] * a2, out[:, n:] * a2, init.alpha, init.direction, flags)


def _require_damped(spec: DriftSpectrum):
    lo = float(np.min(spec.lam.real))
    if lo <= SINGULAR_TOL * max(1.0, float(np.max(np.abs(spec.lam)))):
        raise NoSteadyStateError(f"an undamped mode is present (min Re lambda = {lo:.3e})")


def steady_state(spec: DriftSpectrum, theta, gamma, *, alpha: float = 1.0, direction: str = "axial",
                 drive=None, refine: int = 1) -> MomentProfile:
    """Long-time limit of :func:`evolve_second_moments`.

    See :func:`steady_covariance` for ``refine``.
    """
    D = noise_power(theta, gamma) if drive is None else np.asarray(drive, dtype=float)
    flags = list(spec.flags)
    C = steady_covariance(spec, D, refine=refine, flags=flags)
    n = spec.n_ions
    vals = np.clip(np.diag(C), 0.0, None) * alpha**2
    return MomentProfile(vals[:n], vals[n:], alpha, math.inf, direction, {"flags": flags})


def lyapunov_covariance(Omega, drive, *, refine: int = 2) -> np.ndarray:
    """Full stationary covariance from ``Omega C + C Omega^T = diag(0, drive)``.

    Bartels-Stewart solve followed by ``refine`` rounds of iterative
    refinement on the residual, which matters for weakly damped chains.
    """
    Omega = np.asarray(Omega, dtype=float)
    n = Omega.shape[0] // 2
    Q = np.diag(np.r_[np.zeros(n), np.asarray(drive, dtype=float)])
    C = scipy.linalg.solve_continuous_lyapunov(Omega, Q)
    for _ in range(refine):
        R = Q - Omega @ C - C @ Omega.T
        C = C + scipy.linalg.solve_continuous_lyapunov(Omega, 0.5 * (R + R.T))
    return 0.5 * (C + C.T)


def lyapunov_steady_state(Omega, drive, *, alpha=1.0, direction="axial", refine: int = 2) -> MomentProfile:
    C = lyapunov_covariance(Omega, drive, refine=refine)
    n = C.shape[0] // 2
    d = np.diag(C) * alpha**2
    return MomentProfile(d[:n], d[n:], alpha, math.inf, direction, {"method": "lyapunov"})


def stationarity_residual(Omega, C, drive) -> float:
    """Relative residual of ``Omega C + C Omega^T - Q`` for a full covariance ``C``."""
    n = C.shape[0] // 2
    Q = np.diag(np.r_[np.zeros(n), np.asarray(drive, dtype=float)])
    R = Omega @ C + C @ Omega.T - Q
    return float(np.abs(R).max() / max(np.abs(Q).max(), np.abs(Omega @ C).max()))


def steady_covariance(spec: DriftSpectrum, drive, *, refine: int = 1, max_refine: int = 10, tol: float = 1e-12,
                      flags=None) -> np.ndarray:
    """Full stationary covariance from the eigen-decomposition route.

    ``C = U (MD / (lam_a + lam_b)) U^T``, followed by at least ``refine``
    rounds of iterative refinement: the residual of ``Omega C + C Omega^T = Q``
    is fed back through the same solve until its relative size drops below
    ``tol`` (at most ``max_refine`` rounds). Near critical damping the
    eigenbasis is nearly defective and several rounds are needed. If the
    residual still exceeds 1e-8 the direct Lyapunov solve is used and flagged.
    """
    _require_damped(spec)
    flags = [] if flags is None else flags
    n = spec.n_ions
    q = np.r_[np.zeros(n), np.asarray(drive, dtype=float)]
    s = _rates(spec)
    U = spec.U
    om = spec.omega_matrix

    def solve(M_proj):
        return U @ (M_proj / s) @ U.T

    C = _real_part(solve(_projected(spec, q)), flags)
    for k in range(max_refine):
        R = np.diag(q) - om @ C - C @ om.T
        res = np.abs(R).max() / max(np.abs(q).max(), np.abs(om @ C).max(), 1e-300)
        if k >= refine and res < tol:
            break
        R = 0.5 * (R + R.T)
        C = C + solve(spec.U_inv @ R @ spec.U_inv.T).real
    C = 0.5 * (C + C.T)
    if stationarity_residual(om, C, q[n:]) > 1e-8:
        flags.append("eigenbasis too ill-conditioned for the steady state; direct Lyapunov solve used")
        C = lyapunov_covariance(om, q[n:])
    return C


# --- system-level helpers -----------------------------------------------------


def solve_steady(system: ChainSystem, baths: BathAssignment) -> MomentProfile:
    theta = noise_strengths(system.modes, baths)
    spec = system.spectrum(baths.gamma)
    prof = steady_state(spec, theta, baths.gamma, alpha=system.alpha, direction=system.direction)
    prof.meta["cond_U"] = spec.cond
    return prof


def ideal_profile(system: ChainSystem, config) -> MomentProfile:
    """Thermal profile at the cooling temperature (perfect Doppler cooling of every ion)."""
    return thermal_profile(system.modes, config.T_cool, system.alpha)


def upper_bound_limit(system: ChainSystem, config, kappa: float) -> MomentProfile:
    """Steady state in the ``T_bg -> inf`` limit at fixed ``kappa``.

    Heated ions lose their damping but keep the noise power ``2 kappa``.
    """
    baths = assign_baths(config, system.n_ions, 0.0)
    theta = noise_strengths(system.modes, baths)
    drive = noise_power(theta, baths.gamma)
    drive[baths.heated] = 2 * kappa
    spec = system.spectrum(baths.gamma)
    prof = steady_state(spec, theta, baths.gamma, alpha=system.alpha, direction=system.direction, drive=drive)
    prof.meta["T_bg"] = math.inf
    return prof


def upper_bound_profile(system: ChainSystem, config, kappa: float, *, T_start: float | None = None,
                        rtol: float = 1e-3, max_doublings: int = 10) -> MomentProfile:
    """Steady state at a background temperature high enough that doubling it
    moves no ion's fluctuation by more than ``rtol``.

    ``T_start`` defaults to the temperature at which the heated-ion damping
    ``kappa / T_bg`` is 1% of the slowest relaxation rate of the chain
    without background damping.
    """
    if kappa < 0:
        raise InvalidInputError("kappa must be non-negative")
    n = system.n_ions
    if kappa == 0:
        prof = solve_steady(system, assign_baths(config, n, 0.0))
        prof.meta["T_bg"] = math.inf
        return prof
    if T_start is None:
        rate = float(np.min(system.spectrum(assign_baths(config, n, 0.0).gamma).lam.real))
        if rate <= 0:
            raise NoSteadyStateError("cooled ions do not damp every mode")
        T_start = max(config.T_cool, kappa / (1e-2 * rate))
    T_bg = T_start
    prev = solve_steady(system, assign_baths(config, n, kappa, T_bg))
    for _ in range(max_doublings):
        T_bg *= 2
        cur = solve_steady(system, assign_baths(config, n, kappa, T_bg))
        change = float(np.max(np.abs(cur.delta / prev.delta - 1)))
        if change < rtol:
            cur.meta.update(T_bg=T_bg, doubling_change=change)
            return cur
        prev = cur
    raise ConvergenceError(f"upper bound not converged after {max_doublings} doublings", residual=change,
                           best=cur)


# --- coarse graining and relaxation -------------------------------------------


def relaxation_grid(t_min=10 * T0, t_max=1e7 * T0, n_log=400, window=20 * T0, samples=41,
                    fine_until=1e3 * T0, fine_step=0.5 * T0, seed=0):
    """Sample times and coarse-graining centres for relaxation runs.

    Early times are sampled on a uniform grid of ``fine_step``; later each
    logarithmically spaced centre gets a burst of ``samples`` points spanning
    one ``window``, stratified with a fixed-seed jitter so fast oscillations are
    not aliased onto a single phase.
    """
    if not (0 < t_min < t_max) or window <= 0:
        raise InvalidInputError("need 0 < t_min < t_max and window > 0")
    rng = np.random.default_rng(seed)
    fine_end = min(fine_until, t_max)
    fine = np.arange(0.0, fine_end + 0.5 * fine_step, fine_step)
    centres_fine = fine[(fine >= max(window / 2, t_min)) & (fine <= fine_end - window / 2)]
    logc = np.geomspace(t_min, t_max, n_log)
    logc = logc[logc > fine_end - window / 2 + fine_step]
    edges = np.linspace(-0.5, 0.5, samples + 1)
    bursts = [c + window * (edges[:-1] + np.diff(edges) * rng.random(samples)) for c in logc]
    times = np.unique(np.concatenate([fine] + bursts)) if bursts else fine
    centres = np.r_[centres_fine, logc]
    return times, centres


def coarse_grain(series: TimeSeries, window: float, centers=None) -> CoarseSeries:
    """Boxcar mean, max and min of the position fluctuation over ``window``."""
    t = series.times
    if window <= 0:
        raise InvalidInputError("window must be positive")
    if len(t) > 1 and np.min(np.diff(t)) >= window:
        raise InvalidInputError("window is not larger than the sampling step")
    delta = series.delta
    if centers is None:
        centers = t[(t - window / 2 >= t[0] - 1e-12) & (t + window / 2 <= t[-1] + 1e-12)]
    centers = np.asarray(centers, dtype=float)
    half = window / 2 * (1 + 1e-12)
    lo = np.searchsorted(t, centers - half, side="left")
    hi = np.searchsorted(t, centers + half, side="right")
    n = delta.shape[1]
    coarse = np.empty((len(centers), n))
    upper = np.empty_like(coarse)
    lower = np.empty_like(coarse)
    for k, (a, b) in enumerate(zip(lo, hi)):
        if b - a < 2:
            raise InvalidInputError(f"window around t={centers[k]:.4g} holds fewer than two samples")
        seg = delta[a:b]
        coarse[k] = seg.mean(axis=0)
        upper[k] = seg.max(axis=0)
        lower[k] = seg.min(axis=0)
    return CoarseSeries(centers, coarse, upper, lower, window)


def relaxation_time(series: TimeSeries | CoarseSeries, criterion: float = 0.01, *, window: float = 20 * T0,
                    centers=None, asymptote=None, ions=None) -> RelaxationResult:
    """Earliest time after which the upper envelope stays within ``criterion`` of the asymptote.

    The asymptote is the steady-state fluctuation when given, otherwise the
    last coarse-grained value. The chain's relaxation time is the largest
    over ``ions`` (all ions by default).
    """
    cs = series if isinstance(series, CoarseSeries) else coarse_grain(series, window, centers)
    if asymptote is None:
        asym = cs.coarse[-1]
    else:
        asym = np.asarray(asymptote.delta if isinstance(asymptote, MomentProfile) else asymptote, dtype=float)
    ions = np.arange(cs.coarse.shape[1]) if ions is None else np.asarray(ions)
    dev = np.abs(cs.upper[:, ions] / asym[ions] - 1)
    ok = dev <= criterion
    per_ion = np.empty(len(ions))
    for j in range(len(ions)):
        if not ok[-1, j]:
            raise NotRelaxedError(
                f"ion {ions[j] + 1} not within {criterion:.0%} of its asymptote at t={cs.times[-1]:.3g}; "
                "extend the time grid", discrepancy=float(dev[-1, j]))
        bad = np.nonzero(~ok[:, j])[0]
        per_ion[j] = 0.0 if len(bad) == 0 else cs.times[bad[-1] + 1]
    return RelaxationResult(float(per_ion.max()), per_ion, cs, asym, criterion, ions)


def relaxation_run(system: ChainSystem, config, *, kappa: float = 0.0, T_bg: float | None = None,
                   T_init: float | None = None, criterion: float = 0.01, window: float = 20 * T0,
                   t_max: float | None = None, n_log: int = 200, samples: int = 16, ions=None, seed: int = 0):
    """Evolve from a mode-thermal state and extract the relaxation time.

    ``T_init`` defaults to twice the cooling temperature. ``t_max`` defaults to
    25 e-folding times of the slowest damped eigenvalue, rounded into the
    ``[1e3, 1e7] t0`` range. Returns ``(RelaxationResult, TimeSeries, steady)``.
    """
    baths = assign_baths(config, system.n_ions, kappa, T_bg)
    theta = noise_strengths(system.modes, baths)
    spec = system.spectrum(baths.gamma)
    steady = steady_state(spec, theta, baths.gamma, alpha=system.alpha, direction=system.direction)
    if t_max is None:
        slow = float(np.min(spec.lam.real))
        t_max = float(np.clip(25.0 / slow, 1e3 * T0, 1e7 * T0))
    fine_until = min(1e3 * T0, t_max / 10)
    times, centres = relaxation_grid(t_max=t_max, n_log=n_log, window=window, samples=samples,
                                     fine_until=max(fine_until, 2 * window), seed=seed)
    init = thermal_profile(system.modes, 2 * config.T_cool if T_init is None else T_init, system.alpha)
    series = evolve_second_moments(spec, theta, baths.gamma, init, times, with_momenta=False)
    res = relaxation_time(series, criterion, window=window, centers=centres, asymptote=steady, ions=ions)
    return res, series, steady
