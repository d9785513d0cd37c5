"""Brute-force check of the moment equations by stochastic integration.

The chain is linear, so its second moments obey the same equations as the
classical Langevin system ``x' = p``, ``p' = -A x - gamma p + xi`` with
``<xi_i(t) xi_j(t')> = 2 gamma_i Theta_i delta_ij delta(t - t')``. Sampling
that SDE therefore checks the closed-form quantum moments directly: a single
oscillator settles at ``<x^2> = Theta / omega^2 = (n_B + 1/2) / omega``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baths import BathAssignment
from .dynamics import MomentProfile
from .errors import InstabilityError, InvalidInputError
from .modes import ModeMatrix

BLOCK = 256  # trajectories per random stream
BLOWUP = 1e6


@dataclass
class TrajectoryEnsemble:
    n_traj: int
    dt: float
    seed: int
    xx: np.ndarray  # per-ion means, d0 units
    pp: np.ndarray
    xx_se: np.ndarray
    pp_se: np.ndarray
    alpha: float = 1.0
    t_end: float = 0.0
    average_from: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_ions(self) -> int:
        return len(self.xx)


@dataclass
class ComparisonReport:
    z_xx: np.ndarray
    z_pp: np.ndarray | None
    passed: bool
    max_abs_z: float
    frac_above_2: float
    meta: dict = field(default_factory=dict)

    def to_json(self, path):
        doc = {"passed": self.passed, "max_abs_z": self.max_abs_z, "frac_above_2": self.frac_above_2,
               "z_xx": self.z_xx.tolist(), "z_pp": None if self.z_pp is None else self.z_pp.tolist(),
               "meta": self.meta}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)


def max_stable_dt(A, gamma) -> float:
    """Largest step allowed: ``0.05 / max(omega_k, gamma_i)``."""
    w = np.sqrt(np.linalg.eigvalsh(A).max())
    return 0.05 / max(w, float(np.max(gamma)))


def _run_block(A, gamma, theta, x0_sd, p0_sd, n, dt, n_steps, k_avg, rng, scale0):
    N = A.shape[0]
    x = rng.standard_normal((n, N)) * x0_sd
    p = rng.standard_normal((n, N)) * p0_sd
    c1 = np.exp(-gamma * dt)
    c2 = np.sqrt(theta * (1 - c1**2))
    h = 0.5 * dt
    sx = np.zeros((n, N))
    sp = np.zeros((n, N))
    count = 0
    check = max(1, n_steps // 50)
    for step in range(1, n_steps + 1):
        # B A O A B
        p -= h * (x @ A)
        x += h * p
        p = c1 * p + c2 * rng.standard_normal((n, N))
        x += h * p
        p -= h * (x @ A)
        if step >= k_avg:
            sx += x * x
            sp += p * p
            count += 1
        if step % check == 0:
            m = float(np.mean(x * x))
            if not math.isfinite(m) or m > BLOWUP * scale0:
                raise InstabilityError(f"trajectory moments blew up at step {step}; reduce dt")
    return sx / count, sp / count


def simulate_trajectories(A: ModeMatrix | np.ndarray, baths: BathAssignment, theta, init: MomentProfile | None,
                          n_traj: int, dt: float, t_end: float, seed: int, *, average_from: float | None = None,
                          alpha: float = 1.0, workers: int = 1) -> TrajectoryEnsemble:
    """Integrate ``n_traj`` independent trajectories with a BAOAB splitting.

    Each trajectory starts from independent Gaussians with the diagonal
    variances of ``init`` (zero when ``init`` is None). Moments are averaged
    over all steps with ``t >= average_from`` (only the final step when
    None), then over trajectories; standard errors come from the spread of
    the per-trajectory values. Trajectories are split into blocks of
    ``BLOCK``, each with its own Philox stream spawned from ``seed``, so the
    result does not depend on ``workers``.
    """
    A = np.asarray(A.entries if isinstance(A, ModeMatrix) else A, dtype=float)
    gamma = np.asarray(baths.gamma, dtype=float)
    theta = np.asarray(theta, dtype=float)
    N = A.shape[0]
    if gamma.shape != (N,) or theta.shape != (N,):
        raise InvalidInputError("baths, theta and mode matrix sizes differ")
    if n_traj < 100:
        raise InvalidInputError(f"need n_traj >= 100, got {n_traj}")
    if not (dt > 0 and t_end > 0):
        raise InvalidInputError("dt and t_end must be positive")
    if dt > max_stable_dt(A, gamma) * (1 + 1e-12):
        raise InvalidInputError(f"dt={dt:.3g} exceeds 0.05/max(omega, gamma)={max_stable_dt(A, gamma):.3g}")
    n_steps = int(round(t_end / dt))
    k_avg = n_steps if average_from is None else max(1, int(math.ceil(average_from / dt)))
    if k_avg > n_steps:
        raise InvalidInputError("average_from lies beyond t_end")
    a2 = alpha**2
    x0 = np.zeros(N) if init is None else np.sqrt(np.asarray(init.xx) / a2)
    p0 = np.zeros(N) if init is None else np.sqrt(np.asarray(init.pp) / a2)
    w2 = np.linalg.eigvalsh(A)
    scale0 = max(float(np.mean(x0**2)), float(np.max(theta)) / w2.min(), 1e-300)

    sizes = [BLOCK] * (n_traj // BLOCK) + ([n_traj % BLOCK] if n_traj % BLOCK else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def block(i):
        rng = np.random.Generator(np.random.Philox(streams[i]))
        return _run_block(A, gamma, theta, x0, p0, sizes[i], dt, n_steps, k_avg, rng, scale0)

    idx = list(range(len(sizes)))
    if workers > 1 and len(idx) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(block, idx))
    else:
        parts = [block(i) for i in idx]
    X = np.concatenate([q[0] for q in parts]) * a2
    P = np.concatenate([q[1] for q in parts]) * a2
    root = math.sqrt(n_traj)
    return TrajectoryEnsemble(n_traj, dt, seed, X.mean(0), P.mean(0), X.std(0, ddof=1) / root,
                              P.std(0, ddof=1) / root, alpha, n_steps * dt,
                              None if average_from is None else k_avg * dt,
                              {"steps": n_steps, "blocks": len(sizes)})


def compare_with_closed_form(ensemble: TrajectoryEnsemble, profile: MomentProfile, *,
                             include_momenta: bool = True) -> ComparisonReport:
    """Per-ion z-scores; passes iff every ``|z| < 4`` and under 10% exceed 2."""
    if len(profile.xx) != ensemble.n_ions:
        raise InvalidInputError("ensemble and profile refer to different chain sizes")

    def z(emp, se, ref):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (emp - ref) / se
        return np.where(emp == ref, 0.0, out)

    zx = z(ensemble.xx, ensemble.xx_se, np.asarray(profile.xx))
    zp = z(ensemble.pp, ensemble.pp_se, np.asarray(profile.pp)) if include_momenta and profile.pp is not None \
        else None
    allz = np.abs(np.r_[zx, zp] if zp is not None else zx)
    frac = float(np.mean(allz > 2))
    ok = bool(np.all(allz < 4) and frac < 0.1)
    return ComparisonReport(zx, zp, ok, float(allz.max()), frac,
                            {"n_traj": ensemble.n_traj, "dt": ensemble.dt, "seed": ensemble.seed})
