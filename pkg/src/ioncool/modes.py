"""Coupling matrices, normal modes and the damped drift matrix.

For one direction the linearised equations of motion read
``x' = p``, ``p' = -A x - diag(gamma) p + noise``. The drift matrix
``Omega = [[0, -I], [A, diag(gamma)]]`` generates ``q' = -Omega q + noise``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .chain import ChainEquilibrium
from .errors import DegeneracyError, InstabilityError, InvalidInputError

AXIAL = "axial"
TRANSVERSE = "transverse"
_COULOMB_SIGN = {AXIAL: -2.0, TRANSVERSE: 1.0}

# cond(U) above this is flagged on the spectrum
COND_WARN = 1e10


def _direction(direction: str) -> str:
    d = str(direction).lower()
    if d in ("z", "axial"):
        return AXIAL
    if d in ("x", "y", "transverse", "radial"):
        return TRANSVERSE
    raise InvalidInputError(f"unknown direction {direction!r}")


@dataclass
class ModeMatrix:
    direction: str
    entries: np.ndarray
    source: ChainEquilibrium | None = None
    omega_x: float | None = None

    @property
    def n_ions(self) -> int:
        return self.entries.shape[0]


@dataclass
class NormalModes:
    G: np.ndarray  # columns are mode vectors
    omega: np.ndarray  # ascending
    direction: str = AXIAL

    def to_csv(self, path):
        n = len(self.omega)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "omega"] + [f"ion{i + 1}" for i in range(n)])
            for k in range(n):
                w.writerow([k + 1, repr(float(self.omega[k]))] + [repr(float(v)) for v in self.G[:, k] ** 2])


@dataclass
class DriftSpectrum:
    lam: np.ndarray
    U: np.ndarray
    U_inv: np.ndarray
    gamma: np.ndarray
    omega_matrix: np.ndarray
    cond: float = 1.0
    flags: list = field(default_factory=list)

    @property
    def n_ions(self) -> int:
        return len(self.gamma)

    def reconstruction_error(self) -> float:
        rec = (self.U * self.lam) @ self.U_inv
        return float(np.linalg.norm(rec - self.omega_matrix) / np.linalg.norm(self.omega_matrix))


def build_mode_matrix(eq: ChainEquilibrium, direction: str, omega_x: float | None = None) -> ModeMatrix:
    direction = _direction(direction)
    z = np.asarray(eq.positions, dtype=float)
    n = len(z)
    if direction == TRANSVERSE:
        if omega_x is None or not omega_x > 0:
            raise InvalidInputError("transverse mode matrix needs omega_x > 0")
        beta = np.full(n, float(omega_x) ** 2)
    else:
        beta = np.asarray(eq.axial_curvatures, dtype=float)
    c = _COULOMB_SIGN[direction]
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    a = c / d**3
    a[np.diag_indices(n)] = beta - a.sum(axis=1)
    return ModeMatrix(direction, a, eq, omega_x if direction == TRANSVERSE else None)


def normal_modes(A: ModeMatrix) -> NormalModes:
    m = np.asarray(A.entries)
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise InvalidInputError("mode matrix is not symmetric")
    w2, G = np.linalg.eigh(0.5 * (m + m.T))
    if w2[0] <= 0:
        if A.direction == TRANSVERSE:
            raise InstabilityError(
                f"transverse mode matrix has eigenvalue {w2[0]:.3g} <= 0: zig-zag instability")
        raise InstabilityError(f"axial mode matrix has eigenvalue {w2[0]:.3g} <= 0: chain not confined")
    # deterministic sign: largest-magnitude component positive
    idx = np.argmax(np.abs(G), axis=0)
    G = G * np.sign(G[idx, np.arange(G.shape[1])])
    return NormalModes(G, np.sqrt(w2), A.direction)


def build_drift_matrix(A: ModeMatrix | np.ndarray, gamma) -> np.ndarray:
    a = np.asarray(A.entries if isinstance(A, ModeMatrix) else A, dtype=float)
    n = a.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
    if np.any(gamma < 0):
        raise InvalidInputError("damping rates must be non-negative")
    om = np.zeros((2 * n, 2 * n))
    om[:n, n:] = -np.eye(n)
    om[n:, :n] = a
    om[n:, n:] = np.diag(gamma)
    return om


def spectral_decomposition(Omega: np.ndarray, *, tol: float = 1e-8) -> DriftSpectrum:
    """Eigen-decompose the drift matrix as ``U diag(lam) U^-1``.

    ``U^-1`` comes from an LU solve against the identity. A decomposition whose
    reconstruction misses ``Omega`` by more than ``tol`` (relative) is treated
    as defective.
    """
    Omega = np.asarray(Omega, dtype=float)
    n2 = Omega.shape[0]
    lam, U = scipy.linalg.eig(Omega)
    try:
        lu = scipy.linalg.lu_factor(U)
        U_inv = scipy.linalg.lu_solve(lu, np.eye(n2, dtype=U.dtype))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DegeneracyError("eigenvector matrix is singular; perturb gamma slightly") from exc
    gamma = np.diag(Omega[n2 // 2:, n2 // 2:]).copy()
    spec = DriftSpectrum(lam, U, U_inv, gamma, Omega)
    spec.cond = float(np.linalg.cond(U))
    err = spec.reconstruction_error()
    if not np.isfinite(err) or err > tol:
        raise DegeneracyError(
            f"drift matrix looks defective (reconstruction error {err:.2e}); perturb gamma slightly")
    if spec.cond > COND_WARN:
        spec.flags.append(f"ill-conditioned eigenbasis: cond(U)={spec.cond:.2e}")
    return spec


def drift_spectrum(A: ModeMatrix, gamma) -> DriftSpectrum:
    return spectral_decomposition(build_drift_matrix(A, gamma))
