import math

import numpy as np
import pytest

from ioncool.chain import HarmonicTrap, solve_equilibrium
from ioncool.errors import DegeneracyError, InstabilityError, InvalidInputError
from ioncool.modes import (ModeMatrix, build_drift_matrix, build_mode_matrix, drift_spectrum, normal_modes,
                           spectral_decomposition)

from conftest import OMEGA_X, OMEGA_Z20


@pytest.fixture(scope="module")
def modes20(chain20):
    return {d: normal_modes(build_mode_matrix(chain20, d, OMEGA_X)) for d in ("axial", "transverse")}


def test_centre_of_mass_and_breathing(modes20):
    ax = modes20["axial"].omega
    tr = modes20["transverse"].omega
    assert ax[0] == pytest.approx(OMEGA_Z20, rel=1e-10)
    assert ax[1] == pytest.approx(math.sqrt(3) * OMEGA_Z20, rel=1e-10)
    # transverse: COM at omega_x, rocking at sqrt(omega_x^2 - omega_z^2)
    assert tr[-1] == pytest.approx(OMEGA_X, rel=1e-12)
    assert tr[-2] == pytest.approx(math.sqrt(OMEGA_X**2 - OMEGA_Z20**2), rel=1e-10)


def test_frozen_mode_edges(modes20):
    assert modes20["axial"].omega[-1] == pytest.approx(2.8264120311524095, rel=1e-9)
    assert modes20["transverse"].omega[0] == pytest.approx(35.487702585981594, rel=1e-12)


def test_mode_vectors_orthonormal(modes20):
    for m in modes20.values():
        np.testing.assert_allclose(m.G.T @ m.G, np.eye(20), atol=1e-12)
        idx = np.argmax(np.abs(m.G), axis=0)
        assert np.all(m.G[idx, np.arange(20)] > 0)


def test_mode_matrix_symmetric(chain20):
    for d in ("axial", "transverse"):
        a = build_mode_matrix(chain20, d, OMEGA_X).entries
        np.testing.assert_array_equal(a, a.T)


def test_transverse_needs_omega_x(chain20):
    with pytest.raises(InvalidInputError):
        build_mode_matrix(chain20, "transverse")
    with pytest.raises(InvalidInputError):
        build_mode_matrix(chain20, "sideways")


def test_zigzag_instability():
    eq = solve_equilibrium(HarmonicTrap(0.2), 30)
    with pytest.raises(InstabilityError, match="zig-zag"):
        normal_modes(build_mode_matrix(eq, "transverse", 0.5))


def test_asymmetric_matrix_rejected():
    with pytest.raises(InvalidInputError):
        normal_modes(ModeMatrix("axial", np.array([[1.0, 0.1], [0.0, 1.0]])))


def test_drift_matrix_layout():
    om = build_drift_matrix(np.array([[2.0, -0.5], [-0.5, 2.0]]), [0.1, 0.0])
    np.testing.assert_array_equal(om[:2, 2:], -np.eye(2))
    np.testing.assert_array_equal(om[2:, 2:], np.diag([0.1, 0.0]))
    with pytest.raises(InvalidInputError):
        build_drift_matrix(np.eye(2), [-0.1, 0.0])


def test_spectrum_reconstruction(chain20):
    g = np.zeros(20)
    g[[0, 1, -2, -1]] = 0.1
    for d in ("axial", "transverse"):
        spec = drift_spectrum(build_mode_matrix(chain20, d, OMEGA_X), g)
        assert spec.reconstruction_error() < 1e-8
        assert np.all(spec.lam.real > -1e-12)


def test_single_oscillator_eigenvalues():
    w, g = 1.3, 0.4
    spec = spectral_decomposition(build_drift_matrix(np.array([[w**2]]), [g]))
    expect = g / 2 + np.array([1j, -1j]) * math.sqrt(w**2 - g**2 / 4)
    np.testing.assert_allclose(np.sort_complex(spec.lam), np.sort_complex(expect), rtol=1e-12)


def test_critical_damping_is_defective():
    w = 0.7
    with pytest.raises(DegeneracyError):
        spectral_decomposition(build_drift_matrix(np.array([[w**2]]), [2 * w]))


def test_modes_csv(tmp_path, modes20):
    p = tmp_path / "modes.csv"
    modes20["axial"].to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0].split(",")[:3] == ["k", "omega", "ion1"]
    weights = np.array([float(x) for x in rows[1].split(",")[2:]])
    assert weights.sum() == pytest.approx(1.0)
