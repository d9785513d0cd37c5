import numpy as np
import pytest

from ioncool.baths import BathAssignment, assign_baths, noise_strengths
from ioncool.config import build_equilibrium, load_preset
from ioncool.dynamics import ChainSystem, MomentProfile, ideal_profile, solve_steady
from ioncool.errors import InvalidInputError
from ioncool.oracle import compare_with_closed_form, max_stable_dt, simulate_trajectories


def _single(gamma=1.0, theta=2.0):
    baths = BathAssignment(np.array([gamma]), np.array([1.0]), np.array([0]), np.array([], dtype=int))
    return np.array([[4.0]]), baths, np.array([theta])


def test_single_oscillator_equipartition():
    A, baths, theta = _single()
    ens = simulate_trajectories(A, baths, theta, None, 256, 0.0125, 30.0, 1, average_from=10.0)
    # <x^2> = Theta / omega^2, <p^2> = Theta
    assert abs(ens.xx[0] - 0.5) < 3 * ens.xx_se[0]
    assert abs(ens.pp[0] - 2.0) < 3 * ens.pp_se[0]
    assert ens.xx_se[0] < 0.02


def test_zero_noise_decays():
    A, baths, _ = _single()
    init = MomentProfile(np.array([1.0]), np.array([1.0]))
    ens = simulate_trajectories(A, baths, np.zeros(1), init, 100, 0.0125, 40.0, 0)
    assert ens.xx[0] < 1e-12 and ens.pp[0] < 1e-12


def test_seed_determinism_and_worker_independence():
    A, baths, theta = _single()
    a = simulate_trajectories(A, baths, theta, None, 600, 0.0125, 5.0, 3, average_from=1.0)
    b = simulate_trajectories(A, baths, theta, None, 600, 0.0125, 5.0, 3, average_from=1.0, workers=3)
    c = simulate_trajectories(A, baths, theta, None, 600, 0.0125, 5.0, 4, average_from=1.0)
    assert a.xx[0] == b.xx[0] and a.pp_se[0] == b.pp_se[0]
    assert a.xx[0] != c.xx[0]
    assert a.meta["blocks"] == 3


def test_step_halving_agrees():
    A, baths, theta = _single()
    a = simulate_trajectories(A, baths, theta, None, 256, 0.0125, 20.0, 5, average_from=5.0)
    b = simulate_trajectories(A, baths, theta, None, 256, 0.00625, 20.0, 6, average_from=5.0)
    assert abs(a.xx[0] - b.xx[0]) < 4 * np.hypot(a.xx_se[0], b.xx_se[0])


def test_perturbed_reference_fails():
    A, baths, theta = _single()
    ens = simulate_trajectories(A, baths, theta, None, 256, 0.0125, 30.0, 1, average_from=10.0)
    exact = MomentProfile(np.array([0.5]), np.array([2.0]))
    assert compare_with_closed_form(ens, exact).passed
    off = MomentProfile(exact.xx * 1.1, exact.pp * 1.1)
    rep = compare_with_closed_form(ens, off)
    assert not rep.passed and rep.max_abs_z > 4


def test_input_validation():
    A, baths, theta = _single()
    with pytest.raises(InvalidInputError):
        simulate_trajectories(A, baths, theta, None, 99, 0.01, 1.0, 0)
    with pytest.raises(InvalidInputError):
        simulate_trajectories(A, baths, theta, None, 100, 2 * max_stable_dt(A, baths.gamma), 1.0, 0)
    with pytest.raises(InvalidInputError):
        simulate_trajectories(A, baths, theta, None, 100, 0.01, 1.0, 0, average_from=2.0)
    with pytest.raises(InvalidInputError):
        simulate_trajectories(A, baths, np.ones(2), None, 100, 0.01, 1.0, 0)


def test_max_stable_dt():
    assert max_stable_dt(np.diag([4.0, 1.0]), [0.1, 0.1]) == pytest.approx(0.025)
    assert max_stable_dt(np.diag([4.0, 1.0]), [0.0, 10.0]) == pytest.approx(0.005)


@pytest.fixture(scope="module")
def five_ion():
    cfg = load_preset("oracle5")
    eq, _ = build_equilibrium(cfg)
    s = ChainSystem.from_equilibrium(eq, "axial", None, cfg.units.alpha)
    cooling = cfg.cooling.build()
    baths = assign_baths(cooling, 5, cfg.heating.kappa, cfg.heating.T_bg)
    theta = noise_strengths(s.modes, baths)
    o = cfg.oracle
    ens = simulate_trajectories(s.A, baths, theta, ideal_profile(s, cooling), o.n_traj,
                                max_stable_dt(s.A.entries, baths.gamma), o.t_end, cfg.seed,
                                average_from=o.average_from, alpha=s.alpha, workers=4)
    return ens, solve_steady(s, baths), baths, theta


@pytest.mark.slow
def test_five_ion_chain_matches_closed_form(five_ion):
    ens, steady, _, _ = five_ion
    rep = compare_with_closed_form(ens, steady)
    assert rep.passed, rep.max_abs_z
    assert np.all(np.abs(rep.z_xx) < 4)


@pytest.mark.slow
def test_five_ion_energy_balance(five_ion):
    ens, _, baths, theta = five_ion
    a2 = ens.alpha**2
    # power in from each reservoir, gamma_i (Theta_i - <p_i^2>), sums to zero in steady state
    flux = baths.gamma * (theta - ens.pp / a2)
    se = np.sqrt(np.sum((baths.gamma * ens.pp_se / a2) ** 2))
    assert abs(flux.sum()) < 4 * se
    assert flux[baths.heated].sum() > 0 > flux[baths.cooled].sum()
