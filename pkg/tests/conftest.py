import math

import numpy as np
import pytest

from ioncool.baths import DOPPLER_T
from ioncool.chain import HarmonicTrap, fit_quartic, solve_equilibrium, spacing_window
from ioncool.dynamics import ChainSystem
from ioncool.units import build_unit_system

UNITS = build_unit_system()
OMEGA_X = 2 * math.pi * 5.1e6 / UNITS.omega0
OMEGA_Z20 = 2 * math.pi * 34e3 / UNITS.omega0
OMEGA_Z121 = 2 * math.pi * 8.4e3 / UNITS.omega0
T_D = DOPPLER_T


@pytest.fixture(scope="session")
def units():
    return UNITS


@pytest.fixture(scope="session")
def chain20():
    return solve_equilibrium(HarmonicTrap(OMEGA_Z20), 20)


@pytest.fixture(scope="session")
def harmonic121():
    return solve_equilibrium(HarmonicTrap(OMEGA_Z121), 121)


@pytest.fixture(scope="session")
def quartic121():
    return fit_quartic(121, 1.0, spacing_window(121, 10))


def system(eq, direction, alpha=UNITS.alpha):
    return ChainSystem.from_equilibrium(eq, direction, OMEGA_X if direction == "transverse" else None, alpha)


@pytest.fixture(scope="session")
def systems20(chain20):
    return {d: system(chain20, d) for d in ("axial", "transverse")}


@pytest.fixture(scope="session")
def quartic_systems(quartic121):
    return {d: system(quartic121.equilibrium, d) for d in ("axial", "transverse")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
