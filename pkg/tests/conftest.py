import numpy as np
import pytest

from mflaser.config import initial_density
from mflaser.hilbert import SpaceDescriptor, build_operators
from mflaser.lindblad import DESK_PARAMS, LaserParams


@pytest.fixture(scope="session")
def desk():
    return DESK_PARAMS


@pytest.fixture(scope="session")
def small_space():
    return SpaceDescriptor(8)


@pytest.fixture(scope="session")
def small_ops(small_space):
    return build_operators(small_space)


@pytest.fixture(scope="session")
def desk_rho_small(small_space, desk):
    return initial_density("desk", small_space, desk)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    X = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, dim):
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (X + X.conj().T)


def field_limited_density(rng, space, n_top=4):
    """Random density supported on Fock levels below ``n_top``."""
    k = 2 * n_top
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[:k, :k] = random_density(rng, k)
    return rho


def params_strategy_values():
    return [LaserParams.from_gamma_d(0.0, 0.3, 0.7, 1.1, 0.4), LaserParams.from_gamma_d(1.3, -0.6, 2.0, 0.5, -0.7)]


# acceptance results, printed one line per criterion at the end of the session
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
