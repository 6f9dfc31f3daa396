import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fitsim.config import SystemConfig

settings.register_profile("fitsim", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fitsim"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def baseline():
    """Two-site parameters of the basic FIT spectrum."""
    return SystemConfig(omega_p=0.5, omega=5.0, omega_c=5.0, v_ab=15.0)


def random_density(n, rng, rank=None):
    a = rng.normal(size=(n, rank or n)) + 1j * rng.normal(size=(n, rank or n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda l: l.split("]")[0][-2:]):
            terminalreporter.write_line(line)
