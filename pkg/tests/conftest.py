import sys

import numpy as np
import pytest

from porous_harnack import ModelSpec, SpectralMap, build_basis


@pytest.fixture(scope="session")
def sine16():
    return build_basis("dirichlet_sine", 16, 128)


@pytest.fixture(scope="session")
def sine8():
    return build_basis("dirichlet_sine", 8)


@pytest.fixture(scope="session")
def sine4():
    return build_basis("dirichlet_sine", 4)


@pytest.fixture(scope="session")
def hermite6():
    return build_basis("hermite_ou", 6, spectral_map=SpectralMap("shifted_power", 2.0, 1.0))


@pytest.fixture(scope="session")
def porous():
    return ModelSpec()


@pytest.fixture(scope="session")
def linear():
    return ModelSpec(r=1.0, theta=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
