import functools

import numpy as np
import pytest

from l2halo.dynamics import PhysicalConstants
from l2halo.exosystem import OrbitParams, build_matrices, exo_init
from l2halo.regulation import design_gains
from l2halo.scenarios import preset, run_scenario

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def cached_run(scenario, controller, **overrides):
    """Closed-loop runs are expensive; share them across test modules."""
    from l2halo.scenarios import replace

    cfg = preset(scenario, controller)
    if overrides:
        cfg = replace(cfg, **overrides)
    return run_scenario(cfg)


@pytest.fixture(scope="session")
def consts():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def circ():
    return PhysicalConstants(ecc=0.0)


@pytest.fixture(scope="session")
def orbit():
    return OrbitParams()


@pytest.fixture(scope="session")
def mats(orbit, consts):
    return build_matrices(orbit, consts)


@pytest.fixture(scope="session")
def w0(orbit):
    return exo_init(orbit)


@pytest.fixture(scope="session")
def delta_bar(consts):
    return consts.hours_to_nd(0.65)


@pytest.fixture(scope="session")
def gains(consts, delta_bar):
    return design_gains(consts, delta_bar)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_exostates(rng, n):
    """Exostates with unit-norm blocks (the orbit's invariant sphere)."""
    a = rng.uniform(0.0, 2.0 * np.pi, size=(n, 2))
    return np.column_stack([np.cos(a[:, 0]), np.sin(a[:, 0]), np.cos(a[:, 1]), np.sin(a[:, 1])])
