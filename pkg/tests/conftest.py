import os

import pytest

from ringsquid import gpe, studies
from ringsquid.config import TargetTrapParams, make_grid

os.environ.setdefault("RINGSQUID_THREADS", "1")

IMPRINT_KAPPAS = (-0.4, -0.25, -0.1, 0.1, 0.25, 0.4)


@pytest.fixture(scope="session")
def sodium():
    return TargetTrapParams()


@pytest.fixture(scope="session")
def mf_grid():
    return make_grid(*studies.MF_GRID)


@pytest.fixture(scope="session")
def free_ground(sodium, mf_grid):
    """Barrier-free ground state of the default trap."""
    return gpe.imaginary_time_ground_state(sodium, mf_grid, barrier=False)


@pytest.fixture(scope="session")
def barrier_params(sodium, free_ground):
    return studies.barrier_for_fraction(sodium, 0.8, free_ground.chemical_potential_mu)


@pytest.fixture(scope="session")
def barrier_ground(barrier_params, mf_grid):
    return gpe.imaginary_time_ground_state(barrier_params, mf_grid, barrier=True)


@pytest.fixture(scope="session")
def free_expansion(free_ground):
    """Full-interaction expansion to 10, 15, 20, 25 ms."""
    times_s = [10e-3, 15e-3, 20e-3, 25e-3]
    outs, images = studies.mf_expansion_images(free_ground, times_s)
    return times_s, outs, images


@pytest.fixture(scope="session")
def imprint_points(barrier_params, barrier_ground):
    """n = 0 imprint sweep at the 0.8 mu barrier, measured after 17 ms."""
    points, _ = studies.imprint_sweep(barrier_params, IMPRINT_KAPPAS, 17e-3, state=barrier_ground)
    return points


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
