import numpy as np
import pytest
from hypothesis import settings

from prhf.grid import Grid

settings.register_profile("prhf", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("prhf")


@pytest.fixture(scope="session")
def g16():
    return Grid(16, 8.0)


@pytest.fixture(scope="session")
def g32():
    return Grid(32, 16.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, rng, smooth=True):
    """Random complex field; ``smooth`` keeps only the lower half of the band."""
    f = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if smooth:
        F = np.fft.fftn(f)
        F[grid.kabs > 0.5 * grid.k_nyquist] = 0
        f = np.fft.ifftn(F)
    return f


# PASS/FAIL lines of the acceptance suite, repeated in the terminal summary
ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture(scope="session")
def acceptance_lines(request):
    return request.config.stash[ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
