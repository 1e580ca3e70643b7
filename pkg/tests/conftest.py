import numpy as np
import pytest

from fracfb import backend, set_backend
from fracfb.field import build_grid, omega_ball


CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[CRITERIA] = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])


@pytest.fixture
def criterion(request):
    """Record and print the PASS/FAIL line of one acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        request.config.stash[CRITERIA][number] = line
        print(line)
        return passed

    return record


@pytest.fixture(autouse=True)
def _restore_backend():
    name = backend()
    yield
    set_backend(name)


@pytest.fixture
def grid64():
    return build_grid(64, 1.0, 0.01)


@pytest.fixture
def grid128():
    return build_grid(128, 1.0, 0.01)


@pytest.fixture
def ball_half(grid64):
    return omega_ball(grid64, 0.5)


def disc_mask(grid, radius, center=(0.0, 0.0)):
    X, Y = grid.centers()
    return np.hypot(X - center[0], Y - center[1]) < radius
