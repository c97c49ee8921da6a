import numpy as np
import pytest

from flockeuler.fields import TorusGrid
from flockeuler.model import FrictionLaw, KernelSpec, ModelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid16():
    return TorusGrid(2, 16)


@pytest.fixture
def flock_model():
    return ModelSpec(attraction=KernelSpec("cosine", 0.5), alignment=KernelSpec("cosine", 1.0),
                     friction=FrictionLaw("saturating", 2.0))


def bump_state(grid, amp=0.2, vel=0.1):
    from flockeuler.dynamics import FluidState

    x, y = grid.coords[:2]
    rho = 1 + amp * np.cos(np.pi * x) * np.cos(np.pi * y)
    u = vel * np.array([np.sin(np.pi * y), np.sin(np.pi * x)])
    return FluidState.from_velocity(grid, rho, u)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
