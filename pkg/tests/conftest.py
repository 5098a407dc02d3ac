import numpy as np
import pytest

from kirchhoff import radial, solver
from kirchhoff import functional as F

import oracles


@pytest.fixture(scope="session")
def default_grid():
    return radial.make_grid()


@pytest.fixture(scope="session")
def cubic_params():
    return F.ProblemParams(a=1.0, b=1.0, p=3.0, lam=1.0)


@pytest.fixture(scope="session")
def cubic_ground_state(cubic_params):
    return solver.solve_limit_ground_state(cubic_params, 1.0)


@pytest.fixture(scope="session")
def cubic_shooting():
    return oracles.shooting_ground_state(a=1.0, b=1.0, p=3.0, lam=1.0, v=1.0)


def random_smooth_profile(grid, rng, bumps=3):
    r = grid.nodes
    vals = np.zeros_like(r)
    for _ in range(bumps):
        c = rng.uniform(0, 6)
        w = rng.uniform(0.6, 3.0)
        vals += rng.uniform(0.2, 2.0) * np.exp(-(((r - c) / w) ** 2))
    return radial.RadialFunction.from_samples(grid, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
