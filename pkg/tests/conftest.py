import numpy as np
import pytest

from hkframe.calibration import build_calibration, make_bump_pair
from hkframe.cubes import build_cubes, subcube_grid
from hkframe.generate import generate, space_and_operator
from hkframe.verify import Context, make_battery


def make_context(kind, *args, delta=0.5, beta0=2.0, j0=1, **kw):
    doc = generate(kind, *args, **kw)
    space, op = space_and_operator(doc)
    cubes = build_cubes(space, delta, 0)
    calib = build_calibration(op, make_bump_pair(delta, beta0))
    grid = subcube_grid(cubes, j0)
    return Context(op, cubes, calib, grid, doc=doc)


@pytest.fixture(scope="session")
def c8():
    return make_context("cycle", 8)


@pytest.fixture(scope="session")
def c32():
    return make_context("cycle", 32)


@pytest.fixture(scope="session")
def c64():
    ctx = make_context("cycle", 64)
    ctx.battery = make_battery(ctx.op, 0, 20, ctx.calib)
    return ctx


@pytest.fixture(scope="session")
def gasket3():
    return make_context("gasket", 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
