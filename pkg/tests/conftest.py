import sys

import numpy as np
import pytest

from lpvembed.bench import get_case
from lpvembed.pipeline import RunConfig, prepare
from lpvembed.sysmodel import parse_system

TOY_TEXT = """\
states 2
inputs 1
outputs 1
domain x1 -1 1
domain x2 -1 1
f[1] = x2 + x1*sin(x2)
f[2] = -x1 + exp(x1*x2) - 1
f[3] = x1*cos(x2)
g[1][1] = 1 + x1^2
g[2][1] = cos(x1)
"""


@pytest.fixture(scope="session")
def toy_sys():
    return parse_system(TOY_TEXT)


@pytest.fixture(scope="session")
def example1():
    return get_case("example1-s1").system()


@pytest.fixture(scope="session")
def robot():
    return get_case("example2").system()


@pytest.fixture(scope="session")
def toy_stages(toy_sys):
    return prepare(RunConfig(pf=2, pg=1, samples=400, gamma=0.0), toy_sys)


@pytest.fixture(scope="session")
def example1_stages(example1):
    case = get_case("example1-s1")
    return prepare(case.config(), example1)


@pytest.fixture(scope="session")
def robot_stages(robot):
    case = get_case("example2")
    return prepare(case.config(samples=1500), robot)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_box_points(sys, rng, count, zero_fraction=0.2):
    """Uniform points in the system box; some coordinates are set to exactly 0."""
    lo, hi = np.array(sys.lower), np.array(sys.upper)
    X = rng.uniform(lo, hi, size=(count, sys.n))
    mask = rng.random(X.shape) < zero_fraction
    X[mask] = 0.0
    return X


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(results):
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    passed = sum(ok for _, ok, _ in results)
    terminalreporter.write_line(f"{passed}/{len(results)} criteria passed")
