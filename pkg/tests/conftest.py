import numpy as np
import pytest

from acpoisson.scenarios import build_scenario


@pytest.fixture(scope="session")
def s1():
    return build_scenario("s1")


@pytest.fixture(scope="session")
def s3():
    return build_scenario("s3")


@pytest.fixture(scope="session")
def s4():
    return build_scenario("s4")


@pytest.fixture(scope="session")
def product():
    return build_scenario("product")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
