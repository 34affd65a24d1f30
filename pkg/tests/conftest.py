import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def suite7():
    from evigrid.sim import standard_suite

    return standard_suite(7)


@pytest.fixture(scope="session")
def suite7_reprs(suite7):
    from evigrid.pipeline import represent_dataset

    return represent_dataset(suite7)


@pytest.fixture(scope="session")
def cli_chain(tmp_path_factory):
    """Stage directories from one full command-line run on the seed-7 standard suite."""
    from chain import run_chain

    return run_chain(tmp_path_factory.mktemp("chain"))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(RESULTS):
            terminalreporter.write_line(line)
