from pathlib import Path

import pytest
from hypothesis import settings

from ybtransducer.config import default_ensemble
from ybtransducer.spin import default_params

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(scope="session")
def model():
    return default_params()


@pytest.fixture(scope="session")
def ens():
    return default_ensemble()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
