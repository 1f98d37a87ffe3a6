import numpy as np
import pytest

from hybridgl.encoder.toy import ToyEncoder
from hybridgl.synthetic import generate_scenes


@pytest.fixture(scope="session")
def toy():
    return ToyEncoder(seed=0)


@pytest.fixture(scope="session")
def scenes():
    return generate_scenes(12, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
