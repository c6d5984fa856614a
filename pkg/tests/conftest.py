import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ftsreg", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ftsreg")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    # keep truth-oracle caches out of the home directory during unit tests
    monkeypatch.setenv("FTSREG_CACHE", str(tmp_path_factory.getbasetemp() / "cache"))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
