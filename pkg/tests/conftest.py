import os

import pytest

RUN_SLOW = os.getenv("MISRE_RUN_SLOW") == "1"
SLOW_REPEATS = int(os.getenv("MISRE_SLOW_REPEATS", "100"))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo acceptance runs (set MISRE_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set MISRE_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def slow_repeats():
    return SLOW_REPEATS
