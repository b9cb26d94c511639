import sys

import pytest

from plan3d.hardware import SMNG_P2
from plan3d.model import PRESETS


@pytest.fixture
def hw():
    return SMNG_P2


@pytest.fixture
def gpt175b():
    return PRESETS["gpt-175b"]


@pytest.fixture
def gpt20b():
    return PRESETS["gpt-20b"]


@pytest.fixture
def gpt3b():
    return PRESETS["gpt-3.6b"]



def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results):
            terminalreporter.write_line(line)
