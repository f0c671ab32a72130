import sys

import pytest

from landis.grid import GridSpec


@pytest.fixture(scope="session")
def grid64():
    return GridSpec(radius=2.0, n=64)


@pytest.fixture(scope="session")
def grid128():
    return GridSpec(radius=2.0, n=128)



def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
