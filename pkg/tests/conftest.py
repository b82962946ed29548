import os

import pytest
from hypothesis import HealthCheck, settings

from carnot.group import load_group

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GROUPS = ["heisenberg(1)", "heisenberg(2)", "engel", "free_nilpotent(2,3)"]


@pytest.fixture(scope="session")
def heis():
    return load_group("heisenberg(1)")


@pytest.fixture(scope="session", params=GROUPS)
def any_group(request):
    return load_group(request.param)


ACCEPTANCE = []


def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
    line = f"criterion {number:>2} {title}: {'PASS' if passed else 'FAIL'}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
