import sys

import pytest

from barycentric.fixtures import random_barycentric_fixtures, random_disk_fixtures


@pytest.fixture(scope="session")
def bary_fixtures():
    return random_barycentric_fixtures(12, seed=0)


@pytest.fixture(scope="session")
def disk_fixtures_inside():
    return random_disk_fixtures(6, seed=1, side="inside")


@pytest.fixture(scope="session")
def disk_fixtures_outside():
    return random_disk_fixtures(6, seed=2, side="outside")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
