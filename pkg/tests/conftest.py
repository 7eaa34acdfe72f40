import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sceno.testbeds import BRAKING_SPACE, builtin_blackbox


@pytest.fixture(scope="session")
def braking_bb():
    return builtin_blackbox("braking", BRAKING_SPACE)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible PASS/FAIL line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.module.__name__.endswith("test_acceptance"):
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[{status}] {item.name}")
