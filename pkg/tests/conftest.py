"""Shared fixtures and the acceptance-criteria summary hook."""

import numpy as np
import pytest

from gslift.pipeline import warm_up_renderer


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(name): end-to-end acceptance criterion; each marked test "
        "contributes one PASS/FAIL line to the terminal summary",
    )
    config._acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    results = item.config._acceptance_results
    if report.when == "call":
        if report.passed:
            results[name] = "PASS"
        elif report.skipped:
            results[name] = "SKIP"
        else:
            results[name] = "FAIL"
    elif report.when == "setup" and not report.passed:
        results[name] = "SKIP" if report.skipped else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in results.items():
        terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture(scope="session")
def warm_renderer():
    """Compile the compositing kernel once so JIT time never lands in a test."""
    warm_up_renderer()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
