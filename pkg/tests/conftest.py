import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance_results: list[tuple[str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if report.when == "call":
        _acceptance_results.append((item.name, report.passed))
    elif report.when == "setup" and report.failed:
        _acceptance_results.append((item.name, False))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _acceptance_results:
        terminalreporter.write_line(f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'}")


@pytest.fixture(scope="session")
def fake_scorer_path() -> Path:
    return FIXTURES / "fake_scorer.py"


@pytest.fixture()
def fake_scorer_cmd(fake_scorer_path) -> str:
    """Command template for the deterministic fixture scorer."""
    return f"{sys.executable} {fake_scorer_path} {{request}} {{response}}"
