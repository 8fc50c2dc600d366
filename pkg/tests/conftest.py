"""Shared fixtures and the acceptance report hook.

Acceptance tests append one line per criterion via the `acceptance_report`
fixture; the hook replays every line in a dedicated section of the terminal
summary so pass/fail status is visible even with output capture on.
"""

import pytest

from homfrag import AtomicModel, PhiEvaluator, PowerTailBinaryModel, UniformBinaryModel


@pytest.fixture(scope="session")
def ub():
    return UniformBinaryModel()


@pytest.fixture(scope="session")
def dyadic():
    return AtomicModel([([0.5, 0.5], 1.0)])


@pytest.fixture(scope="session")
def quaternary():
    return AtomicModel([([0.25, 0.25, 0.25, 0.25], 1.0)])


@pytest.fixture(scope="session")
def ptail():
    return PowerTailBinaryModel(epsilon=0.01)


@pytest.fixture(scope="session")
def ub_eval(ub):
    return PhiEvaluator(ub)


@pytest.fixture(scope="session")
def dyadic_eval(dyadic):
    return PhiEvaluator(dyadic)


def pytest_configure(config):
    config._criterion_lines = []


@pytest.fixture
def acceptance_report(request):
    """Returns report(num, name, ok, detail): records one criterion line."""

    def report(num, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"[criterion {num:02d}] {name}: {status}"
        if detail:
            line += f"  ({detail})"
        request.config._criterion_lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
