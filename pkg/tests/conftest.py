import mpmath
import pytest

import qacert  # noqa: F401  (sets the working precision)
from qacert import weights


@pytest.fixture(autouse=True)
def _fixed_precision():
    with mpmath.workprec(256):
        yield


@pytest.fixture(scope="session")
def log_power():
    return weights.catalog("log_power", {"delta": 1})


@pytest.fixture(scope="session")
def gevrey2():
    return weights.catalog("gevrey", {"s": 2})


@pytest.fixture(scope="session")
def constant_one():
    return weights.catalog("constant_one")


_acceptance = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        num = int(name.split("_")[2])
        lines = [ln for ln in report.capstdout.splitlines() if ln.startswith("ACCEPTANCE")]
        _acceptance[num] = lines[-1] if lines else f"ACCEPTANCE {num:2d} {'PASS' if report.passed else 'FAIL'}"


def pytest_terminal_summary(terminalreporter):
    if _acceptance:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_acceptance):
            terminalreporter.write_line(_acceptance[num])
