"""Shared fixtures and the per-criterion acceptance summary."""

from collections import OrderedDict

import pytest

CRITERIA = OrderedDict([
    (1, "Gaussian reduction of the MLSI integrand"),
    (2, "MLSI nonnegativity across the potential catalogue"),
    (3, "Lebesgue LSI equality cases and optimal lambda"),
    (4, "homogeneous closed form vs optimized lambda"),
    (5, "discrete conjugate accuracy and double conjugation"),
    (6, "second-order remainder of the sup-convolution"),
    (7, "large-entropy constant selection"),
    (8, "power MLSI constant"),
    (9, "transport inequality and assignment solvers"),
    (10, "determinism and exit codes"),
])

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        bucket = _outcomes.setdefault(crit, {"passed": 0, "failed": 0, "details": []})
        if report.outcome == "passed" and report.when == "call":
            bucket["passed"] += 1
        elif report.outcome != "passed":
            bucket["failed"] += 1
        bucket["details"].extend(v for k, v in report.user_properties if k == "detail")


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        b = _outcomes.get(n)
        if b is None:
            tr.write_line(f"criterion {n:>2} NOT RUN  {title}")
            continue
        status = "PASS" if b["failed"] == 0 and b["passed"] > 0 else "FAIL"
        tr.write_line(f"criterion {n:>2} {status}  {title} ({b['passed']} passed, {b['failed']} failed)")
        for d in b["details"]:
            tr.write_line(f"              {d}")


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement to the acceptance summary."""
    def _add(text):
        record_property("detail", text)
    return _add
