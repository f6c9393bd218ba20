"""Shared pytest configuration.

Collects the outcome of every ``test_criterion_*`` test in the acceptance
module and prints one pass/fail line per criterion at the end of the run,
so the acceptance verdict is readable without scrolling the full log.
"""

import re

_CRITERIA = {}
_NODE_TO_NUM = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if not item.module.__name__.endswith("test_acceptance"):
            continue
        match = re.match(r"test_criterion_(\d+)", item.name)
        if not match:
            continue
        number = int(match.group(1))
        doc = (item.function.__doc__ or "").strip().splitlines()
        _CRITERIA[number] = {"desc": doc[0] if doc else "", "outcome": "NOT RUN"}
        _NODE_TO_NUM[item.nodeid] = number


def pytest_runtest_logreport(report):
    number = _NODE_TO_NUM.get(report.nodeid)
    if number is None:
        return
    entry = _CRITERIA[number]
    if report.when == "setup" and (report.failed or report.skipped):
        entry["outcome"] = "FAIL (setup)" if report.failed else "SKIP"
    elif report.when == "call":
        if report.passed:
            entry["outcome"] = "PASS"
        elif report.failed:
            entry["outcome"] = "FAIL"
        elif report.skipped:
            entry["outcome"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {entry['outcome']:<12} {entry['desc']}"
        )
