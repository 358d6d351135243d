import pytest

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key = marker.args
    if report.when == "setup" and report.failed or report.when == "call":
        # a criterion fails if any of its tests fails
        passed = _outcomes.get(key, True) and report.passed
        _outcomes[key] = passed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), passed in sorted(_outcomes.items()):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")
