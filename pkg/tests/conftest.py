"""Collects ``criterion``-marked outcomes and prints one PASS/FAIL line each."""

import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion")
    config.stash[_KEY] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    failed_early = report.when == "setup" and not report.passed
    if report.when == "call" or failed_early:
        detail = dict(item.user_properties).get("measured", "")
        item.config.stash[_KEY].append((*mark.args, report.passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, passed, detail in rows:
        line = f"{'PASS' if passed else 'FAIL'} {cid:<10} {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
