"""Acceptance summary: one PASS/FAIL line per ``@pytest.mark.criterion`` test."""

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "detail": []})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["detail"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        r = _RESULTS[number]
        detail = "; ".join(r["detail"])
        line = f"{'PASS' if r['ok'] else 'FAIL'} criterion {number}: {r['title']}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
