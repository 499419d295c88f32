import pytest

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call" and not report.failed:
        return
    n = mark.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if report.failed and call.excinfo is not None:
        detail = f"{detail} [{call.excinfo.typename}: {str(call.excinfo.value).splitlines()[0][:100]}]".strip()
    ok, details = _criteria.get(n, (True, []))
    _criteria[n] = (ok and report.passed, details + [detail] if detail else details)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, details = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {'; '.join(details)}")
