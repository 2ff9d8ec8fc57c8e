import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args or report.when != "call":
        return
    details = [str(v) for k, v in item.user_properties if k == "detail"]
    item.config.stash[_RESULTS].append((marker.args[0], report.passed, report.duration, details))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, duration, details in sorted(results, key=lambda r: int(r[0].split()[0])):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {label}  ({duration:.1f}s)"
        if details:
            line += "  " + "; ".join(details)
        terminalreporter.write_line(line)
