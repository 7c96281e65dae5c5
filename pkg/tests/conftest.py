import numpy as np
import pytest

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_CRITERIA_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    results = item.config.stash[_CRITERIA_KEY]
    prev_ok, _, prev_detail = results.get(number, (True, title, ""))
    details = "; ".join(d for d in (prev_detail, detail) if d)
    results[number] = (prev_ok and rep.passed, title, details)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_CRITERIA_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
