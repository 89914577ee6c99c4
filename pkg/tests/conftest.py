import numpy as np
import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_runtest_makereport(item, call):
    crit = item.get_closest_marker("criterion")
    if crit is None or call.when != "call":
        return
    num, title = crit.args
    ok = call.excinfo is None
    prev = _ACCEPTANCE.get(num)
    detail = ""
    if not ok:
        lines = str(call.excinfo.value).splitlines()
        detail = lines[0][:160] if lines else call.excinfo.typename
    if prev is None:
        _ACCEPTANCE[num] = [title, ok, [] if ok else [f"{item.name}: {detail}"]]
    else:
        prev[1] = prev[1] and ok
        if not ok:
            prev[2].append(f"{item.name}: {detail}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion covered by the test")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok, notes = _ACCEPTANCE[num]
        tr.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}")
        for n in notes:
            tr.write_line(f"              {n}")
