import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical checks")
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    num, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    _CRITERIA[num] = (rep.passed, title, rep.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, title, secs, detail = _CRITERIA[num]
        tr.write_line(f"criterion {num:>2}  {'PASS' if ok else 'FAIL'}  {title}  [{secs:.1f} s]  {detail}")
