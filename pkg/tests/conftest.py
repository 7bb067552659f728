import random

import pytest

from ringledger.group import Profile, get_group


@pytest.fixture
def toy():
    return get_group(Profile.TOY)


@pytest.fixture
def toy_large():
    return get_group(Profile.TOY_LARGE)


@pytest.fixture
def full():
    return get_group(Profile.FULL)


@pytest.fixture(params=[Profile.TOY_LARGE, Profile.FULL], ids=["toy-large", "full"])
def group(request):
    return get_group(request.param)


@pytest.fixture
def rng():
    return random.Random(20240611)


# -- acceptance summary ------------------------------------------------------

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    ok = _criteria.get(number, (title, True))[1]
    if report.failed:
        ok = False
    elif report.when == "call" and report.skipped:
        ok = False
    if report.failed or report.when == "call":
        _criteria[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
