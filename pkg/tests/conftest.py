import pytest

from fivenum.estimators import normalization_constants
from fivenum.orderstats import SampleSizeQ, order_stat_moments_quadrature

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def quad_moments():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = order_stat_moments_quadrature(SampleSizeQ.from_n(n))
        return cache[n]

    return get


@pytest.fixture(scope="session")
def constants():
    return normalization_constants


@pytest.fixture
def criterion():
    """Record one acceptance criterion; the summary prints at session end."""

    def record(name, ok, detail=""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
