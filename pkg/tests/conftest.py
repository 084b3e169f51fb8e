import warnings

import pytest

from bbtune import fixtures
from bbtune.sampler import build_tables
from bbtune.tuner import tune


def _tuned(name, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return tune(fixtures.load(name), **kw)


@pytest.fixture(scope="session")
def motzkin_singular():
    return _tuned("motzkin", singular=True)


@pytest.fixture(scope="session")
def motzkin_table(motzkin_singular):
    return build_tables(motzkin_singular)


@pytest.fixture(scope="session")
def binary_table():
    return build_tables(_tuned("binary", singular=True))


@pytest.fixture(scope="session")
def even_a_table():
    return build_tables(_tuned("even_a", singular=True))


@pytest.fixture(scope="session")
def even_length_table():
    return build_tables(_tuned("even_length", singular=True))


@pytest.fixture(scope="session")
def running_result():
    return _tuned("running", size=100, freqs={"U": 0.4})


@pytest.fixture(scope="session")
def tuned():
    return _tuned


_ACCEPTANCE: list = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
