import pytest

from platekit import analysis as an

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True, scope="session")
def _isolated_cache(tmp_path_factory):
    """Keep the reference cache out of $HOME unless the caller chose a location."""
    import os

    if "PLATEKIT_CACHE" not in os.environ:
        os.environ["PLATEKIT_CACHE"] = str(tmp_path_factory.mktemp("platekit_cache"))
    yield


@pytest.fixture(scope="session")
def p1():
    return an.get_problem("p1")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
