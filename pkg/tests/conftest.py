import pytest

_VERDICTS = []


@pytest.fixture(scope="session")
def verdicts():
    """Acceptance lines, printed together at the end of the session."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
