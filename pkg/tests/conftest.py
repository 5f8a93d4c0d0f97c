import pytest

ACCEPTANCE_REPORT: list[str] = []


@pytest.fixture
def report():
    return ACCEPTANCE_REPORT.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)
