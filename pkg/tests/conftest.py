import pytest

CRITERIA: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one acceptance line; printed again in the terminal summary."""
    def record(n: int, ok: bool, detail: str):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
        CRITERIA[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
