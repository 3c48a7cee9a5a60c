import pytest

CRITERIA: list[str] = []


@pytest.fixture
def report():
    def emit(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        CRITERIA.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: (int(s.split()[2].rstrip(":").split(".")[0]), s)):
            terminalreporter.write_line(line)
