import pytest

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, list[str]] = {}


@pytest.fixture
def report():
    def record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE.setdefault(criterion, []).append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[n]:
            terminalreporter.write_line(line)
