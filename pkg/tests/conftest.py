import pytest

# filled by test_acceptance.py: (criterion number, title, passed, detail)
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail}")


@pytest.fixture
def record_criterion():
    def record(num: int, title: str, ok: bool, detail: str = ""):
        ACCEPTANCE_LINES.append((num, title, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {num}. {title}: {detail}")
        assert ok, f"criterion {num} failed: {detail}"
    return record
