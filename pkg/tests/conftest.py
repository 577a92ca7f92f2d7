import pytest

# acceptance checks register their verdict lines here; printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{k:>2}. {ACCEPTANCE_LINES[k]}")


@pytest.fixture
def report():
    def _report(criterion: int, *checks):
        lines = [c.line() for c in checks]
        verdict = "PASS" if all(c.passed for c in checks) else "FAIL"
        text = lines[0] if len(lines) == 1 else f"[{verdict}] " + " | ".join(lines)
        ACCEPTANCE_LINES[criterion] = text
        print(f"criterion {criterion}: {text}")
        return all(c.passed for c in checks)
    return _report
