import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion and fail on FAIL."""

    def record(number, name, ok, detail, elapsed, budget):
        in_time = elapsed < budget
        verdict = "PASS" if ok and in_time else "FAIL"
        line = f"criterion {number:2d} {verdict} {name}: {detail} ({elapsed:.3f} s, budget {budget:g} s)"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
        assert in_time, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
