"""Collects one verdict line per acceptance criterion and prints them at the end."""

VERDICTS: list[str] = []


def record(number: int, passed: bool, detail: str) -> bool:
    VERDICTS.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    print(VERDICTS[-1])
    return passed


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
