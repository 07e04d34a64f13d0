"""Shared pytest wiring: always-visible acceptance criterion summary."""

CRITERION_RESULTS = []


def record_criterion(number: int, description: str, ok: bool) -> None:
    CRITERION_RESULTS.append((number, description, ok))


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, ok in sorted(CRITERION_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"[criterion {number}] {status} — {description}")
