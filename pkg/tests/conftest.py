ACCEPTANCE_RESULTS = []


def record_acceptance(number: int, description: str, ok: bool) -> None:
    ACCEPTANCE_RESULTS.append((number, description, ok))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, ok in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number}: {verdict} — {description}")
