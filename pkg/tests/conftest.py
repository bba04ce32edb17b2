"""Terminal summary for the acceptance criteria: one line per criterion."""

_BUDGETS_S = {
    "01": 1, "02": 5, "03": 30, "04": 30, "05": 60,
    "06": 60, "07": 120, "08": 10, "09": 60, "10": 120,
}

_outcomes = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_outcomes):
        outcome, duration = _outcomes[name]
        parts = name.split("_")
        number = parts[2]
        label = f"criterion {number} ({' '.join(parts[3:])})"
        budget = _BUDGETS_S.get(number)
        budget_note = f", budget {budget}s" if budget else ""
        terminalreporter.write_line(
            f"{label}: {outcome.upper()} ({duration:.2f}s{budget_note})")
