"""Prints a one-line verdict per acceptance criterion after the test run."""

_PREFIX = "test_criterion_"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for status, label in (
        ("passed", "PASS"),
        ("failed", "FAIL"),
        ("error", "FAIL"),
        ("skipped", "SKIP"),
    ):
        for rep in terminalreporter.stats.get(status, ()):
            name = getattr(rep, "nodeid", "").split("::")[-1]
            if not name.startswith(_PREFIX):
                continue
            if status == "passed" and rep.when != "call":
                continue
            reason = ""
            if status == "skipped":
                longrepr = rep.longrepr
                reason = longrepr[2] if isinstance(longrepr, tuple) else str(longrepr)
                if reason.startswith("Skipped: "):
                    reason = reason[len("Skipped: "):]
            verdicts[name] = (label, reason)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(verdicts):
        label, reason = verdicts[name]
        line = f"{label}  {name}"
        if reason:
            line += f"  ({reason})"
        terminalreporter.write_line(line)
