import os
import re
import sys

sys.path.insert(0, os.path.dirname(__file__))

_CRITERION = re.compile(r"test_criterion_(\d+)_")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the recorded measurements."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "error":
                continue
            match = _CRITERION.search(rep.nodeid)
            if not match:
                continue
            detail = "; ".join(f"{v}" for k, v in rep.user_properties if k == "detail")
            status = "PASS" if outcome == "passed" else "FAIL"
            lines.append((int(match.group(1)), f"criterion {int(match.group(1)):2d}: {status}  {detail}"))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
