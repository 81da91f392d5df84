import os
import sys

sys.path.insert(0, os.path.dirname(__file__))
sys.setrecursionlimit(20000)

DATA = os.path.join(os.path.dirname(__file__), "data")
GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    lines = dict(mod.RESULTS)
    for rep in terminalreporter.stats.get("failed", []):
        name = rep.nodeid.rsplit("::", 1)[-1]
        if name.startswith("test_a") and name[6].isdigit():
            key = f"A{name[6]}"
            lines.setdefault(key, f"{key} FAIL: {rep.longrepr.reprcrash.message if rep.longrepr else 'error'}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
