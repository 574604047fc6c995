import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one line per acceptance criterion after capture ends."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORTED", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
