import sys


def pytest_terminal_summary(terminalreporter):
    # Acceptance tests record one PASS/FAIL line each; echo them after the
    # run so they are visible without -s.
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.section("acceptance")
        for line in verdicts:
            terminalreporter.write_line(line)
