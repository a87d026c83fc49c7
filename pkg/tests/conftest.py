def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # surface the acceptance verdict lines even though capture ate the prints
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.line(line)
