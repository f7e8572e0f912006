import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

FIXTURE_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "fixtures")

# acceptance lines collected by test_acceptance, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
