import sys
from pathlib import Path

# Make the sibling helper modules (synth, acceptance_log) importable no
# matter which directory pytest is launched from.
sys.path.insert(0, str(Path(__file__).resolve().parent))

import acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
