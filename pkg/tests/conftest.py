"""Shared pytest configuration.

Registers a terminal-summary hook that prints one PASS/FAIL line per
acceptance criterion (recorded via ``record_criterion``), so the
verdicts are visible even when pytest captures stdout.
"""

import numpy as np
import pytest

_CRITERIA = {}


def record_criterion(name, ok, detail):
    """Record an acceptance-criterion verdict for the summary hook."""
    _CRITERIA[name] = (bool(ok), str(detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_CRITERIA):
        ok, detail = _CRITERIA[name]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{name} {verdict} — {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
