import json
from pathlib import Path

import pytest

from crharq.config import load_config

ROOT = Path(__file__).resolve().parents[1]
BASELINE = ROOT / "configs" / "baseline.toml"

# Filled by test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def oracles():
    return json.loads((ROOT / "tests" / "data" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def baseline():
    return load_config(BASELINE)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
