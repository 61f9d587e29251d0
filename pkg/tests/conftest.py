from pathlib import Path

import pytest

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "icexp" / "scenarios"


@pytest.fixture
def scenarios():
    return SCENARIOS


def pytest_terminal_summary(terminalreporter):
    mod = None
    for name, m in list(__import__("sys").modules.items()):
        if name.endswith("test_acceptance") and hasattr(m, "RESULTS"):
            mod = m
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.pytest_acceptance_lines():
        terminalreporter.write_line(line)
