from __future__ import annotations

import pytest

from defl.config import load_paper_defaults
from defl.delay_model import LearningParams
from defl.planner import PlanInputs

_ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def record_criterion():
    """Record one outcome line for the acceptance summary."""

    def record(number: int, name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.setdefault(number, []).append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[number]
        ok = all(p for _, p, _ in checks)
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}")
        for name, passed, detail in checks:
            mark = "ok  " if passed else "FAIL"
            terminalreporter.write_line(f"    {mark} {name}" + (f": {detail}" if detail else ""))


@pytest.fixture(scope="session")
def default_cfg():
    return load_paper_defaults()


@pytest.fixture
def example_inputs():
    """T_cm = 5 ms, G/f = 3e7/2e9, M = 10, eps = 0.01, nu = c = 1."""
    return PlanInputs(t_cm=0.005, ratios=(3e7 / 2e9,), learning=LearningParams(epsilon=0.01, M=10))
