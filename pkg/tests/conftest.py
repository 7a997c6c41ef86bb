"""Shared fixtures plus the acceptance summary.

Every test in test_acceptance.py is one acceptance criterion; the terminal
summary prints one PASS/FAIL/SKIP line per criterion after the run.
"""

from __future__ import annotations

import pytest

from earlyexit.controllers import ControllerConfig, exit_instruction_for
from earlyexit.envs import ScenarioEnv, builtin_scenario
from earlyexit.trajectory import TaskSpec

_acceptance: dict[str, object] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        _acceptance[report.nodeid] = report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    labels = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    for nodeid, report in _acceptance.items():
        label = labels.get(report.outcome, report.outcome.upper())
        terminalreporter.write_line(f"{label}  {nodeid.split('::')[-1]}")


def scenario_task(name: str, controller: ControllerConfig | None = None) -> TaskSpec:
    sc = builtin_scenario(name)
    return TaskSpec(
        env_id=sc.env_id,
        instruction=sc.instruction,
        goal=sc.goal,
        example=sc.example,
        subgoal_count=sc.subgoal_count,
        exit_instruction=exit_instruction_for(controller) if controller else None,
    )


@pytest.fixture
def chainworld_k2_env():
    return ScenarioEnv(builtin_scenario("chainworld_k2"))


@pytest.fixture
def chainworld_k4_env():
    return ScenarioEnv(builtin_scenario("chainworld_k4"))


@pytest.fixture
def looptrap_env():
    return ScenarioEnv(builtin_scenario("looptrap"))


def react(thought: str, action: str) -> str:
    return f"Thought: {thought}\n\nAction: {action}"
