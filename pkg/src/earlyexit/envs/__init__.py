from earlyexit.envs.scenario import (
    BUILTIN_SCENARIOS,
    EnvError,
    Scenario,
    ScenarioEnv,
    ScenarioError,
    SubgoalDef,
    Transition,
    builtin_scenario,
    evaluate_subgoals,
    load_scenario,
)
from earlyexit.envs.bridge import BridgeEnv

__all__ = [
    "BUILTIN_SCENARIOS",
    "BridgeEnv",
    "EnvError",
    "Scenario",
    "ScenarioEnv",
    "ScenarioError",
    "SubgoalDef",
    "Transition",
    "builtin_scenario",
    "evaluate_subgoals",
    "load_scenario",
]
