"""Runtime and evaluation harness for early-exit agent behavior in text environments."""

from .agent import ParseError, ParsedTurn, parse_response, run_episode
from .backends import (
    BackendError,
    ChatMessage,
    Completion,
    GenerationParams,
    HttpBackend,
    ScriptedBackend,
)
from .controllers import (
    ControllerConfig,
    ControllerConfigError,
    exit_instruction_for,
    make_controller,
    recommended_config,
)
from .envs import (
    BUILTIN_SCENARIOS,
    BridgeEnv,
    EnvError,
    ScenarioEnv,
    builtin_scenario,
    load_scenario,
)
from .metrics import (
    EnvResult,
    MetricsError,
    PairedResult,
    RunReport,
    aggregate,
    classify_exit,
    env_result,
    pair_results,
    progress_degradation,
    progress_rate,
    redundant_steps,
    report_from_trajectories,
)
from .orchestrator import (
    BackendSpec,
    BridgeTask,
    EpisodeSpec,
    HandoffRecord,
    SuiteConfig,
    SuiteError,
    episodes_from_config,
    run_suite,
    run_with_handoff,
    run_with_reflexion,
)
from .trajectory import (
    ExitCause,
    Step,
    TaskSpec,
    Trajectory,
    TrajectoryError,
    VerifierVerdict,
    read_trajectories,
    write_trajectories,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_SCENARIOS",
    "BackendError",
    "BackendSpec",
    "BridgeEnv",
    "BridgeTask",
    "ChatMessage",
    "Completion",
    "ControllerConfig",
    "ControllerConfigError",
    "EnvError",
    "EnvResult",
    "EpisodeSpec",
    "ExitCause",
    "GenerationParams",
    "HandoffRecord",
    "HttpBackend",
    "MetricsError",
    "PairedResult",
    "ParseError",
    "ParsedTurn",
    "RunReport",
    "ScenarioEnv",
    "ScriptedBackend",
    "Step",
    "SuiteConfig",
    "SuiteError",
    "TaskSpec",
    "Trajectory",
    "TrajectoryError",
    "VerifierVerdict",
    "aggregate",
    "builtin_scenario",
    "classify_exit",
    "env_result",
    "episodes_from_config",
    "exit_instruction_for",
    "load_scenario",
    "make_controller",
    "pair_results",
    "parse_response",
    "progress_degradation",
    "progress_rate",
    "recommended_config",
    "redundant_steps",
    "report_from_trajectories",
    "run_episode",
    "run_suite",
    "run_with_handoff",
    "run_with_reflexion",
    "write_trajectories",
]
