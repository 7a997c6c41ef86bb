"""Suite runner and multi-phase flows.

Runs many environments against a backend (optionally in parallel), persists
one trajectory per environment as JSONL next to CSV/markdown reports, and
implements the two budget-sharing flows: weak-to-strong handoff, which keeps
the live environment and hands the transcript to a stronger model, and
reflexion, which resets a fresh environment and retries after a
self-critique. Both phases of either flow draw from one shared step budget.

Episode failures are contained: a crashing environment or backend produces
an error-tagged trajectory, never an aborted suite.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .agent import render_transcript, run_episode
from .backends import (
    BackendError,
    ChatMessage,
    GenerationParams,
    HttpBackend,
    ScriptedBackend,
)
from .controllers import (
    ControllerConfig,
    exit_instruction_for,
    make_controller,
)
from .envs import (
    BUILTIN_SCENARIOS,
    BridgeEnv,
    ScenarioEnv,
    builtin_scenario,
    load_scenario,
)
from .metrics import (
    RunReport,
    aggregate,
    env_result,
    pair_results,
    write_env_csv,
    write_paired_csv,
    write_summary_md,
)
from .prompts import (
    REFLECTION_PREFIX,
    SYSTEM_PROMPT,
    handoff_note,
    reflection_message,
)
from .trajectory import (
    EARLY_EXIT_CAUSES,
    ExitCause,
    Step,
    TaskSpec,
    Trajectory,
    n_total,
    read_trajectories,
    write_trajectories,
)

log = logging.getLogger(__name__)

FLOWS = ("plain", "handoff", "reflexion")

DEFAULT_LIVE_TIMEOUT = 300.0

DEFAULT_BRIDGE_INSTRUCTION = (
    "Your task is to interact with an external environment to accomplish a "
    "specific task. With each interaction, you will receive an observation. "
    "Your role is to decide on the next action to make progress toward the "
    "goal."
)

DEFAULT_BRIDGE_EXAMPLE = (
    "Your task is to: turn on the lamp.\n"
    "You are in a study. A lamp sits on the desk, switched off.\n"
    "Thought: The lamp has a switch I can use.\n"
    "Action: turn on the lamp\n"
    "Observation: The lamp glows warmly. Task complete."
)


class SuiteError(Exception):
    """Invalid suite configuration or output-layout failure."""


@dataclass(frozen=True)
class BackendSpec:
    """Declarative backend choice, serializable into config snapshots.

    Scripted scripts map env_id (or "default") to role -> completion list;
    roles in use are "policy", "verifier", "strong" (handoff continuation),
    "reflection", and "retry" (reflexion second phase). API keys are never
    part of a spec; the HTTP backend reads its key from the environment.
    """

    kind: str = "scripted"
    base_url: str = ""
    model: str = "scripted"
    temperature: float = 0.1
    max_tokens: int = 256
    scripts: Mapping[str, Mapping[str, tuple[str, ...]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "http"):
            raise SuiteError(f"unknown backend kind: {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise SuiteError("http backend needs a base_url")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "base_url": self.base_url,
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "scripts": {
                env_id: {role: list(lines) for role, lines in roles.items()}
                for env_id, roles in self.scripts.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BackendSpec":
        scripts = {
            env_id: {role: tuple(lines) for role, lines in roles.items()}
            for env_id, roles in dict(doc.get("scripts", {})).items()
        }
        return cls(
            kind=doc.get("kind", "scripted"),
            base_url=doc.get("base_url", ""),
            model=doc.get("model", "scripted"),
            temperature=doc.get("temperature", 0.1),
            max_tokens=doc.get("max_tokens", 256),
            scripts=scripts,
        )


@dataclass(frozen=True)
class BridgeTask:
    """One external environment reached through a bridge adapter command."""

    env_id: str
    cmd: tuple[str, ...]
    instruction: str = DEFAULT_BRIDGE_INSTRUCTION
    example: str = DEFAULT_BRIDGE_EXAMPLE

    def to_dict(self) -> dict:
        return {
            "env_id": self.env_id,
            "cmd": list(self.cmd),
            "instruction": self.instruction,
            "example": self.example,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BridgeTask":
        return cls(
            env_id=doc["env_id"],
            cmd=tuple(doc["cmd"]),
            instruction=doc.get("instruction", DEFAULT_BRIDGE_INSTRUCTION),
            example=doc.get("example", DEFAULT_BRIDGE_EXAMPLE),
        )


@dataclass(frozen=True)
class SuiteConfig:
    scenarios: tuple[str, ...] = ()
    bridges: tuple[BridgeTask, ...] = ()
    backend: BackendSpec = field(default_factory=BackendSpec)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    flow: str = "plain"
    max_steps: int = 40
    parallelism: int = 1
    output_dir: str = "runs"
    run_label: str = "run"
    # cap on history turns shown to the policy; None shows everything
    history_window: int | None = None
    # per-episode wall clock; None picks 300 s for http, unlimited scripted
    episode_timeout: float | None = None
    weak_model: str = ""
    strong_model: str = ""
    ref_dir: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.backend, Mapping):
            object.__setattr__(self, "backend", BackendSpec.from_dict(self.backend))
        if isinstance(self.controller, Mapping):
            object.__setattr__(
                self, "controller", ControllerConfig(**dict(self.controller))
            )
        if self.flow not in FLOWS:
            raise SuiteError(f"unknown flow: {self.flow!r}")
        if self.max_steps < 1:
            raise SuiteError("max_steps must be >= 1")
        if self.parallelism < 1:
            raise SuiteError("parallelism must be >= 1")

    def to_dict(self) -> dict:
        return {
            "scenarios": list(self.scenarios),
            "bridges": [b.to_dict() for b in self.bridges],
            "backend": self.backend.to_dict(),
            "controller": {
                "mode": self.controller.mode,
                "k": self.controller.k,
                "intrinsic_variant": self.controller.intrinsic_variant,
                "extrinsic_variant": self.controller.extrinsic_variant,
                "history_window": self.controller.history_window,
                "hybrid_patience": self.controller.hybrid_patience,
            },
            "flow": self.flow,
            "max_steps": self.max_steps,
            "parallelism": self.parallelism,
            "output_dir": self.output_dir,
            "run_label": self.run_label,
            "history_window": self.history_window,
            "episode_timeout": self.episode_timeout,
            "weak_model": self.weak_model,
            "strong_model": self.strong_model,
            "ref_dir": self.ref_dir,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SuiteConfig":
        controller_doc = dict(doc.get("controller", {}))
        return cls(
            scenarios=tuple(doc.get("scenarios", ())),
            bridges=tuple(
                BridgeTask.from_dict(b) for b in doc.get("bridges", ())
            ),
            backend=BackendSpec.from_dict(doc.get("backend", {})),
            controller=ControllerConfig(**controller_doc),
            flow=doc.get("flow", "plain"),
            max_steps=doc.get("max_steps", 40),
            parallelism=doc.get("parallelism", 1),
            output_dir=doc.get("output_dir", "runs"),
            run_label=doc.get("run_label", "run"),
            history_window=doc.get("history_window"),
            episode_timeout=doc.get("episode_timeout"),
            weak_model=doc.get("weak_model", ""),
            strong_model=doc.get("strong_model", ""),
            ref_dir=doc.get("ref_dir", ""),
        )


@dataclass(frozen=True)
class HandoffRecord:
    env_id: str
    weak_steps: int
    strong_steps: int
    total_steps: int
    outcome: str
    weak_tokens: int
    strong_tokens: int

    def __post_init__(self) -> None:
        if self.total_steps != self.weak_steps + self.strong_steps:
            raise SuiteError("handoff step accounting does not add up")


@dataclass
class EpisodeSpec:
    """Everything needed to run one environment once.

    ``backends`` maps a role name to a backend instance; scripted suites
    hand out a fresh replay per role so parallel episodes stay deterministic,
    HTTP suites return one shared client for every role.
    """

    env_id: str
    make_env: Callable[[], object]
    backends: Callable[[str], object]
    task: TaskSpec | None = None
    instruction: str = DEFAULT_BRIDGE_INSTRUCTION
    example: str = DEFAULT_BRIDGE_EXAMPLE


def _params(config: SuiteConfig, model: str) -> GenerationParams:
    return GenerationParams(
        model=model,
        temperature=config.backend.temperature,
        max_tokens=config.backend.max_tokens,
    )


def _timeout(config: SuiteConfig) -> float | None:
    if config.episode_timeout is not None:
        return config.episode_timeout
    if config.backend.kind == "http":
        return DEFAULT_LIVE_TIMEOUT
    return None


def _close(env) -> None:
    close = getattr(env, "close", None)
    if close is not None:
        try:
            close()
        except Exception:
            log.debug("ignoring close failure for %r", env, exc_info=True)


def episodes_from_config(config: SuiteConfig) -> list[EpisodeSpec]:
    """Expand a declarative config into runnable episode specs."""
    exit_instruction = exit_instruction_for(config.controller)
    shared_http = None
    if config.backend.kind == "http":
        shared_http = HttpBackend(config.backend.base_url)

    def backends_for(env_id: str) -> Callable[[str], object]:
        if shared_http is not None:
            return lambda role: shared_http
        scripts = config.backend.scripts
        per_env = scripts.get(env_id, scripts.get("default", {}))
        return lambda role: ScriptedBackend(per_env.get(role, ()))

    episodes: list[EpisodeSpec] = []
    for name in config.scenarios:
        scenario = (
            builtin_scenario(name)
            if name in BUILTIN_SCENARIOS
            else load_scenario(name)
        )
        task = TaskSpec(
            env_id=scenario.env_id,
            instruction=scenario.instruction,
            goal=scenario.goal,
            example=scenario.example,
            subgoal_count=scenario.subgoal_count,
            exit_instruction=exit_instruction,
        )
        episodes.append(
            EpisodeSpec(
                env_id=scenario.env_id,
                make_env=(lambda s=scenario: ScenarioEnv(s)),
                backends=backends_for(scenario.env_id),
                task=task,
            )
        )
    for bridge in config.bridges:
        episodes.append(
            EpisodeSpec(
                env_id=bridge.env_id,
                make_env=(
                    lambda b=bridge: BridgeEnv(list(b.cmd), env_id=b.env_id)
                ),
                backends=backends_for(bridge.env_id),
                instruction=bridge.instruction,
                example=bridge.example,
            )
        )
    seen: set[str] = set()
    for spec in episodes:
        if spec.env_id in seen:
            raise SuiteError(f"duplicate env_id in suite: {spec.env_id!r}")
        seen.add(spec.env_id)
    return episodes


def _probe_task(spec: EpisodeSpec, env, config: SuiteConfig) -> TaskSpec:
    """Discover goal and subgoal count from a bridge env's first reset."""
    _, goal, _ = env.reset()
    count = getattr(env, "subgoal_count", 1)
    return TaskSpec(
        env_id=spec.env_id,
        instruction=spec.instruction,
        goal=goal,
        example=spec.example,
        subgoal_count=max(int(count), 1),
        exit_instruction=exit_instruction_for(config.controller),
    )


# --- Multi-phase flows ------------------------------------------------------


def _merge_phases(
    task: TaskSpec,
    max_steps: int,
    first: Trajectory,
    second: Trajectory,
    bridge_step: Step | None = None,
) -> Trajectory:
    """Concatenate two phases (plus an optional non-env step between them)
    into one trajectory ending with the second phase's cause."""
    merged = Trajectory(
        task=task, max_steps=max_steps, initial_observation=first.initial_observation
    )
    for step in first.steps:
        merged = merged.append(step)
    if bridge_step is not None:
        merged = merged.append(bridge_step)
    index_offset = len(merged.steps)
    env_offset = n_total(first)
    for step in second.steps:
        merged = merged.append(replace(step, index=step.index + index_offset))
    for verdict in first.verifier_calls:
        merged = merged.record_verifier(verdict)
    for verdict in second.verifier_calls:
        merged = merged.record_verifier(
            replace(verdict, step=verdict.step + env_offset)
        )
    return merged.finish(second.exit_cause)


def run_with_handoff(
    env,
    weak_backend,
    strong_backend,
    config: SuiteConfig,
    task: TaskSpec,
    verifier_backend=None,
) -> tuple[Trajectory, HandoffRecord]:
    """Let a weak agent run until it exits, then hand the live environment
    to a strong agent for the remaining budget.

    The strong agent starts a fresh conversation: the weak transcript
    appears as read-only context in its instruction, not as its own turns.
    """
    weak_params = _params(config, config.weak_model or config.backend.model)
    controller = make_controller(
        config.controller, verifier_backend or weak_backend, weak_params
    )
    weak = run_episode(
        env,
        weak_backend,
        task,
        controller,
        config.max_steps,
        weak_params,
        phase="weak",
        history_window=config.history_window,
        wall_clock_limit=_timeout(config),
    )
    weak_steps = n_total(weak)
    remaining = config.max_steps - weak_steps
    if weak.exit_cause not in EARLY_EXIT_CAUSES or remaining < 1:
        record = HandoffRecord(
            env_id=task.env_id,
            weak_steps=weak_steps,
            strong_steps=0,
            total_steps=weak_steps,
            outcome=weak.exit_cause.value,
            weak_tokens=weak.total_tokens,
            strong_tokens=0,
        )
        return weak, record

    strong_task = replace(
        task,
        instruction=f"{task.instruction}\n\n{handoff_note(render_transcript(weak))}",
        exit_instruction=None,
    )
    strong_params = _params(config, config.strong_model or config.backend.model)
    strong = run_episode(
        env,
        strong_backend,
        strong_task,
        None,
        remaining,
        strong_params,
        reset_env=False,
        phase="strong",
        history_window=config.history_window,
        wall_clock_limit=_timeout(config),
    )
    combined = _merge_phases(task, config.max_steps, weak, strong)
    record = HandoffRecord(
        env_id=task.env_id,
        weak_steps=weak_steps,
        strong_steps=n_total(strong),
        total_steps=n_total(combined),
        outcome=combined.exit_cause.value,
        weak_tokens=weak.total_tokens,
        strong_tokens=strong.total_tokens,
    )
    return combined, record


def run_with_reflexion(
    env_factory: Callable[[], object],
    backend,
    config: SuiteConfig,
    task: TaskSpec,
    verifier_backend=None,
    reflection_backend=None,
    retry_backend=None,
) -> Trajectory:
    """Retry once after an early exit: critique the failed attempt, reset a
    fresh environment, and rerun with the reflection folded into the
    instruction, all within the remaining step budget."""
    params = _params(config, config.backend.model)
    env = env_factory()
    try:
        controller = make_controller(
            config.controller, verifier_backend or backend, params
        )
        first = run_episode(
            env,
            backend,
            task,
            controller,
            config.max_steps,
            params,
            phase="attempt",
            history_window=config.history_window,
            wall_clock_limit=_timeout(config),
        )
    finally:
        _close(env)

    remaining = config.max_steps - n_total(first)
    if first.exit_cause not in EARLY_EXIT_CAUSES or remaining < 1:
        return first

    messages = [
        ChatMessage("system", SYSTEM_PROMPT),
        ChatMessage(
            "user",
            reflection_message(task.instruction, task.goal, render_transcript(first)),
        ),
    ]
    try:
        completion = (reflection_backend or backend).complete(messages, params)
        reflection = completion.text.strip()
        if not reflection:
            raise BackendError("empty reflection")
    except BackendError as exc:
        log.warning("reflection failed for %s: %s", task.env_id, exc)
        return replace(first, exit_cause=ExitCause.BACKEND_ERROR)

    reflection_step = Step(
        index=len(first.steps) + 1,
        thought=reflection,
        action="",
        observation="",
        subgoal_flags=(False,) * task.subgoal_count,
        success=False,
        prompt_tokens=completion.prompt_tokens,
        completion_tokens=completion.completion_tokens,
        was_env_step=False,
        usage_estimated=completion.usage_estimated,
        phase="reflect",
    )
    retry_task = replace(
        task, instruction=f"{task.instruction}\n\n{REFLECTION_PREFIX}\n{reflection}"
    )
    retry_env = env_factory()
    try:
        retry_controller = make_controller(
            config.controller, verifier_backend or backend, params
        )
        second = run_episode(
            retry_env,
            retry_backend or backend,
            retry_task,
            retry_controller,
            remaining,
            params,
            phase="retry",
            history_window=config.history_window,
            wall_clock_limit=_timeout(config),
        )
    finally:
        _close(retry_env)
    return _merge_phases(task, config.max_steps, first, second, reflection_step)


# --- Suite running ----------------------------------------------------------


def _fallback_trajectory(env_id: str, config: SuiteConfig) -> Trajectory:
    task = TaskSpec(
        env_id=env_id, instruction="", goal="", example="", subgoal_count=1
    )
    empty = Trajectory(task=task, max_steps=config.max_steps)
    return empty.finish(ExitCause.ENV_ERROR)


def _run_one(
    spec: EpisodeSpec, config: SuiteConfig
) -> tuple[Trajectory, HandoffRecord | None]:
    try:
        if config.flow == "reflexion":
            # reflexion owns its environment lifecycle (it resets twice);
            # probe bridge tasks with a throwaway instance first
            task = spec.task
            if task is None:
                probe = spec.make_env()
                try:
                    task = _probe_task(spec, probe, config)
                finally:
                    _close(probe)
            trajectory = run_with_reflexion(
                spec.make_env,
                spec.backends("policy"),
                config,
                task,
                verifier_backend=(
                    spec.backends("verifier")
                    if config.controller.uses_verifier
                    else None
                ),
                reflection_backend=spec.backends("reflection"),
                retry_backend=spec.backends("retry"),
            )
            return trajectory, None

        env = spec.make_env()
        try:
            task = spec.task or _probe_task(spec, env, config)
            verifier = (
                spec.backends("verifier")
                if config.controller.uses_verifier
                else None
            )
            if config.flow == "handoff":
                return run_with_handoff(
                    env,
                    spec.backends("policy"),
                    spec.backends("strong"),
                    config,
                    task,
                    verifier_backend=verifier,
                )
            params = _params(config, config.backend.model)
            controller = make_controller(
                config.controller, verifier or spec.backends("policy"), params
            )
            trajectory = run_episode(
                env,
                spec.backends("policy"),
                task,
                controller,
                config.max_steps,
                params,
                history_window=config.history_window,
                wall_clock_limit=_timeout(config),
            )
            return trajectory, None
        finally:
            _close(env)
    except Exception:
        log.exception("episode %s failed; recording env_error", spec.env_id)
        return _fallback_trajectory(spec.env_id, config), None


def run_suite(
    config: SuiteConfig, episodes: Sequence[EpisodeSpec] | None = None
) -> RunReport:
    """Run every episode, write the output layout, and return the report.

    Results keep the episode order regardless of parallelism, so repeated
    scripted runs produce byte-identical artifacts.
    """
    specs = list(episodes) if episodes is not None else episodes_from_config(config)
    if not specs:
        raise SuiteError("suite has no environments")

    outdir = Path(config.output_dir) / config.run_label
    outdir.mkdir(parents=True, exist_ok=True)

    if config.parallelism == 1 or len(specs) == 1:
        outcomes = [_run_one(spec, config) for spec in specs]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            outcomes = list(pool.map(lambda s: _run_one(s, config), specs))

    trajectories = [trajectory for trajectory, _ in outcomes]
    records = [record for _, record in outcomes if record is not None]

    write_trajectories(outdir / "trajectories.jsonl", trajectories)
    results = [env_result(t) for t in trajectories]

    paired, unpaired = [], []
    if config.ref_dir:
        ref_path = Path(config.ref_dir) / "trajectories.jsonl"
        if not ref_path.exists():
            raise SuiteError(f"reference run has no trajectories: {ref_path}")
        ref_results = [env_result(t) for t in read_trajectories(ref_path)]
        paired, unpaired = pair_results(ref_results, results)
        write_paired_csv(outdir / "paired.csv", paired)

    report = aggregate(results, paired, unpaired)
    write_env_csv(outdir / "report.csv", results)
    write_summary_md(outdir / "summary.md", report, label=config.run_label)
    if records:
        _write_handoff_csv(outdir / "handoffs.csv", records)
    snapshot = json.dumps(config.to_dict(), indent=2, sort_keys=True)
    (outdir / "config.snapshot").write_text(snapshot + "\n", encoding="utf-8")
    return report


def _write_handoff_csv(path, records: Sequence[HandoffRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "env_id",
                "weak_steps",
                "strong_steps",
                "total_steps",
                "outcome",
                "weak_tokens",
                "strong_tokens",
            ]
        )
        for r in records:
            writer.writerow(
                [
                    r.env_id,
                    r.weak_steps,
                    r.strong_steps,
                    r.total_steps,
                    r.outcome,
                    r.weak_tokens,
                    r.strong_tokens,
                ]
            )
