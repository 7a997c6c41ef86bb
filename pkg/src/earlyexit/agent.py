"""ReAct episode loop.

Assembles the multi-turn prompt (instruction, example, history, optional exit
instruction, optional valid actions), samples one thought/action per turn,
steps the environment, and repeats until success, budget exhaustion, or an
exit decision. Controllers are consulted after every recorded environment
step and may end the episode; they are plain duck-typed objects so this
module depends only on the core vocabulary.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

from .backends import BackendError, ChatMessage, Completion, GenerationParams
from .envs import EnvError
from .prompts import (
    AGENT_ACKNOWLEDGEMENT,
    SYSTEM_PROMPT,
    footer,
    kickoff_message,
)
from .trajectory import (
    ExitCause,
    Step,
    TaskSpec,
    Trajectory,
    n_total,
)

THOUGHT_LABEL = "Thought:"
ACTION_LABEL = "Action:"

# Whole word, upper case only; "exit" or "EXITS" must not trigger.
_EXIT_TOKEN = re.compile(r"\bEXIT\b")


class ParseError(Exception):
    """The completion text yielded no usable action."""


@dataclass(frozen=True)
class ParsedTurn:
    thought: str
    action: str
    contains_exit_token: bool


class Environment(Protocol):
    def reset(self) -> tuple[str, str, tuple[str, ...] | None]: ...

    def step(self, action: str): ...

    def observe(self) -> tuple[str, tuple[str, ...] | None]: ...


def parse_response(text: str) -> ParsedTurn:
    """Extract the last labeled thought/action pair.

    Without an "Action:" label the whole trimmed text is taken as the action;
    small models often drop the scaffold and punishing that would conflate
    parsing with agent quality.
    """
    if not text or not text.strip():
        raise ParseError("empty completion")
    action_at = text.rfind(ACTION_LABEL)
    if action_at == -1:
        thought = ""
        action = text.strip()
    else:
        tail = text[action_at + len(ACTION_LABEL):].strip()
        action = tail.splitlines()[0].strip() if tail else ""
        thought_at = text.rfind(THOUGHT_LABEL, 0, action_at)
        if thought_at == -1:
            thought = ""
        else:
            thought = text[thought_at + len(THOUGHT_LABEL):action_at].strip()
    return ParsedTurn(
        thought=thought,
        action=action,
        contains_exit_token=bool(_EXIT_TOKEN.search(action)),
    )


def render_react_turn(step: Step) -> str:
    return f"{THOUGHT_LABEL} {step.thought}\n{ACTION_LABEL} {step.action}"


def render_transcript(
    trajectory: Trajectory,
    window: int | None = None,
    include_initial: bool = True,
) -> str:
    """Plain-text view of a trajectory for verifier prompts and handoffs."""
    blocks: list[str] = []
    if include_initial and trajectory.initial_observation:
        blocks.append(trajectory.initial_observation)
    env_steps = [s for s in trajectory.steps if s.was_env_step]
    if window is not None:
        env_steps = env_steps[-window:]
    for step in env_steps:
        blocks.append(f"{render_react_turn(step)}\nObservation: {step.observation}")
    return "\n\n".join(blocks)


def assemble_messages(
    task: TaskSpec,
    history: Trajectory,
    latest_observation: str,
    valid_actions: Sequence[str] | None = None,
    intrinsic_active: bool = False,
    history_window: int | None = None,
) -> list[ChatMessage]:
    """Build the full multi-turn prompt for the next policy call.

    Layout: system, instruction, "OK.", kickoff (example + format + goal +
    initial observation), then one assistant/user pair per recorded
    environment step. The footer (importance note, optional exit
    instruction, optional valid actions) rides on the final user message.
    """
    exit_instruction = None
    if intrinsic_active:
        if not task.exit_instruction:
            raise ValueError(
                "intrinsic exit requested but the task carries no exit instruction"
            )
        exit_instruction = task.exit_instruction
    tail = footer(exit_instruction, valid_actions)

    env_steps = [s for s in history.steps if s.was_env_step]
    if history_window is not None:
        env_steps = env_steps[-history_window:]

    initial_observation = history.initial_observation
    if not initial_observation and not env_steps:
        initial_observation = latest_observation

    messages = [
        ChatMessage("system", SYSTEM_PROMPT),
        ChatMessage("user", task.instruction),
        ChatMessage("assistant", AGENT_ACKNOWLEDGEMENT),
    ]
    kickoff = kickoff_message(task.example, task.goal, initial_observation)
    if not env_steps:
        messages.append(ChatMessage("user", f"{kickoff}\n\n{tail}"))
        return messages
    messages.append(ChatMessage("user", kickoff))
    for step in env_steps[:-1]:
        messages.append(ChatMessage("assistant", render_react_turn(step)))
        messages.append(ChatMessage("user", step.observation))
    last = env_steps[-1]
    messages.append(ChatMessage("assistant", render_react_turn(last)))
    messages.append(ChatMessage("user", f"{last.observation}\n\n{tail}"))
    return messages


def _blank_flags(task: TaskSpec) -> tuple[bool, ...]:
    return (False,) * task.subgoal_count


def run_episode(
    env: Environment,
    backend,
    task: TaskSpec,
    controller=None,
    max_steps: int = 40,
    params: GenerationParams | None = None,
    *,
    reset_env: bool = True,
    phase: str = "",
    history_window: int | None = None,
    max_parse_failures: int = 3,
    wall_clock_limit: float | None = None,
) -> Trajectory:
    """Run one episode to termination and return the finished trajectory.

    ``reset_env=False`` continues the environment from its current state
    (used by handoff continuations); the trajectory still starts empty and
    its kickoff observation is whatever the environment reports now.
    """
    if params is None:
        params = GenerationParams(model="scripted")
    started = time.monotonic()

    try:
        if reset_env:
            observation, _, valid_actions = env.reset()
        else:
            observation, valid_actions = env.observe()
    except EnvError:
        empty = Trajectory(task=task, max_steps=max_steps)
        return empty.finish(ExitCause.ENV_ERROR)

    trajectory = Trajectory(
        task=task, max_steps=max_steps, initial_observation=observation
    )
    parse_failures = 0

    while True:
        if n_total(trajectory) >= max_steps:
            return trajectory.finish(ExitCause.BUDGET_EXHAUSTED)
        if wall_clock_limit is not None and time.monotonic() - started > wall_clock_limit:
            return trajectory.finish(ExitCause.BACKEND_ERROR)

        intrinsic_active = bool(controller is not None and controller.intrinsic_active)
        messages = assemble_messages(
            task,
            trajectory,
            observation,
            valid_actions=valid_actions,
            intrinsic_active=intrinsic_active,
            history_window=history_window,
        )
        try:
            completion: Completion = backend.complete(messages, params)
        except BackendError:
            return trajectory.finish(ExitCause.BACKEND_ERROR)

        next_index = len(trajectory.steps) + 1
        try:
            turn = parse_response(completion.text)
        except ParseError:
            parse_failures += 1
            trajectory = trajectory.append(
                Step(
                    index=next_index,
                    thought="",
                    action="",
                    observation="",
                    subgoal_flags=_blank_flags(task),
                    success=False,
                    prompt_tokens=completion.prompt_tokens,
                    completion_tokens=completion.completion_tokens,
                    was_env_step=False,
                    usage_estimated=completion.usage_estimated,
                    phase=phase,
                )
            )
            if parse_failures >= max_parse_failures:
                return trajectory.finish(ExitCause.BACKEND_ERROR)
            continue
        parse_failures = 0

        if turn.contains_exit_token and controller is not None and controller.accepts_intrinsic_exit:
            # The EXIT turn costs tokens but never reaches the environment.
            trajectory = trajectory.append(
                Step(
                    index=next_index,
                    thought=turn.thought,
                    action=turn.action,
                    observation="",
                    subgoal_flags=_blank_flags(task),
                    success=False,
                    prompt_tokens=completion.prompt_tokens,
                    completion_tokens=completion.completion_tokens,
                    was_env_step=False,
                    usage_estimated=completion.usage_estimated,
                    phase=phase,
                )
            )
            return trajectory.finish(ExitCause.INTRINSIC_EXIT)

        try:
            transition = env.step(turn.action)
        except EnvError:
            trajectory = trajectory.append(
                Step(
                    index=next_index,
                    thought=turn.thought,
                    action=turn.action,
                    observation="",
                    subgoal_flags=_blank_flags(task),
                    success=False,
                    prompt_tokens=completion.prompt_tokens,
                    completion_tokens=completion.completion_tokens,
                    was_env_step=False,
                    usage_estimated=completion.usage_estimated,
                    phase=phase,
                )
            )
            return trajectory.finish(ExitCause.ENV_ERROR)

        trajectory = trajectory.append(
            Step(
                index=next_index,
                thought=turn.thought,
                action=turn.action,
                observation=transition.observation,
                subgoal_flags=tuple(transition.subgoal_flags),
                success=transition.success,
                prompt_tokens=completion.prompt_tokens,
                completion_tokens=completion.completion_tokens,
                was_env_step=True,
                usage_estimated=completion.usage_estimated,
                phase=phase,
            )
        )
        observation = transition.observation
        if transition.valid_actions is not None:
            valid_actions = transition.valid_actions

        if transition.success:
            return trajectory.finish(ExitCause.ENV_SUCCESS)

        if controller is not None:
            decision = controller.consult(trajectory)
            for verdict in controller.drain_verdicts():
                trajectory = trajectory.record_verifier(verdict)
            if decision.halt:
                return trajectory.finish(decision.cause)

        if transition.done:
            # Done without success: the environment refuses further steps.
            return trajectory.finish(ExitCause.BUDGET_EXHAUSTED)
