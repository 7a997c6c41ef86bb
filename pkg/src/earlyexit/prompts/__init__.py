"""Prompt text: shipped instruction variants plus the fixed message templates.

The exit-instruction variants live as text assets under ``prompts/`` and are
loaded verbatim; everything the models see is assembled from the blocks below
so golden-snapshot tests have a single source to pin.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import Sequence

SYSTEM_PROMPT = "You are a helpful assistant."

AGENT_ACKNOWLEDGEMENT = "OK."

IMPORTANCE_NOTE = "## Important ##: Your thought should be short, clear and concise."

VALID_ACTIONS_LEAD = "The next action could be chosen from these valid actions: "

INTRINSIC_VARIANTS = ("strict", "modest")
EXTRINSIC_VARIANTS = ("strict", "modest")


class PromptAssetError(Exception):
    """A named prompt variant does not ship with the package."""


@lru_cache(maxsize=None)
def _load_asset(filename: str) -> str:
    ref = resources.files(__name__).joinpath(filename)
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise PromptAssetError(f"missing prompt asset: {filename}") from exc
    return text.rstrip("\n")


def intrinsic_instruction(variant: str) -> str:
    if variant not in INTRINSIC_VARIANTS:
        raise PromptAssetError(f"unknown intrinsic variant: {variant!r}")
    return _load_asset(f"intrinsic_{variant}.txt")


def extrinsic_instruction(variant: str) -> str:
    if variant not in EXTRINSIC_VARIANTS:
        raise PromptAssetError(f"unknown extrinsic variant: {variant!r}")
    return _load_asset(f"extrinsic_{variant}.txt")


def kickoff_message(example: str, goal: str, initial_observation: str) -> str:
    """The user turn that follows the agent's "OK.": example, format, task."""
    return (
        "Here is the example:\n"
        "\n"
        f"{example}\n"
        "\n"
        "Now, it's your turn. You should perform thoughts and actions to "
        "accomplish the goal. Your response should use the following format:\n"
        "\n"
        "Thought: <your thoughts>\n"
        "\n"
        "Action: <your next action>\n"
        "\n"
        f"Your task is: {goal}\n"
        "\n"
        f"{initial_observation}"
    )


def footer(
    exit_instruction: str | None = None,
    valid_actions: Sequence[str] | None = None,
) -> str:
    """Trailing block of the final user turn."""
    parts = [IMPORTANCE_NOTE]
    if exit_instruction:
        parts.append(exit_instruction)
    if valid_actions:
        parts.append(VALID_ACTIONS_LEAD + ", ".join(valid_actions))
    return "\n\n".join(parts)


REFLECTION_PREFIX = "Reflection from your previous attempt:"


def handoff_note(transcript: str) -> str:
    """Context block a continuation agent gets about its predecessor."""
    return (
        "A previous agent attempted this task and stopped early. Its "
        "transcript is shown below as read-only context; the environment "
        "continues from the state it left behind.\n"
        "\n"
        "Previous transcript:\n"
        "\n"
        f"{transcript}\n"
        "\n"
        "Replan from the current state and finish the task."
    )


def reflection_message(instruction: str, goal: str, transcript: str) -> str:
    """Single user turn asking the agent to critique its failed attempt."""
    return (
        "You attempted the task below and stopped before completing it.\n"
        "\n"
        "### Task Description:\n"
        f"{instruction}\n"
        "\n"
        "### Your Objective:\n"
        "\n"
        f"{goal}\n"
        "\n"
        "Your Attempt:\n"
        "\n"
        f"{transcript}\n"
        "\n"
        "Reflect on what went wrong and plan how to do better in a fresh "
        "attempt. Keep the reflection short and actionable."
    )


def verification_message(
    instruction: str,
    goal: str,
    history_text: str,
    verifier_instruction: str,
) -> str:
    """Single user turn shown to the verifier model."""
    return (
        "You will be given a historical scenario in which you are placed in "
        "a specific environment with a designated objective to accomplish.\n"
        "\n"
        "### Task Description:\n"
        f"{instruction}\n"
        "\n"
        "### Your Objective:\n"
        "\n"
        f"{goal}\n"
        "\n"
        "Your Current History:\n"
        "\n"
        f"{history_text}\n"
        "\n"
        "Instructions:\n"
        "\n"
        f"{verifier_instruction}\n"
        "\n"
        "Do not include any additional text or explanations in your response."
    )
