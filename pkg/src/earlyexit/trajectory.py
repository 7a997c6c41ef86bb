"""Shared data vocabulary: tasks, steps, trajectories, exit causes.

Everything here is a frozen dataclass. Trajectories are immutable-after-append:
`append` and friends return new values, so records can be handed between
threads without shared mutation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator


class ExitCause(str, Enum):
    """Why a trajectory stopped."""

    ENV_SUCCESS = "env_success"
    BUDGET_EXHAUSTED = "budget_exhausted"
    INTRINSIC_EXIT = "intrinsic_exit"
    EXTRINSIC_EXIT = "extrinsic_exit"
    BACKEND_ERROR = "backend_error"
    ENV_ERROR = "env_error"


#: Exit causes produced by an early-exit controller (as opposed to the
#: environment, the step budget, or a transport failure).
EARLY_EXIT_CAUSES = frozenset({ExitCause.INTRINSIC_EXIT, ExitCause.EXTRINSIC_EXIT})


class TrajectoryError(Exception):
    """Contract violation on a trajectory (bad append, invalid step, ...)."""


@dataclass(frozen=True)
class TaskSpec:
    """One environment instance's task: what the agent is told and how
    progress is counted.

    ``exit_instruction`` is the extra prompt text that allows the agent to
    self-terminate; it must be set when an intrinsic or hybrid controller
    is in play and left None otherwise.
    """

    env_id: str
    instruction: str
    goal: str
    example: str
    subgoal_count: int
    exit_instruction: str | None = None

    def __post_init__(self) -> None:
        if not self.env_id:
            raise TrajectoryError("TaskSpec.env_id must be non-empty")
        if self.subgoal_count < 1:
            raise TrajectoryError("TaskSpec.subgoal_count must be >= 1")


@dataclass(frozen=True)
class Step:
    """One recorded turn of an episode.

    ``was_env_step`` is False for turns that never reached the environment:
    a terminating EXIT emission, an unparseable completion, or a reflection
    turn. Such steps occupy an index and carry token usage but do not count
    toward the step budget and never satisfy new subgoals.
    """

    index: int
    thought: str
    action: str
    observation: str
    subgoal_flags: tuple[bool, ...]
    success: bool
    prompt_tokens: int
    completion_tokens: int
    was_env_step: bool = True
    usage_estimated: bool = False
    phase: str = ""

    def __post_init__(self) -> None:
        if self.index < 1:
            raise TrajectoryError("Step.index must be >= 1")
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise TrajectoryError("token counts must be non-negative")
        if self.success and not self.was_env_step:
            raise TrajectoryError("a non-env step cannot mark success")
        if not self.was_env_step and any(self.subgoal_flags):
            raise TrajectoryError("a non-env step cannot satisfy subgoals")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class VerifierVerdict:
    """One verification call: raw model output and the decision parsed
    from it, recorded at the env step that triggered the check."""

    raw: str
    decision: bool
    step: int
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class ExitDecision:
    """A controller's verdict after a recorded step."""

    halt: bool
    cause: ExitCause | None = None
    decided_at: int = 0

    def __post_init__(self) -> None:
        if self.halt != (self.cause is not None):
            raise TrajectoryError("ExitDecision.cause must be present iff halt")


CONTINUE = ExitDecision(halt=False)


@dataclass(frozen=True)
class Trajectory:
    """Ordered record of an episode, plus how it ended.

    ``steps`` holds every recorded turn; env-step accounting (budget,
    metric denominators) only counts steps with ``was_env_step=True``.
    ``verifier_calls`` holds extrinsic-verification usage; those calls never
    occupy a step index. ``initial_observation`` is runtime-only context for
    prompt assembly and is not persisted.
    """

    task: TaskSpec
    max_steps: int
    steps: tuple[Step, ...] = ()
    exit_cause: ExitCause | None = None
    verifier_calls: tuple[VerifierVerdict, ...] = ()
    initial_observation: str = ""

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise TrajectoryError("max_steps must be >= 1")

    @property
    def terminated(self) -> bool:
        return self.exit_cause is not None

    @property
    def succeeded(self) -> bool:
        return any(s.success for s in self.steps)

    def env_steps(self) -> Iterator[Step]:
        return (s for s in self.steps if s.was_env_step)

    @property
    def policy_tokens(self) -> int:
        return sum(s.total_tokens for s in self.steps)

    @property
    def verifier_tokens(self) -> int:
        return sum(v.total_tokens for v in self.verifier_calls)

    @property
    def total_tokens(self) -> int:
        return self.policy_tokens + self.verifier_tokens

    def append(self, step: Step) -> Trajectory:
        """Return a new trajectory with `step` appended.

        Raises TrajectoryError when the trajectory is already terminated,
        the index does not continue the sequence, the flag vector has the
        wrong length, or an env step would exceed the budget.
        """
        if self.terminated:
            raise TrajectoryError(
                f"cannot append to a terminated trajectory (cause={self.exit_cause.value})"
            )
        if self.steps and self.steps[-1].success:
            raise TrajectoryError("cannot append after a successful step")
        expected = self.steps[-1].index + 1 if self.steps else 1
        if step.index != expected:
            raise TrajectoryError(f"step index {step.index} != expected {expected}")
        if len(step.subgoal_flags) != self.task.subgoal_count:
            raise TrajectoryError(
                f"subgoal_flags length {len(step.subgoal_flags)} != K={self.task.subgoal_count}"
            )
        if step.was_env_step and n_total(self) >= self.max_steps:
            raise TrajectoryError(f"env step budget {self.max_steps} exhausted")
        return replace(self, steps=self.steps + (step,))

    def record_verifier(self, verdict: VerifierVerdict) -> Trajectory:
        return replace(self, verifier_calls=self.verifier_calls + (verdict,))

    def finish(self, cause: ExitCause) -> Trajectory:
        """Return a terminated copy of this trajectory."""
        if self.terminated:
            raise TrajectoryError("trajectory already terminated")
        if (cause is ExitCause.ENV_SUCCESS) != self.succeeded:
            raise TrajectoryError("env_success cause must match a successful step")
        return replace(self, exit_cause=cause)

def trajectory_append(traj: Trajectory, step: Step) -> Trajectory:
    """Functional alias for Trajectory.append."""
    return traj.append(step)


def n_total(traj: Trajectory) -> int:
    """Number of steps that actually reached the environment."""
    return sum(1 for _ in traj.env_steps())


def n_subgoal(traj: Trajectory) -> int:
    """Env-step position of the last step that satisfied a new subgoal.

    New means the cumulative union of satisfied subgoals strictly grew at
    that step; a subgoal that flickers off later still counts at its first
    satisfaction. Returns 0 when no subgoal was ever satisfied. Positions
    are counted over env steps so the result stays comparable with
    ``n_total`` even when non-env steps occupy indices in between.
    """
    seen: set[int] = set()
    last = 0
    pos = 0
    for step in traj.env_steps():
        pos += 1
        new = {k for k, flag in enumerate(step.subgoal_flags) if flag} - seen
        if new:
            seen |= new
            last = pos
    return last


# --- JSONL persistence ----------------------------------------------------
#
# One trajectory per line. Field order is fixed so identical runs produce
# byte-identical files. ``verifier_calls`` and per-step ``phase`` are
# emitted only when non-empty; readers ignore fields they do not know.


def encode_trajectory(traj: Trajectory) -> str:
    """Render one trajectory as a single JSON line (no trailing newline)."""
    doc: dict = {
        "env_id": traj.task.env_id,
        "exit_cause": traj.exit_cause.value if traj.exit_cause else None,
        "max_steps": traj.max_steps,
        "subgoal_count": traj.task.subgoal_count,
        "steps": [_encode_step(s) for s in traj.steps],
    }
    if traj.verifier_calls:
        doc["verifier_calls"] = [
            {
                "step": v.step,
                "decision": v.decision,
                "raw": v.raw,
                "prompt_tokens": v.prompt_tokens,
                "completion_tokens": v.completion_tokens,
            }
            for v in traj.verifier_calls
        ]
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def _encode_step(step: Step) -> dict:
    doc: dict = {
        "index": step.index,
        "thought": step.thought,
        "action": step.action,
        "observation": step.observation,
        "subgoals": list(step.subgoal_flags),
        "success": step.success,
        "prompt_tokens": step.prompt_tokens,
        "completion_tokens": step.completion_tokens,
        "env_step": step.was_env_step,
    }
    if step.usage_estimated:
        doc["usage_estimated"] = True
    if step.phase:
        doc["phase"] = step.phase
    return doc


def decode_trajectory(line: str) -> Trajectory:
    """Parse one JSONL line back into a Trajectory.

    Only the persisted fields are recovered; prompt-side task text is not
    part of the schema and comes back empty. Unknown fields are ignored.
    """
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TrajectoryError(f"bad trajectory line: {exc}") from exc
    if not isinstance(doc, dict):
        raise TrajectoryError("trajectory line must be a JSON object")
    try:
        task = TaskSpec(
            env_id=doc["env_id"],
            instruction="",
            goal="",
            example="",
            subgoal_count=doc["subgoal_count"],
        )
        steps = tuple(_decode_step(s) for s in doc["steps"])
        cause = doc["exit_cause"]
        verifier = tuple(
            VerifierVerdict(
                raw=v.get("raw", ""),
                decision=bool(v["decision"]),
                step=int(v["step"]),
                prompt_tokens=int(v.get("prompt_tokens", 0)),
                completion_tokens=int(v.get("completion_tokens", 0)),
            )
            for v in doc.get("verifier_calls", ())
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TrajectoryError(f"bad trajectory line: {exc!r}") from exc
    return Trajectory(
        task=task,
        max_steps=int(doc["max_steps"]),
        steps=steps,
        exit_cause=ExitCause(cause) if cause is not None else None,
        verifier_calls=verifier,
    )


def _decode_step(doc: dict) -> Step:
    return Step(
        index=int(doc["index"]),
        thought=doc["thought"],
        action=doc["action"],
        observation=doc["observation"],
        subgoal_flags=tuple(bool(b) for b in doc["subgoals"]),
        success=bool(doc["success"]),
        prompt_tokens=int(doc["prompt_tokens"]),
        completion_tokens=int(doc["completion_tokens"]),
        was_env_step=bool(doc["env_step"]),
        usage_estimated=bool(doc.get("usage_estimated", False)),
        phase=doc.get("phase", ""),
    )


def write_trajectories(path, trajectories: Iterable[Trajectory]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(encode_trajectory(traj))
            fh.write("\n")


def read_trajectories(path) -> list[Trajectory]:
    """Load a JSONL file, reporting the line number on any bad line."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(decode_trajectory(line))
            except TrajectoryError as exc:
                raise TrajectoryError(f"{path}:{lineno}: {exc}") from exc
    return out
