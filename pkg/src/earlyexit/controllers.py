"""Early-exit controllers.

Three strategies behind one duck-typed contract consulted by the episode
loop after every recorded environment step:

- intrinsic: the exit instruction rides on every prompt and the loop honors
  a whole-word EXIT action; the controller itself never halts anything.
- extrinsic: a verifier model reviews the transcript every k steps and
  answers YES (stop) or NO (continue).
- hybrid: the verifier runs as in extrinsic, but a YES only switches the
  intrinsic instruction on; the agent still has to confirm by emitting EXIT.
  A patience bound force-halts if it never does.

Controller instances are per-episode and stateful; never share one across
episodes.
"""

from __future__ import annotations

import fnmatch
import logging
import re
import sys
from dataclasses import dataclass
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agent import render_transcript
from .backends import (
    BackendError,
    ChatMessage,
    GenerationParams,
    verifier_params,
)
from .prompts import (
    SYSTEM_PROMPT,
    extrinsic_instruction,
    intrinsic_instruction,
    verification_message,
)
from .trajectory import (
    CONTINUE,
    ExitCause,
    ExitDecision,
    TaskSpec,
    Trajectory,
    VerifierVerdict,
    n_total,
)

log = logging.getLogger(__name__)

MODES = ("none", "intrinsic", "extrinsic", "hybrid")

# First standalone yes/no wins, case-insensitively; anything else means
# continue.
_VERDICT_TOKEN = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


class ControllerConfigError(Exception):
    """Invalid controller configuration."""


@dataclass(frozen=True)
class ControllerConfig:
    mode: str = "none"
    k: int = 1
    intrinsic_variant: str = "modest"
    extrinsic_variant: str = "strict"
    history_window: int | None = None
    # Steps the hybrid controller waits after the first YES before it stops
    # trusting the agent to confirm and force-halts.
    hybrid_patience: int = 10

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ControllerConfigError(f"unknown controller mode: {self.mode!r}")
        if self.k < 1:
            raise ControllerConfigError("verification period k must be >= 1")
        if self.intrinsic_variant not in ("strict", "modest"):
            raise ControllerConfigError(
                f"unknown intrinsic variant: {self.intrinsic_variant!r}"
            )
        if self.extrinsic_variant not in ("strict", "modest"):
            raise ControllerConfigError(
                f"unknown extrinsic variant: {self.extrinsic_variant!r}"
            )
        if self.history_window is not None and self.history_window < 1:
            raise ControllerConfigError("history_window must be >= 1 when set")
        if self.hybrid_patience < 1:
            raise ControllerConfigError("hybrid_patience must be >= 1")

    @property
    def uses_verifier(self) -> bool:
        return self.mode in ("extrinsic", "hybrid")

    @property
    def uses_intrinsic(self) -> bool:
        return self.mode in ("intrinsic", "hybrid")


def exit_instruction_for(config: ControllerConfig) -> str | None:
    """Exit-instruction text a TaskSpec needs under this config, if any."""
    if config.uses_intrinsic:
        return intrinsic_instruction(config.intrinsic_variant)
    return None


def should_check(config: ControllerConfig, step_index: int) -> bool:
    """True when the verifier runs after env step `step_index` (1-based)."""
    if step_index < 1:
        raise ControllerConfigError("step_index must be >= 1")
    return step_index % config.k == 0


def parse_verdict(raw: str) -> bool:
    match = _VERDICT_TOKEN.search(raw)
    if match is None:
        return False
    return match.group(1).lower() == "yes"


def build_verification_prompt(
    task: TaskSpec,
    history: Trajectory,
    variant: str,
    window: int | None = None,
) -> list[ChatMessage]:
    transcript = render_transcript(history, window=window)
    return [
        ChatMessage("system", SYSTEM_PROMPT),
        ChatMessage(
            "user",
            verification_message(
                task.instruction,
                task.goal,
                transcript,
                extrinsic_instruction(variant),
            ),
        ),
    ]


class _ControllerBase:
    """Shared plumbing: verdict buffering and the success guard."""

    accepts_intrinsic_exit = False
    intrinsic_active = False

    def __init__(self, config: ControllerConfig) -> None:
        self.config = config
        self._pending: list[VerifierVerdict] = []

    def drain_verdicts(self) -> list[VerifierVerdict]:
        drained = self._pending
        self._pending = []
        return drained

    def consult(self, trajectory: Trajectory) -> ExitDecision:
        if trajectory.steps and trajectory.steps[-1].success:
            return CONTINUE
        return self._consult(trajectory)

    def _consult(self, trajectory: Trajectory) -> ExitDecision:
        raise NotImplementedError


class NoneController(_ControllerBase):
    mode = "none"

    def _consult(self, trajectory: Trajectory) -> ExitDecision:
        return CONTINUE


class IntrinsicController(_ControllerBase):
    """Halting happens in the loop when the agent emits EXIT; this
    controller only keeps the exit instruction switched on."""

    mode = "intrinsic"
    accepts_intrinsic_exit = True
    intrinsic_active = True

    def _consult(self, trajectory: Trajectory) -> ExitDecision:
        return CONTINUE


class _VerifyingController(_ControllerBase):
    def __init__(
        self,
        config: ControllerConfig,
        backend,
        params: GenerationParams,
    ) -> None:
        super().__init__(config)
        self._backend = backend
        self._params = verifier_params(params)

    def _run_verifier(self, trajectory: Trajectory, position: int) -> VerifierVerdict:
        messages = build_verification_prompt(
            trajectory.task,
            trajectory,
            self.config.extrinsic_variant,
            window=self.config.history_window,
        )
        try:
            completion = self._backend.complete(messages, self._params)
        except BackendError as exc:
            # An outage must not masquerade as a judgment.
            log.warning("verifier call failed at step %d: %s", position, exc)
            verdict = VerifierVerdict(raw="", decision=False, step=position)
        else:
            verdict = VerifierVerdict(
                raw=completion.text,
                decision=parse_verdict(completion.text),
                step=position,
                prompt_tokens=completion.prompt_tokens,
                completion_tokens=completion.completion_tokens,
            )
        self._pending.append(verdict)
        return verdict


class ExtrinsicController(_VerifyingController):
    mode = "extrinsic"

    def _consult(self, trajectory: Trajectory) -> ExitDecision:
        position = n_total(trajectory)
        if position < 1 or not should_check(self.config, position):
            return CONTINUE
        verdict = self._run_verifier(trajectory, position)
        if verdict.decision:
            return ExitDecision(
                halt=True, cause=ExitCause.EXTRINSIC_EXIT, decided_at=position
            )
        return CONTINUE


class HybridController(_VerifyingController):
    """Verifier YES arms the intrinsic instruction instead of halting; the
    agent confirms by emitting EXIT. Verification stops once armed."""

    mode = "hybrid"
    accepts_intrinsic_exit = True

    def __init__(self, config, backend, params) -> None:
        super().__init__(config, backend, params)
        self._armed_at: int | None = None

    @property
    def intrinsic_active(self) -> bool:
        return self._armed_at is not None

    def _consult(self, trajectory: Trajectory) -> ExitDecision:
        position = n_total(trajectory)
        if position < 1:
            return CONTINUE
        if self._armed_at is None:
            if should_check(self.config, position):
                verdict = self._run_verifier(trajectory, position)
                if verdict.decision:
                    self._armed_at = position
            return CONTINUE
        if position - self._armed_at >= self.config.hybrid_patience:
            return ExitDecision(
                halt=True, cause=ExitCause.EXTRINSIC_EXIT, decided_at=position
            )
        return CONTINUE


def make_controller(
    config: ControllerConfig,
    backend=None,
    params: GenerationParams | None = None,
):
    """Build a fresh per-episode controller for the configured mode."""
    if config.mode == "none":
        return NoneController(config)
    if config.mode == "intrinsic":
        return IntrinsicController(config)
    if backend is None:
        raise ControllerConfigError(f"mode {config.mode!r} needs a verifier backend")
    if params is None:
        params = GenerationParams(model="scripted")
    if config.mode == "extrinsic":
        return ExtrinsicController(config, backend, params)
    return HybridController(config, backend, params)


# --- Recommended presets ----------------------------------------------------


def _load_preset_table() -> list[dict]:
    text = (
        resources.files("earlyexit")
        .joinpath("presets")
        .joinpath("recommended.presets")
        .read_text(encoding="utf-8")
    )
    doc = tomllib.loads(text)
    return list(doc.get("preset", ()))


def recommended_config(model: str) -> ControllerConfig | None:
    """Controller config recommended for a model name, or None.

    Matching is case-insensitive glob over the shipped preset table; the
    first matching pattern wins.
    """
    name = model.lower()
    for row in _load_preset_table():
        if fnmatch.fnmatch(name, row["match"].lower()):
            return ControllerConfig(
                mode=row["mode"],
                intrinsic_variant=row.get("intrinsic_variant", "modest"),
                extrinsic_variant=row.get("extrinsic_variant", "strict"),
            )
    return None
