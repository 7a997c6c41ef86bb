"""Deterministic text environments defined by scenario tables.

A scenario is a small state machine: named states with text descriptions,
transitions keyed by (state, action pattern), regex subgoals evaluated on
the current state description, and a single success state. Scenario files
are TOML; the built-in families live in the package's ``scenarios/``
directory.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_INVALID_OBSERVATION = "Nothing happens."

BUILTIN_SCENARIOS = ("chainworld_k2", "chainworld_k4", "chainworld_k8", "looptrap", "deadend")


class ScenarioError(Exception):
    """A scenario file failed to parse or violates a scenario invariant."""


class EnvError(Exception):
    """The environment itself failed (dead bridge process, timeout, ...)."""


@dataclass(frozen=True)
class SubgoalDef:
    """One checkable milestone: a regex over the state description."""

    id: int
    pattern: str
    description: str = ""

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern)


@dataclass(frozen=True)
class Transition:
    """Environment response to one action."""

    observation: str
    subgoal_flags: tuple[bool, ...]
    success: bool
    done: bool
    valid_actions: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.success and not self.done:
            raise ScenarioError("success implies done")


@dataclass(frozen=True)
class StateDef:
    name: str
    description: str
    valid_actions: tuple[str, ...] = ()


@dataclass(frozen=True)
class TransitionRule:
    source: str
    action_pattern: str
    target: str
    observation: str

    def matches(self, action: str) -> bool:
        return re.fullmatch(self.action_pattern, action, re.IGNORECASE) is not None


@dataclass(frozen=True)
class Scenario:
    """A validated scenario definition."""

    env_id: str
    goal: str
    initial_state: str
    initial_observation: str
    success_state: str
    states: dict[str, StateDef]
    transitions: tuple[TransitionRule, ...]
    subgoals: tuple[SubgoalDef, ...]
    instruction: str = ""
    example: str = ""
    invalid_action_observation: str = DEFAULT_INVALID_OBSERVATION

    @property
    def subgoal_count(self) -> int:
        return len(self.subgoals)

    def rules_from(self, state: str) -> list[TransitionRule]:
        return [t for t in self.transitions if t.source == state]


def evaluate_subgoals(state_description: str, subgoals: list[SubgoalDef] | tuple[SubgoalDef, ...]) -> tuple[bool, ...]:
    """Flag k is true iff subgoal k's pattern occurs anywhere in the text
    (unanchored search)."""
    return tuple(g.compiled().search(state_description) is not None for g in subgoals)


def _normalize_action(action: str) -> str:
    return action.strip().rstrip(".!").strip()


class ScenarioEnv:
    """Steps a Scenario. One instance per episode; not safe for concurrent
    stepping, but distinct instances are independent.

    An action that matches no transition rule yields the scenario's
    invalid-action observation and leaves the state unchanged; it still
    consumes a step from the caller's budget.
    """

    def __init__(self, scenario: Scenario, env_id: str | None = None):
        self.scenario = scenario
        self.env_id = env_id or scenario.env_id
        self._state: str | None = None
        self._done = False
        self.steps_taken = 0
        self.action_log: list[str] = []

    def reset(self) -> tuple[str, str, tuple[str, ...] | None]:
        """Return (initial observation, goal, valid actions)."""
        self._state = self.scenario.initial_state
        self._done = False
        self.steps_taken = 0
        self.action_log = []
        return (
            self.scenario.initial_observation,
            self.scenario.goal,
            self._valid_actions(),
        )

    def step(self, action: str) -> Transition:
        if self._state is None:
            raise ScenarioError("step before reset")
        if self._done:
            raise ScenarioError("step after episode is done")
        self.steps_taken += 1
        self.action_log.append(action)

        normalized = _normalize_action(action)
        matches = [t for t in self.scenario.rules_from(self._state) if t.matches(normalized)]
        if len(matches) > 1:
            raise ScenarioError(
                f"scenario {self.scenario.env_id!r}: action {action!r} matches "
                f"{len(matches)} transitions from state {self._state!r}"
            )
        if matches:
            rule = matches[0]
            self._state = rule.target
            observation = rule.observation
        else:
            observation = self.scenario.invalid_action_observation

        success = self._state == self.scenario.success_state
        if success:
            self._done = True
        return Transition(
            observation=observation,
            subgoal_flags=self._flags(),
            success=success,
            done=self._done,
            valid_actions=self._valid_actions(),
        )

    def observe(self) -> tuple[str, tuple[str, ...] | None]:
        """Current state description and valid actions, without stepping.
        Used when a second agent takes over a live episode."""
        if self._state is None:
            raise ScenarioError("observe before reset")
        return self.scenario.states[self._state].description, self._valid_actions()

    def close(self) -> None:
        pass

    def _flags(self) -> tuple[bool, ...]:
        assert self._state is not None
        description = self.scenario.states[self._state].description
        return evaluate_subgoals(description, self.scenario.subgoals)

    def _valid_actions(self) -> tuple[str, ...] | None:
        assert self._state is not None
        actions = self.scenario.states[self._state].valid_actions
        return actions or None


# --- loading and validation -------------------------------------------------


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario TOML file.

    Raises ScenarioError naming the offending field for dangling transition
    targets, bad subgoal ids, uncompilable patterns, or a success state that
    fails one of its own subgoals.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: TOML parse error: {exc}") from exc
    try:
        return scenario_from_dict(doc, source=str(path))
    except ScenarioError:
        raise
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"{path}: missing or malformed field: {exc!r}") from exc


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    states = {}
    for name, body in doc["states"].items():
        states[name] = StateDef(
            name=name,
            description=body["description"],
            valid_actions=tuple(body.get("valid_actions", ())),
        )
    transitions = tuple(
        TransitionRule(
            source=t["from"],
            action_pattern=t["action"],
            target=t["to"],
            observation=t["observation"],
        )
        for t in doc.get("transitions", ())
    )
    subgoals = tuple(
        SubgoalDef(id=g["id"], pattern=g["pattern"], description=g.get("description", ""))
        for g in doc.get("subgoals", ())
    )
    scenario = Scenario(
        env_id=doc["env_id"],
        goal=doc["goal"],
        initial_state=doc["initial_state"],
        initial_observation=doc["initial_observation"],
        success_state=doc["success_state"],
        states=states,
        transitions=transitions,
        subgoals=subgoals,
        instruction=doc.get("instruction", ""),
        example=doc.get("example", ""),
        invalid_action_observation=doc.get(
            "invalid_action_observation", DEFAULT_INVALID_OBSERVATION
        ),
    )
    validate_scenario(scenario, source)
    return scenario


def validate_scenario(scenario: Scenario, source: str = "<scenario>") -> None:
    def fail(msg: str):
        raise ScenarioError(f"{source}: {msg}")

    if not scenario.subgoals:
        fail("scenario defines no subgoals")
    ids = sorted(g.id for g in scenario.subgoals)
    if ids != list(range(1, len(ids) + 1)):
        fail(f"subgoal ids must be exactly 1..{len(ids)} with no gaps, got {ids}")
    for g in scenario.subgoals:
        try:
            g.compiled()
        except re.error as exc:
            fail(f"subgoal {g.id} pattern does not compile: {exc}")

    if scenario.initial_state not in scenario.states:
        fail(f"initial_state {scenario.initial_state!r} is not a defined state")
    if scenario.success_state not in scenario.states:
        fail(f"success_state {scenario.success_state!r} is not a defined state")

    for t in scenario.transitions:
        if t.source not in scenario.states:
            fail(f"transition source {t.source!r} is not a defined state")
        if t.target not in scenario.states:
            fail(f"transition target {t.target!r} is not a defined state")
        try:
            re.compile(t.action_pattern)
        except re.error as exc:
            fail(f"transition pattern {t.action_pattern!r} does not compile: {exc}")

    seen_pairs = set()
    for t in scenario.transitions:
        key = (t.source, t.action_pattern)
        if key in seen_pairs:
            fail(f"duplicate transition for state {t.source!r} and pattern {t.action_pattern!r}")
        seen_pairs.add(key)

    success_desc = scenario.states[scenario.success_state].description
    flags = evaluate_subgoals(success_desc, scenario.subgoals)
    for g, ok in zip(scenario.subgoals, flags):
        if not ok:
            fail(f"success_state {scenario.success_state!r} does not satisfy subgoal {g.id}")


def builtin_scenario(name: str) -> Scenario:
    """Load one of the shipped scenario files by name."""
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioError(
            f"unknown built-in scenario {name!r}; available: {', '.join(BUILTIN_SCENARIOS)}"
        )
    ref = resources.files("earlyexit").joinpath(f"scenarios/{name}.toml")
    with resources.as_file(ref) as path:
        return load_scenario(path)
