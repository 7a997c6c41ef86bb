import pytest

from earlyexit.backends import BackendError, GenerationParams, ScriptedBackend
from earlyexit.controllers import (
    ControllerConfig,
    ControllerConfigError,
    ExtrinsicController,
    HybridController,
    IntrinsicController,
    NoneController,
    build_verification_prompt,
    exit_instruction_for,
    make_controller,
    parse_verdict,
    recommended_config,
    should_check,
)
from earlyexit.trajectory import (
    ExitCause,
    Step,
    TaskSpec,
    Trajectory,
)

PARAMS = GenerationParams(model="verifier-model")


def task(**kw) -> TaskSpec:
    defaults = dict(env_id="t", instruction="INSTR", goal="GOAL", example="EX",
                    subgoal_count=1)
    defaults.update(kw)
    return TaskSpec(**defaults)


def grow(traj: Trajectory, n: int, success_last=False) -> Trajectory:
    for _ in range(n):
        index = len(traj.steps) + 1
        traj = traj.append(
            Step(index=index, thought="t", action="a", observation="o",
                 subgoal_flags=(False,),
                 success=success_last and index == len(traj.steps) + 1 and _ == n - 1,
                 prompt_tokens=2, completion_tokens=1)
        )
    return traj


class TestConfig:
    def test_defaults(self):
        config = ControllerConfig()
        assert config.mode == "none"
        assert config.k == 1
        assert config.intrinsic_variant == "modest"
        assert config.extrinsic_variant == "strict"
        assert config.hybrid_patience == 10

    @pytest.mark.parametrize("bad", [
        dict(mode="both"),
        dict(k=0),
        dict(intrinsic_variant="polite"),
        dict(extrinsic_variant="firm"),
        dict(history_window=0),
        dict(hybrid_patience=0),
    ])
    def test_validation(self, bad):
        with pytest.raises(ControllerConfigError):
            ControllerConfig(**bad)

    def test_capability_properties(self):
        assert not ControllerConfig(mode="none").uses_verifier
        assert ControllerConfig(mode="extrinsic").uses_verifier
        assert ControllerConfig(mode="hybrid").uses_verifier
        assert ControllerConfig(mode="intrinsic").uses_intrinsic
        assert ControllerConfig(mode="hybrid").uses_intrinsic
        assert not ControllerConfig(mode="extrinsic").uses_intrinsic

    def test_exit_instruction_only_for_intrinsic_modes(self):
        assert exit_instruction_for(ControllerConfig(mode="none")) is None
        assert exit_instruction_for(ControllerConfig(mode="extrinsic")) is None
        text = exit_instruction_for(
            ControllerConfig(mode="intrinsic", intrinsic_variant="strict")
        )
        assert "EXIT" in text


class TestShouldCheck:
    def test_every_step_at_k1(self):
        config = ControllerConfig(mode="extrinsic", k=1)
        assert all(should_check(config, i) for i in range(1, 10))

    def test_every_third_step_at_k3(self):
        config = ControllerConfig(mode="extrinsic", k=3)
        hits = [i for i in range(1, 13) if should_check(config, i)]
        assert hits == [3, 6, 9, 12]

    def test_non_positive_index_rejected(self):
        with pytest.raises(ControllerConfigError):
            should_check(ControllerConfig(mode="extrinsic"), 0)


class TestParseVerdict:
    @pytest.mark.parametrize("raw,expected", [
        ("YES", True),
        ("yes", True),
        ("Yes.", True),
        ("  YES\n", True),
        ("YES, the task is clearly stuck.", True),
        ("NO", False),
        ("No, keep going.", False),
        ("The answer is YES", True),
        ("NO but arguably YES", False),
        ("NOPE", False),
        ("", False),
        ("the agent should stop", False),
        ("YESTERDAY", False),
    ])
    def test_first_standalone_token_wins(self, raw, expected):
        assert parse_verdict(raw) is expected


class TestVerificationPrompt:
    def test_sections_and_transcript(self):
        traj = grow(
            Trajectory(task=task(), max_steps=10, initial_observation="INIT"), 2
        )
        messages = build_verification_prompt(task(), traj, "strict")
        assert messages[0].content == "You are a helpful assistant."
        body = messages[1].content
        assert "### Task Description:\nINSTR" in body
        assert "### Your Objective:\n\nGOAL" in body
        assert "Your Current History:" in body
        assert "Thought: t\nAction: a\nObservation: o" in body
        assert "stuck in a loop" in body
        assert body.endswith(
            "Do not include any additional text or explanations in your response."
        )

    def test_modest_variant_swaps_instruction(self):
        traj = grow(Trajectory(task=task(), max_steps=10), 1)
        body = build_verification_prompt(task(), traj, "modest")[1].content
        assert "you may output" in body
        assert "stuck in a loop" not in body


class TestNoneAndIntrinsic:
    def test_none_controller_is_inert(self):
        controller = make_controller(ControllerConfig(mode="none"))
        assert isinstance(controller, NoneController)
        assert not controller.accepts_intrinsic_exit
        assert not controller.intrinsic_active
        traj = grow(Trajectory(task=task(), max_steps=10), 3)
        assert not controller.consult(traj).halt
        assert controller.drain_verdicts() == []

    def test_intrinsic_controller_accepts_exit_but_never_halts(self):
        controller = make_controller(
            ControllerConfig(mode="intrinsic", intrinsic_variant="strict")
        )
        assert isinstance(controller, IntrinsicController)
        assert controller.accepts_intrinsic_exit
        assert controller.intrinsic_active
        traj = grow(Trajectory(task=task(), max_steps=40), 5)
        assert not controller.consult(traj).halt


class TestExtrinsic:
    def make(self, script, k=1):
        backend = ScriptedBackend(script=script)
        controller = make_controller(
            ControllerConfig(mode="extrinsic", k=k), backend=backend,
            params=PARAMS,
        )
        return controller, backend

    def test_requires_backend(self):
        with pytest.raises(ControllerConfigError):
            make_controller(ControllerConfig(mode="extrinsic"))

    def test_halts_on_yes(self):
        controller, _ = self.make(["NO", "YES"])
        traj = grow(Trajectory(task=task(), max_steps=10), 1)
        assert not controller.consult(traj).halt
        traj = grow(traj, 1)
        decision = controller.consult(traj)
        assert decision.halt
        assert decision.cause is ExitCause.EXTRINSIC_EXIT
        assert decision.decided_at == 2

    def test_verdicts_drained_in_order(self):
        controller, _ = self.make(["NO", "YES"])
        traj = grow(Trajectory(task=task(), max_steps=10), 1)
        controller.consult(traj)
        traj = grow(traj, 1)
        controller.consult(traj)
        verdicts = controller.drain_verdicts()
        assert [(v.step, v.decision) for v in verdicts] == [(1, False), (2, True)]
        assert controller.drain_verdicts() == []

    def test_k_spacing_counts_env_steps(self):
        controller, backend = self.make(["NO"] * 4, k=3)
        traj = Trajectory(task=task(), max_steps=40)
        for i in range(1, 10):
            traj = grow(traj, 1)
            controller.consult(traj)
        assert backend.calls_made == 3  # steps 3, 6, 9

    def test_skips_check_after_success(self):
        controller, backend = self.make(["YES"])
        traj = Trajectory(task=task(), max_steps=10).append(
            Step(index=1, thought="t", action="a", observation="o",
                 subgoal_flags=(True,), success=True, prompt_tokens=1,
                 completion_tokens=1)
        )
        assert not controller.consult(traj).halt
        assert backend.calls_made == 0

    def test_verifier_failure_means_continue(self):
        controller, backend = self.make([])  # exhausted on first call
        traj = grow(Trajectory(task=task(), max_steps=10), 1)
        assert not controller.consult(traj).halt
        verdicts = controller.drain_verdicts()
        assert len(verdicts) == 1
        assert verdicts[0].decision is False
        assert verdicts[0].raw == ""

    def test_verifier_tokens_recorded(self):
        controller, _ = self.make(["NO"])
        traj = grow(Trajectory(task=task(), max_steps=10), 1)
        controller.consult(traj)
        verdict = controller.drain_verdicts()[0]
        assert verdict.prompt_tokens > 0
        assert verdict.completion_tokens == 1

    def test_verifier_call_capped_at_eight_tokens(self):
        seen = {}

        class SpyBackend:
            def complete(self, messages, params):
                seen["params"] = params
                return ScriptedBackend(script=["NO"]).complete(messages, params)

        controller = make_controller(
            ControllerConfig(mode="extrinsic"), backend=SpyBackend(), params=PARAMS
        )
        controller.consult(grow(Trajectory(task=task(), max_steps=10), 1))
        assert seen["params"].max_tokens == 8
        assert seen["params"].model == "verifier-model"


class TestHybrid:
    def make(self, script, patience=10, k=1):
        backend = ScriptedBackend(script=script)
        controller = make_controller(
            ControllerConfig(mode="hybrid", k=k, hybrid_patience=patience),
            backend=backend, params=PARAMS,
        )
        return controller, backend

    def test_yes_arms_instead_of_halting(self):
        controller, _ = self.make(["YES"])
        assert not controller.intrinsic_active
        traj = grow(Trajectory(task=task(), max_steps=40), 1)
        assert not controller.consult(traj).halt
        assert controller.intrinsic_active

    def test_verification_stops_after_arming(self):
        controller, backend = self.make(["YES", "NO", "NO"])
        traj = grow(Trajectory(task=task(), max_steps=40), 1)
        controller.consult(traj)
        for _ in range(3):
            traj = grow(traj, 1)
            controller.consult(traj)
        assert backend.calls_made == 1

    def test_patience_force_halt_at_exact_step(self):
        controller, _ = self.make(["YES"], patience=10)
        traj = grow(Trajectory(task=task(), max_steps=40), 1)
        controller.consult(traj)  # YES at env step 1
        for i in range(2, 11):
            traj = grow(traj, 1)
            assert not controller.consult(traj).halt, f"halted early at {i}"
        traj = grow(traj, 1)  # env step 11 = 1 + patience
        decision = controller.consult(traj)
        assert decision.halt
        assert decision.cause is ExitCause.EXTRINSIC_EXIT
        assert decision.decided_at == 11

    def test_accepts_intrinsic_exit_throughout(self):
        controller, _ = self.make(["NO"])
        assert controller.accepts_intrinsic_exit

    def test_requires_backend(self):
        with pytest.raises(ControllerConfigError):
            make_controller(ControllerConfig(mode="hybrid"))


class TestMakeController:
    def test_mode_dispatch(self):
        backend = ScriptedBackend(script=[])
        assert isinstance(make_controller(ControllerConfig(mode="none")), NoneController)
        assert isinstance(
            make_controller(ControllerConfig(mode="intrinsic")), IntrinsicController
        )
        assert isinstance(
            make_controller(ControllerConfig(mode="extrinsic"), backend=backend),
            ExtrinsicController,
        )
        assert isinstance(
            make_controller(ControllerConfig(mode="hybrid"), backend=backend),
            HybridController,
        )


class TestRecommendedConfig:
    @pytest.mark.parametrize("model,mode,intrinsic,extrinsic", [
        ("meta-llama/Llama-3.1-8B-Instruct", "hybrid", "modest", "strict"),
        ("llama-3.1-70b-instruct", "hybrid", "strict", "modest"),
        ("mistralai/Mistral-7B-Instruct-v0.3", "intrinsic", "modest", None),
        ("mistral-small-24b-instruct", "extrinsic", None, "strict"),
    ])
    def test_published_table(self, model, mode, intrinsic, extrinsic):
        config = recommended_config(model)
        assert config is not None
        assert config.mode == mode
        if intrinsic is not None:
            assert config.intrinsic_variant == intrinsic
        if extrinsic is not None:
            assert config.extrinsic_variant == extrinsic

    def test_matching_is_case_insensitive(self):
        assert recommended_config("LLAMA-3.1-8B").mode == "hybrid"

    def test_unknown_model_returns_none(self):
        assert recommended_config("gpt-4o") is None
        assert recommended_config("") is None
