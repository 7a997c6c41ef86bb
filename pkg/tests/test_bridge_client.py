import sys
from pathlib import Path

import pytest

from earlyexit.agent import run_episode
from earlyexit.backends import GenerationParams, ScriptedBackend
from earlyexit.envs import BridgeEnv, EnvError
from earlyexit.trajectory import ExitCause, TaskSpec

from conftest import react

STUB = str(Path(__file__).parent / "stub_adapter.py")


def adapter(*extra, timeout=5.0) -> BridgeEnv:
    cmd = [sys.executable, STUB, *extra]
    return BridgeEnv(cmd, env_id="engine_room", reply_timeout=timeout)


class TestHappyPath:
    def test_reset_reports_goal_and_actions(self):
        with adapter() as env:
            observation, goal, valid = env.reset()
            assert "sealed hatch" in observation
            assert goal == "pull the lever in the engine room"
            assert valid == ("open the hatch", "wait")
            assert env.subgoal_count == 2

    def test_chain_to_success(self):
        with adapter() as env:
            env.reset()
            first = env.step("open the hatch")
            assert first.subgoal_flags == (True, False)
            assert not first.done
            assert first.valid_actions == ("pull the lever", "wait")
            last = env.step("pull the lever")
            assert last.subgoal_flags == (True, True)
            assert last.success and last.done

    def test_unknown_action_is_a_noop(self):
        with adapter() as env:
            env.reset()
            transition = env.step("sing a song")
            assert transition.observation == "Nothing happens."
            assert transition.subgoal_flags == (False, False)

    def test_step_after_done_rejected(self):
        with adapter() as env:
            env.reset()
            env.step("open the hatch")
            env.step("pull the lever")
            with pytest.raises(EnvError, match="after episode is done"):
                env.step("wait")

    def test_observe_caches_last_reply(self):
        with adapter() as env:
            env.reset()
            env.step("open the hatch")
            observation, valid = env.observe()
            assert "within reach" in observation
            assert valid == ("pull the lever", "wait")

    def test_reset_restarts_the_chain(self):
        with adapter() as env:
            env.reset()
            env.step("open the hatch")
            env.reset()
            transition = env.step("open the hatch")
            assert transition.subgoal_flags == (True, False)

    def test_subgoal_count_unknown_before_reset(self):
        with adapter() as env:
            with pytest.raises(EnvError, match="before reset"):
                env.subgoal_count

    def test_close_is_idempotent(self):
        env = adapter()
        env.reset()
        env.close()
        env.close()


class TestFaultModes:
    def test_reply_timeout(self):
        with adapter("--mode", "silent", timeout=0.4) as env:
            env.reset()
            with pytest.raises(EnvError, match="did not reply within"):
                env.step("open the hatch")

    def test_non_json_reply(self):
        with adapter("--mode", "garbage") as env:
            env.reset()
            with pytest.raises(EnvError, match="non-JSON reply"):
                env.step("open the hatch")

    def test_error_reply_surfaces_message(self):
        with adapter("--mode", "error") as env:
            env.reset()
            with pytest.raises(EnvError, match="internal fault"):
                env.step("open the hatch")

    def test_non_object_reply(self):
        with adapter("--mode", "array") as env:
            env.reset()
            with pytest.raises(EnvError, match="not an object"):
                env.step("open the hatch")

    def test_closed_stdout(self):
        with adapter("--mode", "halfclose") as env:
            env.reset()
            with pytest.raises(EnvError, match="closed its stdout"):
                env.step("open the hatch")

    def test_subgoal_vector_must_keep_its_length(self):
        with adapter("--mode", "shrink") as env:
            env.reset()
            with pytest.raises(EnvError, match="length changed"):
                env.step("open the hatch")

    def test_unspawnable_command(self):
        env = BridgeEnv(["/does/not/exist"], env_id="ghost")
        with pytest.raises(EnvError, match="cannot spawn"):
            env.reset()


class TestEpisodeOverBridge:
    def test_full_episode(self):
        backend = ScriptedBackend((
            react("The hatch blocks the way.", "open the hatch"),
            react("Lever time.", "pull the lever"),
        ))
        task = TaskSpec(
            env_id="engine_room",
            instruction="Interact with the environment to reach the goal.",
            goal="pull the lever in the engine room",
            example="Thought: t\nAction: a",
            subgoal_count=2,
        )
        with adapter() as env:
            trajectory = run_episode(
                env, backend, task, None, 10,
                GenerationParams(model="scripted"),
            )
        assert trajectory.exit_cause is ExitCause.ENV_SUCCESS
        assert [s.subgoal_flags for s in trajectory.steps] == [
            (True, False), (True, True),
        ]
        assert trajectory.steps[-1].success
        assert trajectory.initial_observation.startswith("You stand before")
