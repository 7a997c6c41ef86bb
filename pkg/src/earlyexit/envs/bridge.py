"""Client side of the newline-delimited JSON bridge to external benchmarks.

The adapter process is spawned once per environment instance. Each request
is one JSON line on its stdin; exactly one JSON reply line is expected on
its stdout. Replies carry the observation, per-subgoal flags, success/done,
and optionally a goal (on reset) and valid actions.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from typing import Sequence

from earlyexit.envs.scenario import EnvError, Transition

DEFAULT_REPLY_TIMEOUT = 30.0


class BridgeEnv:
    """Drives one adapter child process over stdin/stdout JSON lines."""

    def __init__(self, cmd: Sequence[str], env_id: str, reply_timeout: float = DEFAULT_REPLY_TIMEOUT):
        self.env_id = env_id
        self.reply_timeout = reply_timeout
        self._cmd = list(cmd)
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader: threading.Thread | None = None
        self._subgoal_count: int | None = None
        self._goal = ""
        self._last_observation = ""
        self._last_valid: tuple[str, ...] | None = None
        self._done = False

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self._cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=None,
                    text=True,
                    encoding="utf-8",
                    bufsize=1,
                )
            except OSError as exc:
                raise EnvError(f"cannot spawn bridge adapter {self._cmd!r}: {exc}") from exc
            self._lines = queue.Queue()
            self._reader = threading.Thread(
                target=self._read_stdout, args=(self._proc,), daemon=True
            )
            self._reader.start()
        return self._proc

    def _read_stdout(self, proc: subprocess.Popen) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _roundtrip(self, request: dict) -> dict:
        proc = self._ensure_proc()
        if proc.poll() is not None:
            raise EnvError(f"bridge adapter for {self.env_id} exited with {proc.returncode}")
        assert proc.stdin is not None
        try:
            proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EnvError(f"bridge adapter for {self.env_id} is gone: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.reply_timeout)
        except queue.Empty:
            raise EnvError(
                f"bridge adapter for {self.env_id} did not reply within {self.reply_timeout}s"
            )
        if line is None:
            raise EnvError(f"bridge adapter for {self.env_id} closed its stdout")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EnvError(f"bridge adapter sent a non-JSON reply: {line!r}") from exc
        if not isinstance(reply, dict):
            raise EnvError(f"bridge adapter reply is not an object: {reply!r}")
        if reply.get("error"):
            raise EnvError(f"bridge adapter error: {reply['error']}")
        return reply

    def _check_flags(self, reply: dict) -> tuple[bool, ...]:
        flags = tuple(bool(b) for b in reply.get("subgoals", ()))
        if self._subgoal_count is None:
            self._subgoal_count = len(flags)
        elif len(flags) != self._subgoal_count:
            raise EnvError(
                f"bridge subgoal vector length changed mid-episode: "
                f"{len(flags)} != {self._subgoal_count}"
            )
        return flags

    @property
    def subgoal_count(self) -> int:
        if self._subgoal_count is None:
            raise EnvError("subgoal count unknown before reset")
        return self._subgoal_count

    def reset(self) -> tuple[str, str, tuple[str, ...] | None]:
        reply = self._roundtrip({"op": "reset"})
        self._subgoal_count = None
        self._check_flags(reply)
        self._goal = reply.get("goal", "")
        self._done = bool(reply.get("done", False))
        self._last_observation = reply.get("observation", "")
        valid = reply.get("valid_actions")
        self._last_valid = tuple(valid) if valid else None
        return self._last_observation, self._goal, self._last_valid

    def step(self, action: str) -> Transition:
        if self._done:
            raise EnvError("step after episode is done")
        reply = self._roundtrip({"op": "step", "action": action})
        flags = self._check_flags(reply)
        success = bool(reply.get("success", False))
        done = bool(reply.get("done", False)) or success
        self._done = done
        self._last_observation = reply.get("observation", "")
        valid = reply.get("valid_actions")
        self._last_valid = tuple(valid) if valid else None
        return Transition(
            observation=self._last_observation,
            subgoal_flags=flags,
            success=success,
            done=done,
            valid_actions=self._last_valid,
        )

    def observe(self) -> tuple[str, tuple[str, ...] | None]:
        return self._last_observation, self._last_valid

    def close(self) -> None:
        if self._proc is None:
            return
        proc = self._proc
        self._proc = None
        if proc.poll() is None:
            try:
                assert proc.stdin is not None
                proc.stdin.write(json.dumps({"op": "shutdown"}) + "\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass
            try:
                proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self) -> "BridgeEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
