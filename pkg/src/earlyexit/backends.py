"""Chat-completion backends.

Two implementations share one duck-typed contract, ``complete(messages,
params) -> Completion``: an OpenAI-compatible HTTP client and a deterministic
scripted replay used by tests and offline runs. Both account tokens per call,
falling back to a character-count estimate when the server reports no usage.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import requests

API_KEY_ENV = "EARLYEXIT_API_KEY"

# The verifier answers with a bare YES or NO, so its turns are capped well
# below the policy's 256-token budget.
VERIFIER_MAX_TOKENS = 8


class BackendError(Exception):
    """A completion could not be obtained."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown chat role: {self.role!r}")
        if self.content is None:
            raise ValueError("message content must be a string, not None")


@dataclass(frozen=True)
class GenerationParams:
    model: str
    temperature: float = 0.1
    max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


def verifier_params(params: GenerationParams) -> GenerationParams:
    """Same model and temperature as the policy, output capped for YES/NO."""
    return GenerationParams(
        model=params.model,
        temperature=params.temperature,
        max_tokens=VERIFIER_MAX_TOKENS,
    )


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    completion_tokens: int
    # True when token counts came from the fallback estimator rather than the
    # server's usage report; reports surface this so estimated totals are not
    # mistaken for measured ones.
    usage_estimated: bool = False

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


def estimate_tokens(text: str) -> int:
    """Fallback token count: characters / 4, rounded up."""
    return (len(text) + 3) // 4


def estimate_prompt_tokens(messages: Iterable[ChatMessage]) -> int:
    return sum(estimate_tokens(message.content) for message in messages)


class HttpBackend:
    """OpenAI-compatible chat completions over HTTP.

    Transport failures and 5xx responses are retried with exponential
    backoff; 4xx responses fail immediately since retrying cannot fix a bad
    request. The API key falls back to the EARLYEXIT_API_KEY environment
    variable when not given explicitly.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_attempts: int = 3,
    ) -> None:
        if max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_attempts = max_attempts
        self._session = requests.Session()

    def complete(self, messages: Sequence[ChatMessage], params: GenerationParams) -> Completion:
        if not messages:
            raise BackendError("cannot complete an empty message list")
        url = f"{self.base_url}/chat/completions"
        payload = {
            "model": params.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_failure: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(min(2.0 ** (attempt - 1), 8.0))
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_failure = exc
                continue
            if 400 <= response.status_code < 500:
                raise BackendError(
                    f"HTTP {response.status_code} from {url}: {response.text[:200]}"
                )
            if response.status_code >= 500:
                last_failure = BackendError(f"HTTP {response.status_code} from {url}")
                continue
            return self._parse_body(response, messages)
        raise BackendError(
            f"no completion after {self.max_attempts} attempts: {last_failure}"
        )

    def _parse_body(self, response: requests.Response, messages: Sequence[ChatMessage]) -> Completion:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc
        usage = body.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if prompt_tokens is None or completion_tokens is None:
            return Completion(
                text=text,
                prompt_tokens=estimate_prompt_tokens(messages),
                completion_tokens=estimate_tokens(text),
                usage_estimated=True,
            )
        return Completion(
            text=text,
            prompt_tokens=int(prompt_tokens),
            completion_tokens=int(completion_tokens),
        )


def message_key(messages: Sequence[ChatMessage]) -> str:
    """Stable digest of a message list, for keying scripted responses."""
    canonical = json.dumps(
        [[m.role, m.content] for m in messages], ensure_ascii=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ScriptedBackend:
    """Deterministic replay backend.

    A call is answered by an exact prompt-digest match when one is registered,
    otherwise by consuming the ordinal script in call order. Running past the
    end of the script raises instead of improvising, so a drifted prompt shows
    up as a hard failure. Token usage always comes from the estimator.

    The instance is locked internally; parallel episodes should each own one.
    """

    def __init__(
        self,
        script: Iterable[str] = (),
        keyed: Mapping[str, str] | None = None,
    ) -> None:
        self._script = list(script)
        self._keyed = dict(keyed or {})
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: list[tuple[ChatMessage, ...]] = []

    @property
    def calls_made(self) -> int:
        return len(self.calls)

    @property
    def remaining(self) -> int:
        return len(self._script) - self._cursor

    def complete(self, messages: Sequence[ChatMessage], params: GenerationParams) -> Completion:
        if not messages:
            raise BackendError("cannot complete an empty message list")
        with self._lock:
            self.calls.append(tuple(messages))
            key = message_key(messages)
            if key in self._keyed:
                text = self._keyed[key]
            elif self._cursor < len(self._script):
                text = self._script[self._cursor]
                self._cursor += 1
            else:
                raise BackendError(
                    f"scripted backend exhausted after {self._cursor} responses"
                )
        return Completion(
            text=text,
            prompt_tokens=estimate_prompt_tokens(messages),
            completion_tokens=estimate_tokens(text),
            usage_estimated=True,
        )
