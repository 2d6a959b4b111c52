"""Chat-completion clients: one real HTTP client and the test mocks.

The harness only needs `model_id` and `complete(messages) -> str`.
Clients that can report retry metadata also expose
`complete_with_meta(messages) -> (text, attempts)`.
"""

from __future__ import annotations

import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import httpx

Messages = Union[str, Sequence[dict]]


class ClientError(RuntimeError):
    """The endpoint could not produce a completion within the retry budget."""


@dataclass(frozen=True)
class ChatClientConfig:
    endpoint: str
    model: str
    auth_env: str = "STRINGSMITH_API_KEY"
    max_retries: int = 3
    requests_per_minute: int = 60
    timeout_s: float = 60.0
    temperature: float = 0.0  # deterministic decoding by default


class RateLimiter:
    """Sliding-window limiter: at most `per_minute` acquisitions per 60s.

    Clock and sleeper are injectable so tests can drive time by hand.
    """

    def __init__(self, per_minute: int,
                 clock: Callable[[], float] = time.monotonic,
                 sleeper: Callable[[float], None] = time.sleep):
        if per_minute < 1:
            raise ValueError("per_minute must be positive")
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleeper
        self._issued: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                while self._issued and self._issued[0] <= now - 60.0:
                    self._issued.popleft()
                if len(self._issued) < self.per_minute:
                    self._issued.append(now)
                    return
                wait = self._issued[0] + 60.0 - now
            self._sleep(max(wait, 0.0))


def _as_messages(messages: Messages) -> list[dict]:
    if isinstance(messages, str):
        return [{"role": "user", "content": messages}]
    return list(messages)


class HttpChatClient:
    """Minimal chat-completions client with backoff and rate limiting."""

    def __init__(self, config: ChatClientConfig,
                 limiter: Optional[RateLimiter] = None,
                 transport: Optional[httpx.BaseTransport] = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.config = config
        self.limiter = limiter or RateLimiter(config.requests_per_minute)
        self._sleep = sleeper
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(timeout=config.timeout_s, headers=headers,
                                  transport=transport)

    @property
    def model_id(self) -> str:
        return self.config.model

    def complete(self, messages: Messages) -> str:
        text, _ = self.complete_with_meta(messages)
        return text

    def complete_with_meta(self, messages: Messages) -> tuple[str, int]:
        payload = {
            "model": self.config.model,
            "messages": _as_messages(messages),
            "temperature": self.config.temperature,
        }
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        last_error: Optional[str] = None
        attempts = 0
        for attempt in range(self.config.max_retries + 1):
            attempts = attempt + 1
            if attempt:
                self._sleep(0.5 * (2 ** (attempt - 1)))
            self.limiter.acquire()
            try:
                resp = self._http.post(url, json=payload)
            except httpx.TransportError as exc:
                last_error = f"transport: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ClientError(
                    f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                raise ClientError(f"malformed completion body: {exc}")
            return text, attempts
        raise ClientError(
            f"gave up after {attempts} attempts; last error: {last_error}")

    def close(self) -> None:
        self._http.close()


# ------------------------------------------------------------------- mocks

def _needs_escaping(gold: str) -> bool:
    if gold != gold.strip() or gold == "":
        return True
    if any(ord(c) < 32 for c in gold):
        return True
    return len(gold) >= 2 and gold[0] == '"' and gold[-1] == '"'


def encode_answer_line(gold: str, kind: str) -> str:
    """Render a gold answer the way the prompt protocol asks models to."""
    if kind == "str" and _needs_escaping(gold):
        return "Answer: " + json.dumps(gold, ensure_ascii=False)
    return "Answer: " + gold


def question_of(messages: Messages) -> str:
    """Recover the bare question from harness-built messages.

    The user turn is always `question + "\\n\\n" + instruction` with the
    instruction coming from the prompt config, so the suffix is known.
    """
    from .harness import all_strategies  # deferred: avoids import cycle
    content = _as_messages(messages)[-1]["content"]
    for strategy in all_strategies():
        suffix = "\n\n" + strategy.instruction
        if content.endswith(suffix):
            return content[:-len(suffix)]
    return content


class OracleMockClient:
    """Always answers the gold value, via the exact marker protocol."""

    model_id = "mock-oracle"

    def __init__(self, samples, chatty: bool = False):
        self._gold = {s.question: (s.answer, s.answer_kind.value)
                      for s in samples}
        self._chatty = chatty

    def complete(self, messages: Messages) -> str:
        question = question_of(messages)
        answer, kind = self._gold[question]
        line = encode_answer_line(answer, kind)
        if self._chatty:
            return "Let me work through this carefully.\n" + line
        return line


class EmptyMockClient:
    """Returns an empty reply: every extraction fails."""

    model_id = "mock-empty"

    def complete(self, messages: Messages) -> str:
        return ""


class HalfCorrectMockClient:
    """Deterministic 50% schedule: gold for even question ranks, a
    guaranteed-wrong answer for odd ranks."""

    model_id = "mock-half"

    def __init__(self, samples):
        ordered = sorted({s.question for s in samples})
        self._rank = {q: i for i, q in enumerate(ordered)}
        self._gold = {s.question: (s.answer, s.answer_kind.value)
                      for s in samples}

    def complete(self, messages: Messages) -> str:
        question = question_of(messages)
        answer, kind = self._gold[question]
        if self._rank[question] % 2 == 0:
            return encode_answer_line(answer, kind)
        # strictly longer than gold, so it can never match exactly
        return "Answer: " + answer + "~x"
