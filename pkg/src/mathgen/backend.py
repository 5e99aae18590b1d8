"""Chat-completion backends: a live OpenAI-compatible client and deterministic mocks."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

from .errors import BackendError, ConfigError, ScriptExhaustedError

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "MATHGEN_API_KEY"

# Per-agent decoding draws: wide enough for diverse perspectives without
# degenerate sampling.
TEMPERATURE_RANGE = (0.7, 1.2)

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ConfigError(f"invalid message role {self.role!r}")
        if not self.content:
            raise ConfigError("message content must be non-empty")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    sampling_seed: int | None = None
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ConfigError("request must contain at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature must be in [0, 2], got {self.temperature}")

    def canonical(self) -> str:
        """Stable serialization used for hashing and logs."""
        return json.dumps(
            {
                "model": self.model,
                "messages": [m.to_dict() for m in self.messages],
                "temperature": self.temperature,
                "sampling_seed": self.sampling_seed,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: dict[str, int] = field(default_factory=dict)
    latency: float = 0.0


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def draw_decoding_params(run_rng: random.Random) -> tuple[float, int]:
    """Draw one agent's (temperature, sampling_seed) from the run's rng."""
    temperature = run_rng.uniform(*TEMPERATURE_RANGE)
    sampling_seed = run_rng.randrange(2**31)
    return temperature, sampling_seed


def _mock_usage(request: ChatRequest, content: str) -> dict[str, int]:
    prompt_chars = sum(len(m.content) for m in request.messages)
    return {
        "prompt_tokens": prompt_chars // 4,
        "completion_tokens": max(1, len(content) // 4),
    }


class ScriptedBackend:
    """Returns scripted responses in call order; bit-deterministic.

    With cycle=False the script is finite and a call past the end raises
    ScriptExhaustedError. With cycle=True the script wraps around.
    """

    def __init__(self, responses: list[str], cycle: bool = False):
        if not responses:
            raise ConfigError("scripted backend needs at least one response")
        self._responses = list(responses)
        self._cycle = cycle
        self._position = 0
        self._lock = threading.Lock()
        self.request_log: list[dict] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if self._position >= len(self._responses):
                if not self._cycle:
                    raise ScriptExhaustedError(
                        f"script exhausted after {len(self._responses)} responses"
                    )
                self._position = 0
            content = self._responses[self._position]
            self._position += 1
        self.request_log.append({"model": request.model, "scripted": True})
        return ChatResponse(content=content, usage=_mock_usage(request, content))


_CANDIDATE_LINE = re.compile(r"^Candidate (\d+):", re.MULTILINE)


class AutoMockBackend:
    """Stateless mock that synthesizes a grammar-valid reply for any prompt.

    The reply is a pure function of the request, so runs are deterministic
    regardless of call interleaving. The prompt text is classified by the
    output grammar it demands (consensus verdict, decision, score, or
    question-answer) and a matching reply is derived from the request hash.
    """

    def __init__(self, salt: str = ""):
        self._salt = salt
        self.request_log: list[dict] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        content = self._respond(request)
        self.request_log.append({"model": request.model, "auto": True})
        return ChatResponse(content=content, usage=_mock_usage(request, content))

    def _respond(self, request: ChatRequest) -> str:
        text = "\n".join(m.content for m in request.messages)
        digest = hashlib.sha256(
            (self._salt + request.canonical()).encode("utf-8")
        ).digest()
        h = int.from_bytes(digest[:8], "big")
        n_candidates = self._count_candidates(text)

        if "CONSENSUS:" in text:
            consensus = "yes" if h & 1 else "no"
            choice = 1 + (h >> 4) % max(1, n_candidates)
            return f"CONSENSUS: {consensus}\nCHOICE: {choice}"
        if "DECISION:" in text:
            return self._decision(text, h, n_candidates)
        if "SCORE:" in text:
            return f"SCORE: {1 + h % 5}"
        if "QUESTION:" in text:
            return self._qa(text, h)
        return (
            "The question is clearly worded and the arithmetic suits the "
            f"requested level; consider rephrasing the final step (note {h % 97})."
        )

    @staticmethod
    def _count_candidates(text: str) -> int:
        indices = [int(m.group(1)) for m in _CANDIDATE_LINE.finditer(text)]
        return max(indices) if indices else 0

    def _qa(self, text: str, h: int) -> str:
        a = 2 + h % 17
        b = 3 + (h >> 8) % 13
        lines = []
        if "REASONING:" in text:
            lines.append(f"REASONING: Adding the two terms gives {a} + {b} = {a + b}.")
        lines.append(f"QUESTION: What is {a} + {b}?")
        lines.append(f"ANSWER: {a + b}")
        return "\n".join(lines)

    def _decision(self, text: str, h: int, n_candidates: int) -> str:
        if n_candidates == 0:
            return f"DECISION: NEW\n{self._qa(text, h)}"
        kind = ("NEW", "REVISE", "AGREE")[(h >> 16) % 3]
        target = 1 + (h >> 24) % n_candidates
        if kind == "NEW":
            return f"DECISION: NEW\n{self._qa(text, h)}"
        if kind == "REVISE":
            return (
                f"DECISION: REVISE\nTARGET: {target}\n{self._qa(text, h)}\n"
                f"FEEDBACK: Reworded for clarity (note {h % 89})."
            )
        return (
            f"DECISION: AGREE\nTARGET: {target}\n"
            f"FEEDBACK: Well aligned with the requested difficulty (note {h % 83})."
        )


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff for transient live-backend failures.

    max_retries counts retries after the initial attempt; delays follow
    base_delay * factor**i, so the default schedule is 1s, 2s, 4s.
    """

    max_retries: int = 3
    base_delay: float = 1.0
    factor: float = 2.0

    def delay(self, retry_index: int) -> float:
        return self.base_delay * self.factor**retry_index


class OpenAICompatBackend:
    """Live client for an OpenAI-compatible chat-completions endpoint.

    Credentials come from the environment (bearer token); transient
    failures (timeouts, 429, 5xx) are retried with exponential backoff and
    every call is appended to request_log with its retry schedule.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
        retry: RetryPolicy | None = None,
        max_concurrency: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        api_key = os.environ.get(api_key_env, "")
        if not api_key:
            raise ConfigError(
                f"no credential found: set the {api_key_env} environment variable"
            )
        self._url = base_url.rstrip("/") + "/v1/chat/completions"
        self._retry = retry or RetryPolicy()
        self._sleep = sleep
        self._limiter = threading.Semaphore(max_concurrency)
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )
        self.request_log: list[dict] = []

    def close(self) -> None:
        self._client.close()

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload: dict = {
            "model": request.model,
            "messages": [m.to_dict() for m in request.messages],
            "temperature": request.temperature,
        }
        if request.sampling_seed is not None:
            payload["seed"] = request.sampling_seed
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens

        entry: dict = {"model": request.model, "attempts": 0, "delays": []}
        self.request_log.append(entry)
        started = time.perf_counter()
        last_error = "unknown error"
        for attempt in range(1 + self._retry.max_retries):
            if attempt > 0:
                delay = self._retry.delay(attempt - 1)
                entry["delays"].append(delay)
                logger.warning(
                    "retrying chat completion in %.1fs (%s)", delay, last_error
                )
                self._sleep(delay)
            entry["attempts"] = attempt + 1
            try:
                with self._limiter:
                    response = self._client.post(self._url, json=payload)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                entry["error"] = f"HTTP {response.status_code}"
                raise BackendError(
                    f"chat completion failed: HTTP {response.status_code}: "
                    f"{response.text[:500]}"
                )
            return self._parse(response, entry, started)

        entry["error"] = last_error
        raise BackendError(
            f"chat completion failed after {entry['attempts']} attempts: {last_error}"
        )

    @staticmethod
    def _parse(response: httpx.Response, entry: dict, started: float) -> ChatResponse:
        try:
            data = response.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            entry["error"] = "malformed response"
            raise BackendError(f"malformed wire response: {exc}") from exc
        if not isinstance(content, str) or not content:
            entry["error"] = "empty content"
            raise BackendError("wire response contained no message content")
        usage = data.get("usage") or {}
        latency = time.perf_counter() - started
        entry["latency"] = latency
        return ChatResponse(
            content=content,
            usage={
                "prompt_tokens": int(usage.get("prompt_tokens", 0)),
                "completion_tokens": int(usage.get("completion_tokens", 0)),
            },
            latency=latency,
        )


class RecordingBackend:
    """Wraps a backend to tally token usage and call counts for one run."""

    def __init__(self, inner: Backend):
        self._inner = inner
        self.calls = 0
        self.prompt_tokens = 0
        self.completion_tokens = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self._inner.complete(request)
        self.calls += 1
        self.prompt_tokens += response.usage.get("prompt_tokens", 0)
        self.completion_tokens += response.usage.get("completion_tokens", 0)
        return response

    def usage_summary(self) -> dict[str, int]:
        return {
            "calls": self.calls,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


def load_mock_script(path: str) -> dict:
    """Read a mock script file: {"responses": [...], "cycle": bool}."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    if not isinstance(spec, dict) or "responses" not in spec:
        raise ConfigError(f"mock script {path} must be an object with a 'responses' list")
    responses = spec["responses"]
    if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
        raise ConfigError(f"mock script {path}: 'responses' must be a list of strings")
    return {"responses": responses, "cycle": bool(spec.get("cycle", False))}


def make_mock_backend(script: dict | None) -> Backend:
    """Build a fresh mock backend; no script means the auto-synthesizing mock."""
    if script is None:
        return AutoMockBackend()
    return ScriptedBackend(script["responses"], cycle=script["cycle"])
