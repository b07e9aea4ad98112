"""Uniform chat-completion interface with live HTTP and scripted mock backends.

Every call carries an explicit :class:`CallScope` token; the scope is where
call budgets are counted and where full prompts are persisted, so no code
path can consume a model call without attribution.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests
import yaml

from .errors import BackendUnavailable, ScriptExhausted, ScriptMismatch

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "CRASHRESOLVER_API_ENDPOINT"
API_KEY_ENV = "CRASHRESOLVER_API_KEY"
MODEL_ENV = "CRASHRESOLVER_MODEL"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass
class ChatRequest:
    messages: list[tuple[str, str]]
    temperature: float = 0.0
    max_output_tokens: int = 4096
    seed_hint: int | None = None

    def prompt_text(self) -> str:
        return "\n".join(f"[{role}]\n{text}" for role, text in self.messages)

    def digest(self) -> str:
        return hashlib.sha256(self.prompt_text().encode("utf-8", "surrogateescape")).hexdigest()


@dataclass
class CallRecord:
    digest: str
    temperature: float
    latency: float
    label: str


@dataclass
class CallScope:
    """Attribution token for one trajectory's model calls.

    When ``prompt_dir`` is set, the full prompt of every call is written
    there (one file per call) for audit and debugging.
    """

    name: str
    prompt_dir: Path | None = None
    calls: list[CallRecord] = field(default_factory=list)


def count_calls(scope: CallScope) -> int:
    """Logical model calls charged to the scope; retries count once."""
    return len(scope.calls)


# --- backends -----------------------------------------------------------------


class HttpChatBackend:
    """Standard chat-completions JSON over HTTP with bearer-token auth.

    Transient failures (connection errors, retryable status codes) are
    retried with exponential backoff, three attempts total.  Backends that
    reject a temperature parameter are handled by ``supports_temperature=False``,
    which drops the field and uses the n-completions parameter when several
    samples are requested at once.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        model: str,
        supports_temperature: bool = True,
        max_attempts: int = 3,
        backoff: float = 0.5,
        request_timeout: float = 120.0,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.supports_temperature = supports_temperature
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.request_timeout = request_timeout

    def _post(self, payload: dict) -> dict:
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: str = ""
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.request_timeout
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                logger.warning("backend request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}"
                logger.warning("backend returned %s (attempt %d)", last_error, attempt + 1)
                continue
            if response.status_code != 200:
                raise BackendUnavailable(f"HTTP {response.status_code}: {response.text[:500]}")
            return response.json()
        raise BackendUnavailable(f"backend unavailable after {self.max_attempts} attempts: {last_error}")

    def _payload(self, request: ChatRequest, n: int = 1) -> dict:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": role, "content": text} for role, text in request.messages],
            "max_tokens": request.max_output_tokens,
        }
        if self.supports_temperature:
            payload["temperature"] = request.temperature
        if n != 1:
            payload["n"] = n
        if request.seed_hint is not None:
            payload["seed"] = request.seed_hint
        return payload

    def complete(self, request: ChatRequest) -> str:
        data = self._post(self._payload(request))
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc

    def multi_sample(self, request: ChatRequest, n: int) -> list[str]:
        """n samples; one request with the n parameter when temperature is unsupported."""
        if self.supports_temperature:
            return [self.complete(request) for _ in range(n)]
        data = self._post(self._payload(request, n=n))
        try:
            return [choice["message"]["content"] for choice in data["choices"]]
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable(f"malformed backend response: {exc}") from exc


@dataclass
class ScriptStep:
    response: str
    when_contains: str | None = None


@dataclass
class ScriptedBehavior:
    steps: list[ScriptStep]


class MockBackend:
    """Deterministic scripted backend for tests.

    Responses are consumed strictly in order; a step's ``when_contains``
    predicate asserts on the prompt and mismatches raise instead of
    improvising, as does running past the end of the script.
    """

    def __init__(self, script: ScriptedBehavior) -> None:
        self.script = script
        self._cursor = 0

    def complete(self, request: ChatRequest) -> str:
        if self._cursor >= len(self.script.steps):
            raise ScriptExhausted(
                f"mock script exhausted after {len(self.script.steps)} response(s)"
            )
        step = self.script.steps[self._cursor]
        if step.when_contains is not None and step.when_contains not in request.prompt_text():
            raise ScriptMismatch(
                f"scripted step {self._cursor} expected the prompt to contain "
                f"{step.when_contains!r}"
            )
        self._cursor += 1
        return step.response


def load_mock_script(path: str | Path) -> ScriptedBehavior:
    """Load a YAML mock script: ``steps: [{response: ..., when_contains: ...}]``."""
    payload = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    steps = [
        ScriptStep(response=item["response"], when_contains=item.get("when_contains"))
        for item in payload["steps"]
    ]
    return ScriptedBehavior(steps=steps)


# --- gateway ------------------------------------------------------------------


class ModelGateway:
    """Front door for model calls: logging, prompt persistence, attribution."""

    def __init__(self, backend) -> None:
        self.backend = backend

    def complete(self, request: ChatRequest, scope: CallScope) -> str:
        label = type(self.backend).__name__
        started = time.monotonic()
        deterministic = isinstance(self.backend, MockBackend)
        if scope.prompt_dir is not None:
            scope.prompt_dir.mkdir(parents=True, exist_ok=True)
            path = scope.prompt_dir / f"call-{len(scope.calls) + 1:03d}.txt"
            path.write_text(request.prompt_text(), encoding="utf-8", errors="surrogateescape")
        try:
            return self.backend.complete(request)
        finally:
            latency = 0.0 if deterministic else time.monotonic() - started
            scope.calls.append(
                CallRecord(
                    digest=request.digest(),
                    temperature=request.temperature,
                    latency=latency,
                    label=label,
                )
            )
