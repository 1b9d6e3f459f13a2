"""Chat-completion transports: a generic HTTP client and a scripted mock.

The HTTP client posts an OpenAI-style JSON body to a configurable URL and
extracts the assistant text via a configurable field path, so it works
against common local model servers without vendor bindings. The mock replays
canned responses (and scripted failures) keyed by task id, which keeps the
whole orchestration testable without a network.
"""

from __future__ import annotations

import json
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Protocol

from gostudy.errors import GostudyError

DEFAULT_RESPONSE_PATH = "choices.0.message.content"


class BackendFailure(GostudyError):
    """Base class for chat-transport failures."""


class BackendUnavailable(BackendFailure):
    """Network-level failure (connection refused, DNS, scripted outage)."""


class BackendTimeout(BackendFailure):
    """The request exceeded the per-request timeout."""


class BackendError(BackendFailure):
    """Non-success HTTP status or unusable response body."""

    def __init__(self, status: int, detail: str) -> None:
        super().__init__(f"backend error (status {status}): {detail}")
        self.status = status
        self.detail = detail


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.0
    seed: int | None = 0


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_base: float = 1.0  # seconds; doubles per retry
    timeout: float = 120.0


@dataclass(frozen=True)
class ChatRequest:
    model: str
    prompt: str
    sampling: SamplingParams = SamplingParams()
    timeout: float = 120.0
    task_id: str | None = None  # lets scripted backends pick a response

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "user", "content": self.prompt}]


@dataclass(frozen=True)
class ChatResult:
    text: str
    latency_ms: int
    retries: int


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


def _is_retryable(exc: BackendFailure) -> bool:
    if isinstance(exc, (BackendUnavailable, BackendTimeout)):
        return True
    return isinstance(exc, BackendError) and exc.status >= 500


def chat(
    backend: ChatBackend,
    model: str,
    prompt: str,
    *,
    sampling: SamplingParams = SamplingParams(),
    policy: RetryPolicy = RetryPolicy(),
    task_id: str | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ChatResult:
    """Send one prompt through a backend with retries and measured latency.

    Transient failures (network, timeout, 5xx) are retried up to the policy
    budget with exponential backoff; other failures propagate immediately.
    The response text is returned verbatim.
    """
    request = ChatRequest(
        model=model,
        prompt=prompt,
        sampling=sampling,
        timeout=policy.timeout,
        task_id=task_id,
    )
    started = time.monotonic()
    for attempt in range(1, policy.attempts + 1):
        try:
            text = backend.complete(request)
        except BackendFailure as exc:
            if attempt >= policy.attempts or not _is_retryable(exc):
                exc.retries = attempt - 1  # lets callers record attempts made
                raise
            sleep(policy.backoff_base * 2 ** (attempt - 1))
            continue
        latency_ms = int((time.monotonic() - started) * 1000)
        return ChatResult(text=text, latency_ms=latency_ms, retries=attempt - 1)
    raise AssertionError("unreachable: retry loop exits via return or raise")


class HttpChatBackend:
    """POSTs chat-completion requests to a local or remote model server."""

    def __init__(self, url: str, response_path: str = DEFAULT_RESPONSE_PATH) -> None:
        self.url = url
        self.response_path = response_path

    def complete(self, request: ChatRequest) -> str:
        payload: dict[str, object] = {
            "model": request.model,
            "messages": request.messages(),
            "temperature": request.sampling.temperature,
        }
        if request.sampling.seed is not None:
            payload["seed"] = request.sampling.seed
        body = json.dumps(payload).encode("utf-8")
        http_request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(http_request, timeout=request.timeout) as resp:
                raw = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            excerpt = exc.read()[:500].decode("utf-8", errors="replace")
            raise BackendError(exc.code, excerpt) from exc
        except (socket.timeout, TimeoutError) as exc:
            raise BackendTimeout(f"no response within {request.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise BackendTimeout(f"no response within {request.timeout}s") from exc
            raise BackendUnavailable(str(exc.reason)) from exc

        try:
            document = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BackendError(200, f"response is not JSON: {raw[:200]}") from exc
        return _extract_text(document, self.response_path)


def _extract_text(document: object, path: str) -> str:
    """Walk a dotted field path (int segments index into lists)."""
    node = document
    for segment in path.split("."):
        try:
            if isinstance(node, list):
                node = node[int(segment)]
            elif isinstance(node, dict):
                node = node[segment]
            else:
                raise KeyError(segment)
        except (KeyError, IndexError, ValueError):
            raise BackendError(200, f"response missing field path {path!r}") from None
    if not isinstance(node, str):
        raise BackendError(200, f"field path {path!r} is not text")
    return node


@dataclass
class _MockEntry:
    responses: list[str]
    failures_before_success: int = 0
    failed: int = 0
    served: int = 0


class MockChatBackend:
    """Replays a script mapping task id -> canned responses and failures.

    Each scripted failure raises a transient error once; after
    ``failures_before_success`` of them the next call returns the first
    response. Repeated successful calls walk the response list, sticking on
    the last entry.
    """

    def __init__(self, script: dict[str, dict]) -> None:
        self._entries: dict[str, _MockEntry] = {}
        self._lock = threading.Lock()
        for task_id, spec in script.items():
            responses = list(spec.get("responses", []))
            if not responses:
                raise ValueError(f"mock script entry {task_id!r} has no responses")
            self._entries[task_id] = _MockEntry(
                responses=responses,
                failures_before_success=int(spec.get("failures_before_success", 0)),
            )

    @classmethod
    def from_file(cls, path: str) -> MockChatBackend:
        with open(path, encoding="utf-8") as handle:
            return cls(json.load(handle))

    def complete(self, request: ChatRequest) -> str:
        key = request.task_id
        with self._lock:
            entry = self._entries.get(key or "")
            if entry is None:
                raise BackendError(0, f"no scripted response for task {key!r}")
            if entry.failed < entry.failures_before_success:
                entry.failed += 1
                raise BackendUnavailable(
                    f"scripted failure {entry.failed}/{entry.failures_before_success}"
                    f" for task {key!r}"
                )
            index = min(entry.served, len(entry.responses) - 1)
            entry.served += 1
            return entry.responses[index]
