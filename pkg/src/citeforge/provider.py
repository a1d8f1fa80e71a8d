"""Chat-completion provider: one interface over HTTP backends and the mock.

A ``Provider`` routes requests to a backend by model name, retries transient
failures with exponential backoff, bounds the number of in-flight calls, and
appends one accounting event per successful call to an attached run log.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "CITEFORGE_API_KEY"

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"


class ProviderError(Exception):
    """Backend reported a non-retryable failure."""


class TransportError(ProviderError):
    """Retryable failure: connection trouble, 429, or a 5xx reply."""


class AuthError(ProviderError):
    """Authentication or authorization rejected by the backend."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT):
            raise ValueError(f"unknown message role {self.role!r}")
        if self.role == ROLE_USER and not self.content:
            raise ValueError("user message content must be non-empty")


@dataclass(frozen=True)
class ChatRequest:
    """One completion request; ``sample_count`` asks for n completions."""

    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    sample_count: int = 1
    max_output_tokens: int | None = None
    request_tag: str = ""

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ChatResponse:
    completions: tuple[str, ...]
    usage: Usage
    latency_ms: int = 0
    partial: bool = False
    retries: int = 0


@dataclass(frozen=True)
class DecoderRoles:
    """Model names for the three decoder roles of the pipeline."""

    extraction: str
    generation: str
    evaluation: str

    def validate(self, provider: "Provider") -> None:
        for role, model in (
            ("extraction", self.extraction),
            ("generation", self.generation),
            ("evaluation", self.evaluation),
        ):
            if not provider.has_backend(model):
                raise ProviderError(f"no backend configured for {role} model {model!r}")


def content_digest(obj) -> str:
    """Short stable digest of any JSON-serializable value."""
    payload = json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def messages_as_lists(messages) -> list[list[str]]:
    return [[m.role, m.content] for m in messages]


class Provider:
    """Thread-safe front end over one or more chat backends.

    ``backends`` maps model names to backend objects; ``default_backend``
    catches every other model name (the mock serves all models this way).
    """

    def __init__(
        self,
        backends: dict | None = None,
        default_backend=None,
        retry_budget: int = 3,
        backoff_base: float = 0.5,
        max_in_flight: int = 8,
        sink=None,
        store_payloads: bool = True,
    ):
        self._backends = dict(backends or {})
        self._default = default_backend
        self.retry_budget = retry_budget
        self.backoff_base = backoff_base
        self.sink = sink
        self.store_payloads = store_payloads
        self._gate = threading.Semaphore(max_in_flight)
        self._lock = threading.Lock()
        self._totals = {"prompt_tokens": 0, "completion_tokens": 0, "calls": 0}

    def has_backend(self, model: str) -> bool:
        return model in self._backends or self._default is not None

    def _backend_for(self, model: str):
        backend = self._backends.get(model, self._default)
        if backend is None:
            raise ProviderError(f"no backend configured for model {model!r}")
        return backend

    @property
    def totals(self) -> dict:
        with self._lock:
            return dict(self._totals)

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Run one request with retries; account exactly once on success."""
        backend = self._backend_for(request.model)
        retries = 0
        with self._gate:
            while True:
                try:
                    response = self._issue(backend, request)
                    break
                except TransportError as exc:
                    if retries >= self.retry_budget:
                        raise
                    delay = self.backoff_base * (2**retries)
                    retries += 1
                    logger.warning(
                        "retry %d/%d for %s call after %s",
                        retries, self.retry_budget, request.request_tag or "chat", exc,
                    )
                    if delay > 0:
                        time.sleep(delay)
        if not response.completions:
            raise ProviderError("backend returned zero completions")
        response = ChatResponse(
            completions=response.completions,
            usage=response.usage,
            latency_ms=response.latency_ms,
            partial=response.partial,
            retries=retries,
        )
        self._account(request, response)
        return response

    def _issue(self, backend, request: ChatRequest) -> ChatResponse:
        if request.sample_count == 1 or getattr(backend, "supports_sample_count", True):
            return backend.complete(request)
        # Backend cannot batch n completions: issue them one by one.
        completions: list[str] = []
        prompt_tokens = completion_tokens = latency = 0
        for _ in range(request.sample_count):
            single = backend.complete(
                ChatRequest(
                    model=request.model,
                    messages=request.messages,
                    temperature=request.temperature,
                    sample_count=1,
                    max_output_tokens=request.max_output_tokens,
                    request_tag=request.request_tag,
                )
            )
            completions.extend(single.completions)
            prompt_tokens += single.usage.prompt_tokens
            completion_tokens += single.usage.completion_tokens
            latency += single.latency_ms
        return ChatResponse(
            completions=tuple(completions),
            usage=Usage(prompt_tokens, completion_tokens),
            latency_ms=latency,
        )

    def _account(self, request: ChatRequest, response: ChatResponse) -> None:
        with self._lock:
            self._totals["prompt_tokens"] += response.usage.prompt_tokens
            self._totals["completion_tokens"] += response.usage.completion_tokens
            self._totals["calls"] += 1
        if self.sink is None:
            return
        event = {
            "type": "provider_call",
            "tag": request.request_tag,
            "model": request.model,
            "request_digest": content_digest(messages_as_lists(request.messages)),
            "response_digest": content_digest(list(response.completions)),
            "prompt_tokens": response.usage.prompt_tokens,
            "completion_tokens": response.usage.completion_tokens,
            "retries": response.retries,
            "latency_ms": response.latency_ms,
        }
        if self.store_payloads:
            event["request"] = messages_as_lists(request.messages)
            event["completions"] = list(response.completions)
        self.sink.append(event)


class HttpBackend:
    """Chat-completions-compatible HTTP backend.

    Posts the usual JSON wire shape (model, messages[], temperature, n) to
    ``{base_url}/chat/completions``. The API key comes from the
    ``CITEFORGE_API_KEY`` environment variable unless given explicitly.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        supports_sample_count: bool = True,
        session: requests.Session | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.supports_sample_count = supports_sample_count
        self._session = session or requests.Session()

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "n": request.sample_count,
        }
        if request.max_output_tokens is not None:
            payload["max_tokens"] = request.max_output_tokens
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        started = time.monotonic()
        try:
            http = self._session.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        latency_ms = int((time.monotonic() - started) * 1000)

        if http.status_code in (401, 403):
            raise AuthError(f"authentication failed ({http.status_code}): {http.text[:200]}")
        if http.status_code == 429 or http.status_code >= 500:
            raise TransportError(f"backend busy ({http.status_code}): {http.text[:200]}")
        if http.status_code != 200:
            raise ProviderError(f"backend error ({http.status_code}): {http.text[:500]}")

        try:
            body = http.json()
        except ValueError as exc:
            raise ProviderError(f"backend returned non-JSON body: {exc}") from exc
        if "error" in body:
            raise ProviderError(f"backend error: {body['error']}")
        choices = body.get("choices") or []
        completions = tuple(
            (choice.get("message") or {}).get("content") or "" for choice in choices
        )
        if not completions:
            raise ProviderError("backend returned zero completions")
        usage = body.get("usage") or {}
        partial = len(completions) < request.sample_count
        return ChatResponse(
            completions=completions,
            usage=Usage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            ),
            latency_ms=latency_ms,
            partial=partial,
        )
