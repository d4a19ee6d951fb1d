"""Chat gateway shared by every LLM role.

All model calls go through :meth:`Gateway.chat`, which handles the response
cache, retries with exponential backoff, the in-flight cap, per-backend rate
limits and the per-question call trace.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .cache import ResponseCache, content_hash

log = logging.getLogger(__name__)

ROLES = ("summarizer", "explorer", "generator", "integrator", "reader")

# temperature, max_tokens
ROLE_DEFAULTS: dict[str, tuple[float, int]] = {
    "summarizer": (0.2, 512),
    "explorer": (1.2, 512),
    "generator": (1.2, 256),
    "integrator": (0.2, 1024),
    "reader": (0.2, 1024),
}


class LLMError(Exception):
    """A chat call failed after all retries."""


class BackendError(Exception):
    """A single transport-level failure; retried by the gateway."""


class MissingFixtureError(LookupError):
    """The scripted backend has no response for a request. Never retried or swallowed."""


@dataclass(frozen=True)
class RoleConfig:
    role: str
    model: str = "mock"
    temperature: float | None = None
    max_tokens: int | None = None
    backend: str = "default"

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        temp, max_tokens = ROLE_DEFAULTS[self.role]
        if self.temperature is None:
            object.__setattr__(self, "temperature", temp)
        if self.max_tokens is None:
            object.__setattr__(self, "max_tokens", max_tokens)
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def default_roles(model: str = "mock", backend: str = "default") -> dict[str, RoleConfig]:
    return {role: RoleConfig(role, model=model, backend=backend) for role in ROLES}


@dataclass(frozen=True)
class ChatRequest:
    role: str
    model: str
    temperature: float
    max_tokens: int
    messages: tuple[tuple[str, str], ...]
    backend: str = "default"
    question_id: str = ""
    discriminator: str = ""
    # Distinguishes repeated samples of an identical prompt (e.g. several
    # question-conditioned generations) so they do not share a cache entry.
    sample: int = 0

    @property
    def fixture_key(self) -> str:
        parts = [self.role, self.question_id]
        if self.discriminator:
            parts.append(self.discriminator)
        return "/".join(parts)

    @property
    def cache_key(self) -> str:
        return content_hash({
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [list(m) for m in self.messages],
            "sample": self.sample,
        })

    def message_dicts(self) -> list[dict[str, str]]:
        return [{"role": r, "content": c} for r, c in self.messages]


@dataclass
class ChatResponse:
    text: str
    usage: dict[str, int] = field(default_factory=dict)
    backend: str = ""
    cached: bool = False

    def payload(self) -> dict:
        return {"text": self.text, "usage": self.usage, "backend": self.backend}


class Backend(Protocol):
    name: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...


class OpenAIChatBackend:
    """JSON-over-HTTP chat-completions client (``POST {base_url}/chat/completions``)."""

    def __init__(self, base_url: str, api_key: str | None = None, *, name: str = "openai",
                 timeout: float = 120.0, client: httpx.Client | None = None):
        self.name = name
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)
        self.calls = 0

    @classmethod
    def from_env(cls, alias: str, **kwargs) -> "OpenAIChatBackend":
        """Read ``RGQA_<ALIAS>_BASE_URL`` and ``RGQA_<ALIAS>_API_KEY``."""
        prefix = f"RGQA_{alias.upper().replace('-', '_')}_"
        base = os.environ.get(prefix + "BASE_URL")
        if not base:
            raise LLMError(f"backend {alias!r}: {prefix}BASE_URL is not set")
        return cls(base, os.environ.get(prefix + "API_KEY"), name=alias, **kwargs)

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        body = {
            "model": request.model,
            "messages": request.message_dicts(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        self.calls += 1
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers,
                                     timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise BackendError(f"{self.name}: {exc}") from exc
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{self.name}: malformed response ({exc})") from exc
        if not isinstance(text, str):
            raise BackendError(f"{self.name}: response content is not a string")
        usage = data.get("usage") or {}
        usage = {k: int(usage[k]) for k in ("prompt_tokens", "completion_tokens") if k in usage}
        return ChatResponse(text=text, usage=usage, backend=self.name)


class ScriptedBackend:
    """Deterministic backend answering from a fixture map.

    Keys are ``role/question_id`` or ``role/question_id/discriminator``. Lookup
    tries the exact key, then ``role/question_id/*``, then ``role/*``. An
    optional ``responder`` callable is consulted after the map; a request that
    matches nothing raises :class:`MissingFixtureError`.
    """

    def __init__(self, fixtures: dict[str, str] | None = None, *, name: str = "mock",
                 responder: Callable[[ChatRequest], str | None] | None = None):
        self.name = name
        self.fixtures = dict(fixtures or {})
        self.responder = responder
        self.calls = 0
        self.log: list[str] = []

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "ScriptedBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), **kwargs)

    def lookup(self, request: ChatRequest) -> str | None:
        for key in (request.fixture_key, f"{request.role}/{request.question_id}/*", f"{request.role}/*"):
            if key in self.fixtures:
                return self.fixtures[key]
        if self.responder is not None:
            return self.responder(request)
        return None

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        self.log.append(request.fixture_key)
        text = self.lookup(request)
        if text is None:
            raise MissingFixtureError(f"no fixture for {request.fixture_key!r}")
        prompt_words = sum(len(c.split()) for _, c in request.messages)
        return ChatResponse(text=text, usage={"prompt_tokens": prompt_words, "completion_tokens": len(text.split())},
                            backend=self.name)


class FailingBackend:
    """Backend whose every call fails at the transport level."""

    def __init__(self, name: str = "down"):
        self.name = name
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        raise BackendError(f"{self.name}: connection refused")


class _RateLimiter:
    def __init__(self, per_second: float):
        self.interval = 1.0 / per_second
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            time.sleep(start - now)


@dataclass
class GatewayStats:
    requests: int = 0
    cache_hits: int = 0
    backend_calls: int = 0
    failures: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class Gateway:
    """Thread-safe chat client for all roles.

    ``backends`` maps alias -> backend; each role's :class:`RoleConfig` names
    the alias it uses. ``retries`` is the number of extra attempts after the
    first failure, with delays ``backoff * 2**i``.
    """

    def __init__(
        self,
        backends: dict[str, Backend] | Backend,
        roles: dict[str, RoleConfig] | None = None,
        *,
        cache: ResponseCache | None = None,
        retries: int = 2,
        backoff: float = 0.5,
        max_in_flight: int = 8,
        rate_limits: dict[str, float] | None = None,
    ):
        if not isinstance(backends, dict):
            backends = {"default": backends}
        self.backends = backends
        self.roles = roles or default_roles(backend=next(iter(backends)))
        missing = {rc.backend for rc in self.roles.values()} - set(backends)
        if missing:
            raise ValueError(f"roles reference unknown backend alias(es): {sorted(missing)}")
        self.cache = cache
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._limiters = {alias: _RateLimiter(rps) for alias, rps in (rate_limits or {}).items() if rps > 0}
        self._lock = threading.Lock()
        self.stats = GatewayStats()

    def request(self, role: str, messages: list[dict[str, str]], *, question_id: str = "",
                discriminator: str = "", sample: int = 0) -> ChatRequest:
        rc = self.roles[role]
        return ChatRequest(
            role=role,
            model=rc.model,
            temperature=rc.temperature,
            max_tokens=rc.max_tokens,
            messages=tuple((m["role"], m["content"]) for m in messages),
            backend=rc.backend,
            question_id=question_id,
            discriminator=discriminator,
            sample=sample,
        )

    def chat(self, request: ChatRequest, trace: list[dict] | None = None) -> ChatResponse:
        """Serve from cache or call the backend; append exactly one entry to ``trace``."""
        entry = {"role": request.role, "key": request.fixture_key, "cache_key": request.cache_key,
                 "messages": request.message_dicts()}
        try:
            resp = self._chat(request)
        except LLMError as exc:
            entry["error"] = str(exc)
            if trace is not None:
                trace.append(entry)
            raise
        entry["response"] = resp.text
        entry["usage"] = resp.usage
        if trace is not None:
            trace.append(entry)
        return resp

    def _chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.stats.requests += 1
        key = request.cache_key
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                with self._lock:
                    self.stats.cache_hits += 1
                    self._count_usage(hit.get("usage", {}))
                return ChatResponse(text=hit["text"], usage=hit.get("usage", {}), backend=hit.get("backend", ""),
                                    cached=True)
        backend = self.backends[request.backend]
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            limiter = self._limiters.get(request.backend)
            if limiter:
                limiter.wait()
            try:
                with self._slots:
                    with self._lock:
                        self.stats.backend_calls += 1
                    resp = backend.complete(request)
                break
            except BackendError as exc:
                last = exc
                log.warning("%s attempt %d/%d failed: %s", request.fixture_key, attempt + 1, self.retries + 1, exc)
        else:
            with self._lock:
                self.stats.failures += 1
            raise LLMError(f"{request.fixture_key}: failed after {self.retries + 1} attempts: {last}")
        if self.cache is not None:
            self.cache.put(key, resp.payload())
        with self._lock:
            self._count_usage(resp.usage)
        return resp

    def _count_usage(self, usage: dict) -> None:
        self.stats.prompt_tokens += int(usage.get("prompt_tokens", 0))
        self.stats.completion_tokens += int(usage.get("completion_tokens", 0))
