"""Uniform access to chat-completion backends with caching and scripted replay.

Model identity is configuration: every endpoint (judge, augmentation generator,
audit evaluator) goes through the same `complete` call. Live responses are
cached content-addressed by (model name, prompt hash) so a frozen snapshot can
be replayed; scripted mock backends make the whole pipeline runnable offline.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .errors import AuthError, RequestTimeoutError, TransportError, UnscriptedRequest
from .prompting import RenderedPrompt
from .util import atomic_write_text, canonical_json, sha256_hex


@dataclass
class ModelEndpoint:
    """Configuration for one chat-completion backend."""

    name: str
    base_url: str = ""
    auth_env: str = ""
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("endpoint timeout must be positive")


@dataclass(frozen=True)
class CompletionRecord:
    request_hash: str
    raw_text: str  # stored unmodified, including whitespace
    latency_ms: float
    attempt: int
    timestamp: str
    cached: bool = False

    def to_dict(self) -> dict:
        return {
            "request_hash": self.request_hash,
            "raw_text": self.raw_text,
            "latency_ms": self.latency_ms,
            "attempt": self.attempt,
            "timestamp": self.timestamp,
        }


def request_hash(model_name: str, prompt: RenderedPrompt) -> str:
    return sha256_hex(f"{model_name}\n{prompt.content_hash}")


class HttpBackend:
    """OpenAI-style chat-completions transport with bounded retries."""

    live = True

    def __init__(self, endpoint: ModelEndpoint, session: requests.Session | None = None):
        self.endpoint = endpoint
        self.session = session or requests.Session()

    @property
    def name(self) -> str:
        return self.endpoint.name

    def _resolve_auth(self) -> str:
        if not self.endpoint.auth_env:
            return ""
        token = os.environ.get(self.endpoint.auth_env)
        if not token:
            raise AuthError(
                f"credential variable {self.endpoint.auth_env!r} is not set "
                f"(endpoint {self.endpoint.name})")
        return token

    def request(self, prompt: RenderedPrompt, script_keys: Sequence[str] = ()) -> tuple[str, int]:
        token = self._resolve_auth()
        url = self.endpoint.base_url.rstrip("/")
        if not url.endswith("/chat/completions"):
            url = url + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.endpoint.name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.endpoint.temperature,
        }
        last_error: Exception | None = None
        timed_out = False
        for attempt in range(self.endpoint.max_retries + 1):
            if attempt:
                time.sleep(min(0.5 * 2 ** (attempt - 1), 8.0))
            try:
                resp = self.session.post(url, json=body, headers=headers,
                                         timeout=self.endpoint.timeout)
            except requests.Timeout as exc:
                last_error, timed_out = exc, True
                continue
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_error = TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"HTTP {resp.status_code} from {self.endpoint.name}")
            if resp.status_code != 200:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"unreadable completion payload: {exc}") from exc
            return text, attempt
        if timed_out:
            raise RequestTimeoutError(
                f"{self.endpoint.name}: timed out after {self.endpoint.max_retries + 1} attempts")
        raise TransportError(
            f"{self.endpoint.name}: failed after {self.endpoint.max_retries + 1} attempts: {last_error}")


class MockBackend:
    """Scripted backend: canned raw texts keyed by request hash or caller-supplied keys."""

    live = False

    def __init__(self, name: str, script: Mapping[str, str], default_key: str = "*"):
        self.name = name
        self.script = dict(script)
        self.default_key = default_key
        self.calls = 0

    def request(self, prompt: RenderedPrompt, script_keys: Sequence[str] = ()) -> tuple[str, int]:
        self.calls += 1
        for key in (prompt.content_hash, request_hash(self.name, prompt), *script_keys,
                    self.default_key):
            if key in self.script:
                return self.script[key], 0
        tried = [prompt.content_hash[:12], *script_keys]
        raise UnscriptedRequest(
            f"mock backend {self.name!r} has no response for any of {tried}")


def mock_backend(script: Mapping[str, str], name: str = "mock") -> MockBackend:
    return MockBackend(name, script)


def _cache_path(cache_dir: Path, rhash: str) -> Path:
    return Path(cache_dir) / f"{rhash}.json"


def complete(backend, prompt: RenderedPrompt, cache_dir: Path | str | None = None,
             script_keys: Sequence[str] = ()) -> CompletionRecord:
    """Return the completion for `prompt`, serving live repeats from the cache.

    The cache is content-addressed by (model name, prompt hash); mock backends
    are deterministic and never persisted.
    """
    rhash = request_hash(backend.name, prompt)
    cacheable = bool(cache_dir) and getattr(backend, "live", False)
    if cacheable:
        path = _cache_path(Path(cache_dir), rhash)
        if path.exists():
            stored = json.loads(path.read_text("utf-8"))
            return CompletionRecord(cached=True, **stored)
    start = time.monotonic()
    raw_text, attempt = backend.request(prompt, script_keys)
    latency_ms = (time.monotonic() - start) * 1000.0
    record = CompletionRecord(
        request_hash=rhash,
        raw_text=raw_text,
        latency_ms=round(latency_ms, 3),
        attempt=attempt,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    if cacheable:
        path = _cache_path(Path(cache_dir), rhash)
        if not path.exists():
            atomic_write_text(path, canonical_json(record.to_dict()))
        else:
            # idempotent concurrent write: first content wins
            stored = json.loads(path.read_text("utf-8"))
            return CompletionRecord(cached=True, **stored)
    return record
