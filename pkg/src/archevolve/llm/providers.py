"""Completion providers: live HTTPS, replay from fixtures, scripted queues."""

from __future__ import annotations

import collections
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from archevolve.llm.core import Completion, PromptRequest, ProviderError
from archevolve.llm.fixtures import FixtureStore, load_fixtures

log = logging.getLogger(__name__)

API_KEY_ENV = "ARCHEVOLVE_API_KEY"
ENDPOINT_ENV = "ARCHEVOLVE_ENDPOINT"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"

SYSTEM_PROMPT = (
    "You are a careful assistant for automotive software engineers. "
    "When asked for machine-readable output, answer inside the requested "
    "fenced block and nothing else inside that block."
)


class FixtureMissError(ProviderError):
    def __init__(self, template_id: str, digest: str):
        self.template_id = template_id
        self.digest = digest
        super().__init__(
            f"no replay fixture for template {template_id!r} (digest {digest})"
        )


class ScriptExhaustedError(ProviderError):
    pass


class Provider:
    """Produces the completion text for a rendered prompt."""

    kind = "scripted"
    networked = False

    def generate(self, request: PromptRequest, prompt: str, digest: str) -> Completion:
        raise NotImplementedError


ScriptEntry = Union[str, Callable[[PromptRequest, str], str]]


class ScriptedProvider(Provider):
    """Returns queued responses in order.

    An entry may be a callable taking ``(request, prompt)`` so tests can
    compute the answer from the prompt.
    """

    kind = "scripted"

    def __init__(self, responses: Iterable[ScriptEntry] = ()):
        self._queue: collections.deque[ScriptEntry] = collections.deque(responses)
        self._lock = threading.Lock()

    def push(self, *responses: ScriptEntry) -> None:
        with self._lock:
            self._queue.extend(responses)

    @property
    def remaining(self) -> int:
        return len(self._queue)

    def generate(self, request: PromptRequest, prompt: str, digest: str) -> Completion:
        with self._lock:
            if not self._queue:
                raise ScriptExhaustedError(
                    f"scripted provider has no response left for {request.template_id!r}"
                )
            entry = self._queue.popleft()
        text = entry(request, prompt) if callable(entry) else entry
        return Completion(text, "scripted", digest)


class ReplayProvider(Provider):
    """Serves recorded completions keyed by prompt digest; never networked."""

    kind = "replay"

    def __init__(self, store: FixtureStore):
        self.store = store

    @classmethod
    def from_directory(cls, path: str | Path) -> ReplayProvider:
        return cls(load_fixtures(path))

    def generate(self, request: PromptRequest, prompt: str, digest: str) -> Completion:
        fixture = self.store.get(digest)
        if fixture is None:
            raise FixtureMissError(request.template_id, digest)
        return Completion(
            fixture.text, "replay", digest, fixture.input_tokens, fixture.output_tokens
        )


# (url, body, headers, timeout) -> (status, response body)
Transport = Callable[[str, bytes, dict[str, str], float], tuple[int, bytes]]


def urllib_transport(
    url: str, body: bytes, headers: dict[str, str], timeout: float
) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


@dataclass
class LiveConfig:
    api_key: str
    endpoint: str = DEFAULT_ENDPOINT
    timeout: float = 120.0
    max_attempts: int = 3
    backoff: float = 1.0

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None) -> LiveConfig:
        env = dict(os.environ) if env is None else env
        key = env.get(API_KEY_ENV, "")
        if not key:
            raise ProviderError(f"live provider needs the {API_KEY_ENV} environment variable")
        return cls(api_key=key, endpoint=env.get(ENDPOINT_ENV) or DEFAULT_ENDPOINT)


class LiveProvider(Provider):
    """OpenAI-compatible chat-completion client.

    Network errors, HTTP 429 and 5xx responses are retried with
    exponential backoff up to ``max_attempts`` in total.
    """

    kind = "live"
    networked = True

    def __init__(
        self,
        config: LiveConfig,
        transport: Transport = urllib_transport,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.transport = transport
        self.sleep = sleep

    def payload(self, request: PromptRequest, prompt: str) -> bytes:
        return json.dumps(
            {
                "model": request.model_name,
                "temperature": request.temperature,
                "messages": [
                    {"role": "system", "content": SYSTEM_PROMPT},
                    {"role": "user", "content": prompt},
                ],
            }
        ).encode("utf-8")

    def generate(self, request: PromptRequest, prompt: str, digest: str) -> Completion:
        body = self.payload(request, prompt)
        headers = {
            "Content-Type": "application/json",
            "Authorization": f"Bearer {self.config.api_key}",
        }
        last_error = ""
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                status, raw = self.transport(
                    self.config.endpoint, body, headers, self.config.timeout
                )
            except OSError as exc:
                last_error = f"network error: {exc}"
            else:
                if status == 200:
                    return self._parse(raw, digest)
                last_error = f"HTTP {status}: {raw[:200].decode('utf-8', 'replace')}"
                if status != 429 and status < 500:
                    break
            if attempt < self.config.max_attempts:
                delay = self.config.backoff * 2 ** (attempt - 1)
                log.warning("live completion failed (%s); retrying in %.1fs", last_error, delay)
                self.sleep(delay)
        raise ProviderError(
            f"live completion for {request.template_id!r} failed: {last_error}"
        )

    @staticmethod
    def _parse(raw: bytes, digest: str) -> Completion:
        try:
            data = json.loads(raw)
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage") or {}
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed chat-completion response: {exc}") from None
        if not isinstance(text, str):
            raise ProviderError("malformed chat-completion response: content is not text")
        return Completion(
            text,
            "live",
            digest,
            int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
        )
