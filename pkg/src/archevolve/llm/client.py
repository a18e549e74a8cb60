"""The client the pipelines talk to: render, complete, record, extract."""

from __future__ import annotations

import logging
import re
import time
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import TypeVar

from archevolve.errors import ArchEvolveError
from archevolve.llm.core import (
    DEFAULT_MODEL,
    Completion,
    PromptRequest,
    ProviderError,
    Transcript,
    TranscriptEntry,
    prompt_digest,
)
from archevolve.llm.fixtures import record_fixture
from archevolve.llm.providers import Provider
from archevolve.llm.templates import TemplateRegistry, default_registry

log = logging.getLogger(__name__)

T = TypeVar("T")

_FENCE = re.compile(r"^```[ \t]*([A-Za-z0-9_+\-]*)[ \t]*\n(.*?)^```[ \t]*$", re.M | re.S)


class ExtractionError(ArchEvolveError):
    """No usable fenced block in a completion."""


class StructuredOutputError(ArchEvolveError):
    """A completion stayed unusable after the repair re-prompt."""

    def __init__(self, template_id: str, error: str):
        self.template_id = template_id
        self.error = error
        super().__init__(
            f"output of {template_id!r} unusable after one repair attempt: {error}"
        )


def fenced_blocks(text: str) -> list[tuple[str, str]]:
    """All ``(language, body)`` fenced blocks in ``text``, in order."""
    return [(m.group(1), m.group(2)) for m in _FENCE.finditer(text)]


def extract_fenced(text: str, lang: str | tuple[str, ...] | None = None) -> str:
    """Return the first fenced block tagged with ``lang``.

    When no block carries one of the wanted tags, the first untagged block is
    used; otherwise :class:`ExtractionError` is raised.
    """
    wanted = (lang,) if isinstance(lang, str) else lang
    blocks = fenced_blocks(text)
    if wanted:
        for tag, body in blocks:
            if tag in wanted:
                return body
    for tag, body in blocks:
        if not tag or not wanted:
            return body
    expected = f"a ```{wanted[0]} fenced block" if wanted else "a fenced block"
    raise ExtractionError(f"expected {expected} in the answer")


class LLMClient:
    """Renders templates, calls the provider and keeps the transcript."""

    def __init__(
        self,
        provider: Provider,
        *,
        model: str = DEFAULT_MODEL,
        temperature: float = 0.0,
        registry: TemplateRegistry | None = None,
        transcript: Transcript | None = None,
        record_to: str | Path | None = None,
    ):
        self.provider = provider
        self.model = model
        self.temperature = temperature
        self.registry = registry or default_registry()
        self.transcript = transcript if transcript is not None else Transcript()
        self.record_to = Path(record_to) if record_to is not None else None

    def request(self, template_id: str, bindings: Mapping[str, str]) -> PromptRequest:
        return PromptRequest(template_id, bindings, self.model, self.temperature)

    def render(self, request: PromptRequest) -> str:
        return self.registry.render(request.template_id, request.bindings)

    def complete(self, request: PromptRequest) -> Completion:
        prompt = self.render(request)
        digest = prompt_digest(prompt)
        started = time.perf_counter()
        completion = self.provider.generate(request, prompt, digest)
        elapsed = time.perf_counter() - started
        if completion.prompt_digest != digest:
            raise ProviderError(f"provider returned a completion for another prompt ({request.template_id!r})")
        self.transcript.append(TranscriptEntry(request, prompt, completion, elapsed))
        if self.record_to is not None:
            record_fixture(self.record_to, request, completion, prompt)
        log.debug("%s via %s (%.3fs)", request.template_id, completion.provider, elapsed)
        return completion

    def ask(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return self.complete(self.request(template_id, bindings)).text

    def ask_structured(
        self,
        template_id: str,
        bindings: Mapping[str, str],
        parse: Callable[[str], T],
        fence: str | tuple[str, ...] = "json",
        errors: tuple[type[BaseException], ...] = (ArchEvolveError, ValueError),
    ) -> T:
        """Complete, extract the fenced block and parse it.

        One repair re-prompt is sent when extraction or parsing fails; a
        second failure raises :class:`StructuredOutputError`.  Provider
        failures propagate unchanged.
        """
        request = self.request(template_id, bindings)
        text = self.complete(request).text
        return self.parse_or_repair(request, text, parse, fence, errors)

    def parse_or_repair(
        self,
        request: PromptRequest,
        text: str,
        parse: Callable[[str], T],
        fence: str | tuple[str, ...] = "json",
        errors: tuple[type[BaseException], ...] = (ArchEvolveError, ValueError),
    ) -> T:
        """Parse an existing completion of ``request``, repairing it once."""
        try:
            return parse(extract_fenced(text, fence))
        except errors as exc:
            first_error = str(exc)
        log.info("repairing output of %s: %s", request.template_id, first_error)
        tag = fence if isinstance(fence, str) else fence[0]
        repaired = self.ask(
            "repair",
            {
                "original_prompt": self.render(request),
                "previous_output": text,
                "error": first_error,
                "fence": tag,
            },
        )
        try:
            return parse(extract_fenced(repaired, fence))
        except errors as exc:
            raise StructuredOutputError(request.template_id, str(exc)) from exc
