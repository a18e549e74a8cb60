"""Requests, completions and transcripts exchanged with a language model."""

from __future__ import annotations

import hashlib
import threading
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any

from archevolve.errors import ArchEvolveError

PROVIDER_KINDS = ("live", "replay", "scripted")
DEFAULT_MODEL = "gpt-4o"


class ProviderError(ArchEvolveError):
    """The provider could not produce a completion."""


def prompt_digest(prompt: str) -> str:
    """Stable content hash of a fully rendered prompt."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    bindings: Mapping[str, str] = field(default_factory=dict)
    model_name: str = DEFAULT_MODEL
    temperature: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "bindings", dict(self.bindings))
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")


@dataclass(frozen=True)
class Completion:
    text: str
    provider: str
    prompt_digest: str
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.provider not in PROVIDER_KINDS:
            raise ValueError(f"unknown provider kind {self.provider!r}")


@dataclass(frozen=True)
class TranscriptEntry:
    request: PromptRequest
    prompt: str
    completion: Completion
    wall_time: float

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        data: dict[str, Any] = {
            "template_id": self.request.template_id,
            "model": self.request.model_name,
            "provider": self.completion.provider,
            "prompt_digest": self.completion.prompt_digest,
            "input_tokens": self.completion.input_tokens,
            "output_tokens": self.completion.output_tokens,
        }
        if timing:
            data["wall_time"] = round(self.wall_time, 6)
        return data


class Transcript:
    """Append-only record of every completion in one pipeline run."""

    def __init__(self) -> None:
        self._entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TranscriptEntry]:
        return iter(self.entries)

    def since(self, start: int) -> tuple[TranscriptEntry, ...]:
        return self.entries[start:]

    def to_list(self, timing: bool = False) -> list[dict[str, Any]]:
        return [e.to_dict(timing) for e in self.entries]

    @property
    def total_tokens(self) -> tuple[int, int]:
        entries = self.entries
        return (
            sum(e.completion.input_tokens for e in entries),
            sum(e.completion.output_tokens for e in entries),
        )
