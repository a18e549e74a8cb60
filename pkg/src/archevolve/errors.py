"""Exception hierarchy shared by all archevolve modules."""

from __future__ import annotations

from dataclasses import dataclass


class ArchEvolveError(Exception):
    """Base class for every error raised by archevolve."""


@dataclass(frozen=True)
class SourceSpan:
    """1-based position inside a text document."""

    line: int
    column: int

    def __post_init__(self) -> None:
        if self.line < 1 or self.column < 1:
            raise ValueError(f"invalid source span {self.line}:{self.column}")

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"

    @classmethod
    def clamp(cls, text: str, line: int, column: int) -> SourceSpan:
        """Build a span forced inside the bounds of ``text``."""
        lines = text.split("\n")
        line = min(max(line, 1), len(lines))
        column = min(max(column, 1), len(lines[line - 1]) + 1)
        return cls(line, column)


class SpannedError(ArchEvolveError):
    """An error that points at a location in a source document."""

    def __init__(self, message: str, span: SourceSpan | None = None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)
