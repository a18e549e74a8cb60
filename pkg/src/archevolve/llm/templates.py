"""Prompt template registry with ``{{name}}`` placeholders."""

from __future__ import annotations

import re
from collections.abc import Mapping
from importlib import resources

from archevolve.errors import ArchEvolveError

PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


class TemplateError(ArchEvolveError):
    pass


class UnknownTemplateError(TemplateError):
    def __init__(self, template_id: str):
        self.template_id = template_id
        super().__init__(f"unknown prompt template {template_id!r}")


class UnboundPlaceholderError(TemplateError):
    def __init__(self, template_id: str, names: list[str]):
        self.template_id = template_id
        self.names = names
        super().__init__(
            f"template {template_id!r}: unbound placeholder(s) {', '.join(names)}"
        )


class TemplateRegistry:
    def __init__(self, templates: Mapping[str, str] | None = None):
        self._templates: dict[str, str] = dict(templates or {})

    @classmethod
    def default(cls) -> TemplateRegistry:
        found = {}
        root = resources.files("archevolve.llm") / "templates"
        for entry in root.iterdir():
            if entry.name.endswith(".txt"):
                found[entry.name[: -len(".txt")]] = entry.read_text(encoding="utf-8")
        return cls(found)

    def __contains__(self, template_id: object) -> bool:
        return template_id in self._templates

    def ids(self) -> list[str]:
        return sorted(self._templates)

    def add(self, template_id: str, text: str) -> None:
        self._templates[template_id] = text

    def get(self, template_id: str) -> str:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplateError(template_id) from None

    def placeholders(self, template_id: str) -> list[str]:
        names: list[str] = []
        for m in PLACEHOLDER.finditer(self.get(template_id)):
            if m.group(1) not in names:
                names.append(m.group(1))
        return names

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        """Substitute every placeholder in a single pass.

        Bound values are inserted literally; braces inside them are never
        expanded again.
        """
        text = self.get(template_id)
        missing = [n for n in self.placeholders(template_id) if n not in bindings]
        if missing:
            raise UnboundPlaceholderError(template_id, missing)
        return PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), text)


_DEFAULT: TemplateRegistry | None = None


def default_registry() -> TemplateRegistry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplateRegistry.default()
    return _DEFAULT


def render_template(
    template_id: str,
    bindings: Mapping[str, str],
    registry: TemplateRegistry | None = None,
) -> str:
    return (registry or default_registry()).render(template_id, bindings)
