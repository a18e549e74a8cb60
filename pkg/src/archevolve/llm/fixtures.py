"""On-disk replay fixtures, one JSON file per prompt digest."""

from __future__ import annotations

import json
from collections.abc import Iterator
from dataclasses import asdict, dataclass
from pathlib import Path

from archevolve.errors import ArchEvolveError
from archevolve.llm.core import Completion, PromptRequest, prompt_digest


class FixtureError(ArchEvolveError):
    """A fixture file is corrupt or conflicts with another fixture."""


@dataclass(frozen=True)
class Fixture:
    digest: str
    template_id: str
    text: str
    model: str = ""
    input_tokens: int = 0
    output_tokens: int = 0
    prompt: str | None = None

    def to_json(self) -> str:
        data = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class FixtureStore:
    """Read-mostly mapping from prompt digest to recorded completion."""

    def __init__(self) -> None:
        self._by_digest: dict[str, Fixture] = {}

    def __len__(self) -> int:
        return len(self._by_digest)

    def __contains__(self, digest: object) -> bool:
        return digest in self._by_digest

    def __iter__(self) -> Iterator[Fixture]:
        return iter(self._by_digest[d] for d in sorted(self._by_digest))

    def get(self, digest: str) -> Fixture | None:
        return self._by_digest.get(digest)

    def add(self, fixture: Fixture, origin: str = "") -> None:
        known = self._by_digest.get(fixture.digest)
        if known is not None and known.text != fixture.text:
            where = f" ({origin})" if origin else ""
            raise FixtureError(
                f"ambiguous fixtures for digest {fixture.digest}{where}: "
                "two different completions recorded"
            )
        self._by_digest[fixture.digest] = fixture


def _read_fixture(path: Path) -> Fixture:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FixtureError(f"corrupt fixture file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise FixtureError(f"corrupt fixture file {path}: expected a JSON object")
    for key in ("digest", "template_id", "text"):
        if not isinstance(data.get(key), str):
            raise FixtureError(f"corrupt fixture file {path}: missing string field {key!r}")
    unknown = set(data) - set(Fixture.__dataclass_fields__)
    if unknown:
        raise FixtureError(f"corrupt fixture file {path}: unknown field(s) {sorted(unknown)}")
    prompt = data.get("prompt")
    if prompt is not None and prompt_digest(prompt) != data["digest"]:
        raise FixtureError(f"corrupt fixture file {path}: digest does not match prompt")
    try:
        return Fixture(**data)
    except TypeError as exc:
        raise FixtureError(f"corrupt fixture file {path}: {exc}") from None


def load_fixtures(path: str | Path) -> FixtureStore:
    """Load every ``*.json`` fixture below ``path``; idempotent."""
    root = Path(path)
    if not root.is_dir():
        raise FixtureError(f"fixture directory {root} does not exist")
    store = FixtureStore()
    for file in sorted(root.rglob("*.json")):
        store.add(_read_fixture(file), str(file))
    return store


def record_fixture(
    directory: str | Path,
    request: PromptRequest,
    completion: Completion,
    prompt: str | None = None,
) -> Path:
    """Persist ``completion`` as ``<digest>.json`` inside ``directory``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    if prompt is not None and prompt_digest(prompt) != completion.prompt_digest:
        raise FixtureError("completion digest does not match the rendered prompt")
    fixture = Fixture(
        digest=completion.prompt_digest,
        template_id=request.template_id,
        text=completion.text,
        model=request.model_name,
        input_tokens=completion.input_tokens,
        output_tokens=completion.output_tokens,
        prompt=prompt,
    )
    target = root / f"{fixture.digest}.json"
    if target.exists():
        existing = _read_fixture(target)
        if existing.text != fixture.text:
            raise FixtureError(
                f"ambiguous fixtures for digest {fixture.digest}: {target} already "
                "holds a different completion"
            )
        return target
    target.write_text(fixture.to_json(), encoding="utf-8")
    return target
