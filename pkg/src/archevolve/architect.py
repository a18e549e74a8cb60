"""Architecture modification suggestions through a three-step prompt chain.

Step 1 asks for options with and without the new component, step 2 analyses
each option, step 3 rates effort and impact and compares the options.  Every
step answers with JSON validated against a schema, so the returned report is
always complete.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from archevolve.errors import ArchEvolveError
from archevolve.llm import LLMClient, Transcript

KINDS = ("modify_existing", "introduce_component")
LEVELS = ("low", "medium", "high")
DEFAULT_BYTE_CAP = 200_000

_KIND_TEMPLATE = {
    "modify_existing": "identify-options-modify",
    "introduce_component": "identify-options-new",
}
_KIND_PREFIX = {"modify_existing": "M", "introduce_component": "N"}
_KIND_LABEL = {
    "modify_existing": "modify existing system",
    "introduce_component": "introduce new component",
}


class CorpusError(ArchEvolveError):
    pass


class ReportError(ArchEvolveError):
    """A report violates its structural invariants."""


class AssistantError(ArchEvolveError):
    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


# -- corpus ingestion ----------------------------------------------------


@dataclass(frozen=True)
class CorpusDigest:
    component_name: str
    tree: str
    files: tuple[tuple[str, str], ...]
    total_bytes: int
    truncated: bool = False

    def render(self) -> str:
        out = [f"### component: {self.component_name}\n", self.tree]
        for path, contents in self.files:
            out.append(f"=== {path} ===\n")
            out.append(contents if contents.endswith("\n") or not contents else contents + "\n")
        if self.truncated:
            out.append(f"=== [truncated: corpus exceeds the byte cap, {self.total_bytes} bytes total] ===\n")
        return "".join(out)


def _read_text(path: Path) -> str | None:
    data = path.read_bytes()
    if b"\0" in data[:8192]:
        return None
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return None


def _render_tree(name: str, paths: list[str]) -> str:
    tree: dict[str, Any] = {}
    for path in paths:
        node = tree
        for part in path.split("/"):
            node = node.setdefault(part, {})
    lines = [f"{name}/"]

    def walk(node: dict[str, Any], prefix: str) -> None:
        names = sorted(node)
        for i, child in enumerate(names):
            last = i == len(names) - 1
            is_dir = bool(node[child])
            lines.append(f"{prefix}{'`-- ' if last else '|-- '}{child}{'/' if is_dir else ''}")
            if is_dir:
                walk(node[child], prefix + ("    " if last else "|   "))

    walk(tree, "")
    return "\n".join(lines) + "\n"


def ingest_corpus(
    root: str | Path, name: str | None = None, byte_cap: int = DEFAULT_BYTE_CAP
) -> CorpusDigest:
    """Flatten a source tree: folder structure, then every text file.

    Traversal is lexicographic by relative path; hidden entries and binary
    files are skipped.  Contents beyond ``byte_cap`` UTF-8 bytes are cut off
    and the digest is marked truncated.
    """
    base = Path(root)
    if not base.is_dir():
        raise CorpusError(f"cannot read corpus root {base}")
    texts: list[tuple[str, str]] = []
    try:
        candidates = sorted(
            p for p in base.rglob("*")
            if p.is_file() and not any(part.startswith(".") for part in p.relative_to(base).parts)
        )
        for file in sorted(candidates, key=lambda p: p.relative_to(base).as_posix()):
            text = _read_text(file)
            if text is not None:
                texts.append((file.relative_to(base).as_posix(), text))
    except OSError as exc:
        raise CorpusError(f"cannot read corpus root {base}: {exc}") from None
    if not texts:
        raise CorpusError(f"corpus {base} contains no text files")
    component = name or base.name
    total = sum(len(t.encode("utf-8")) for _, t in texts)
    kept: list[tuple[str, str]] = []
    budget = byte_cap
    for path, text in texts:
        size = len(text.encode("utf-8"))
        if size <= budget:
            kept.append((path, text))
            budget -= size
            continue
        if budget > 0:
            kept.append((path, text.encode("utf-8")[:budget].decode("utf-8", "ignore")))
        break
    return CorpusDigest(
        component,
        _render_tree(component, [p for p, _ in texts]),
        tuple((f"{component}/{p}", t) for p, t in kept),
        total,
        total > byte_cap,
    )


def ingest_system(root: str | Path, byte_cap: int = DEFAULT_BYTE_CAP) -> list[CorpusDigest]:
    """One digest per component directory below ``root``."""
    base = Path(root)
    if not base.is_dir():
        raise CorpusError(f"cannot read corpus root {base}")
    dirs = sorted(p for p in base.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not dirs:
        return [ingest_corpus(base, byte_cap=byte_cap)]
    return [ingest_corpus(d, byte_cap=byte_cap) for d in dirs]


def render_digests(digests: list[CorpusDigest]) -> str:
    return "\n".join(d.render() for d in digests)


def read_specs(path: str | Path) -> str:
    """A spec file, or every ``*.md`` file of a directory concatenated."""
    p = Path(path)
    if p.is_dir():
        parts = [f"<!-- {f.name} -->\n{f.read_text(encoding='utf-8')}" for f in sorted(p.glob("*.md"))]
        return "\n".join(parts)
    return p.read_text(encoding="utf-8")


# -- report types --------------------------------------------------------


@dataclass(frozen=True)
class ArchitectInput:
    guidelines: str = ""

    @classmethod
    def load(cls, path: str | Path | None) -> ArchitectInput:
        if path is None or not Path(path).is_file():
            return cls()
        return cls(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ModificationOption:
    id: str
    title: str
    kind: str
    description: str
    required_changes: tuple[str, ...] = ()
    advantages: tuple[str, ...] = ()
    disadvantages: tuple[str, ...] = ()
    interface_notes: str = ""
    effort: str | None = None
    impact: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ReportError(f"option {self.id}: unknown kind {self.kind!r}")
        for level in (self.effort, self.impact):
            if level is not None and level not in LEVELS:
                raise ReportError(f"option {self.id}: level {level!r} not in {LEVELS}")

    @property
    def analyzed(self) -> bool:
        return bool(self.required_changes and self.advantages and self.disadvantages)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "kind": self.kind,
            "description": self.description,
            "required_changes": list(self.required_changes),
            "advantages": list(self.advantages),
            "disadvantages": list(self.disadvantages),
            "interface_notes": self.interface_notes,
            "effort": self.effort,
            "impact": self.impact,
        }


@dataclass
class ArchitectureReport:
    options: list[ModificationOption]
    comparison: str
    transcript: Transcript = field(default_factory=Transcript)
    requirement: str = ""

    def validate(self, require_both_kinds: bool = True) -> None:
        if not self.options:
            raise ReportError("report has no options")
        for opt in self.options:
            if not opt.analyzed:
                raise ReportError(f"option {opt.id} lacks changes, advantages or disadvantages")
            if opt.effort is None or opt.impact is None:
                raise ReportError(f"option {opt.id} lacks an effort or impact estimate")
        if not self.comparison.strip():
            raise ReportError("report has no comparison")
        if require_both_kinds:
            for kind in KINDS:
                if not any(o.kind == kind for o in self.options):
                    raise ReportError(f"report has no {kind} option")

    def to_dict(self) -> dict[str, Any]:
        return {
            "requirement": self.requirement,
            "options": [o.to_dict() for o in self.options],
            "comparison": self.comparison,
            "transcript": self.transcript.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_markdown(self) -> str:
        out = ["# Architecture modification options\n\n"]
        if self.requirement:
            out.append(f"Requirement: {self.requirement.strip()}\n\n")
        out.append("| Option | Kind | Effort | Impact |\n|---|---|---|---|\n")
        for o in self.options:
            out.append(f"| {o.id}: {o.title} | {_KIND_LABEL[o.kind]} | {o.effort} | {o.impact} |\n")
        for o in self.options:
            out.append(f"\n## {o.id}: {o.title}\n\n")
            out.append(f"Kind: {_KIND_LABEL[o.kind]}. Effort: {o.effort}. Impact: {o.impact}.\n\n")
            out.append(o.description.strip() + "\n")
            for heading, items in (
                ("Required changes", o.required_changes),
                ("Advantages", o.advantages),
                ("Disadvantages", o.disadvantages),
            ):
                out.append(f"\n### {heading}\n\n")
                out.extend(f"- {item}\n" for item in items)
            if o.interface_notes:
                out.append(f"\n### Interface compatibility\n\n{o.interface_notes.strip()}\n")
        out.append(f"\n## Comparison\n\n{self.comparison.strip()}\n")
        return "".join(out)


# -- schemas -------------------------------------------------------------

_TEXT = {"type": "string", "minLength": 1}
_TEXT_LIST = {"type": "array", "minItems": 1, "items": _TEXT}

OPTIONS_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["options"],
    "additionalProperties": False,
    "properties": {
        "options": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["title", "description"],
                "additionalProperties": False,
                "properties": {"title": _TEXT, "description": _TEXT},
            },
        }
    },
}

ANALYSIS_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["required_changes", "advantages", "disadvantages"],
    "additionalProperties": False,
    "properties": {
        "required_changes": _TEXT_LIST,
        "advantages": _TEXT_LIST,
        "disadvantages": _TEXT_LIST,
        "interface_notes": {"type": "string"},
    },
}

ESTIMATE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["estimates", "comparison"],
    "additionalProperties": False,
    "properties": {
        "estimates": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "effort", "impact"],
                "additionalProperties": False,
                "properties": {
                    "id": _TEXT,
                    "effort": {"enum": list(LEVELS)},
                    "impact": {"enum": list(LEVELS)},
                    "rationale": {"type": "string"},
                },
            },
        },
        "comparison": _TEXT,
    },
}


def _schema_text(schema: dict[str, Any]) -> str:
    return json.dumps(schema, indent=2, sort_keys=True)


def _load_valid(text: str, schema: dict[str, Any]) -> Any:
    data = json.loads(text)
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ValueError(f"schema violation at {path}: {exc.message}") from None
    return data


@dataclass(frozen=True)
class AssistantContext:
    requirement: str
    system_spec: str = ""
    component_spec: str = ""
    guidelines: str = ""
    system_digest: str = ""
    component_digest: str = ""

    def bindings(self) -> dict[str, str]:
        return {
            "requirement": self.requirement.strip(),
            "guidelines": self.guidelines.strip() or "(none)",
            "system_spec": self.system_spec.strip() or "(none)",
            "component_spec": self.component_spec.strip() or "(none)",
            "system_digest": self.system_digest.strip() or "(none)",
            "component_digest": self.component_digest.strip() or "(none)",
        }


# -- steps ---------------------------------------------------------------


def identify_options(context: AssistantContext, llm: LLMClient) -> list[ModificationOption]:
    """Draft options for both kinds; ids are M1.. and N1.. in answer order."""
    if not context.requirement.strip():
        raise ValueError("requirement must not be empty")
    drafts: list[ModificationOption] = []
    bindings = context.bindings()
    bindings["schema"] = _schema_text(OPTIONS_SCHEMA)
    for kind in KINDS:
        data = llm.ask_structured(
            _KIND_TEMPLATE[kind], bindings, lambda t: _load_valid(t, OPTIONS_SCHEMA)
        )
        for n, item in enumerate(data["options"], 1):
            drafts.append(
                ModificationOption(
                    f"{_KIND_PREFIX[kind]}{n}", item["title"], kind, item["description"]
                )
            )
    return drafts


def _draft_text(option: ModificationOption) -> str:
    return json.dumps(
        {"id": option.id, "kind": option.kind, "title": option.title, "description": option.description},
        indent=2,
        ensure_ascii=False,
    )


def analyze_options(
    drafts: list[ModificationOption],
    context: AssistantContext,
    llm: LLMClient,
    max_workers: int = 1,
) -> list[ModificationOption]:
    """Enrich every draft with changes, advantages and disadvantages.

    With ``max_workers > 1`` the per-option calls run concurrently; results
    keep draft order.
    """
    if not drafts:
        raise ValueError("at least one draft option is required")
    base = context.bindings()
    base["schema"] = _schema_text(ANALYSIS_SCHEMA)

    def enrich(option: ModificationOption) -> ModificationOption:
        bindings = dict(base, option=_draft_text(option))
        data = llm.ask_structured(
            "analyze-option", bindings, lambda t: _load_valid(t, ANALYSIS_SCHEMA)
        )
        return replace(
            option,
            required_changes=tuple(data["required_changes"]),
            advantages=tuple(data["advantages"]),
            disadvantages=tuple(data["disadvantages"]),
            interface_notes=data.get("interface_notes", ""),
        )

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            return list(pool.map(enrich, drafts))
    return [enrich(d) for d in drafts]


def estimate_effort(
    analyzed: list[ModificationOption], context: AssistantContext, llm: LLMClient
) -> ArchitectureReport:
    if not analyzed or not all(o.analyzed for o in analyzed):
        raise ValueError("every option must be analysed before estimation")
    ids = [o.id for o in analyzed]

    def parse(text: str) -> dict[str, Any]:
        data = _load_valid(text, ESTIMATE_SCHEMA)
        given = [e["id"] for e in data["estimates"]]
        unknown = sorted(set(given) - set(ids))
        if unknown:
            raise ValueError(f"estimates for unknown option(s) {', '.join(unknown)}")
        missing = [i for i in ids if i not in given]
        if missing:
            raise ValueError(f"no estimate for option(s) {', '.join(missing)}")
        if len(given) != len(set(given)):
            raise ValueError("an option was estimated twice")
        return data

    bindings = context.bindings()
    bindings["schema"] = _schema_text(ESTIMATE_SCHEMA)
    bindings["options"] = json.dumps(
        [o.to_dict() for o in analyzed], indent=2, ensure_ascii=False
    )
    data = llm.ask_structured("estimate-effort", bindings, parse)
    by_id = {e["id"]: e for e in data["estimates"]}
    options = [
        replace(o, effort=by_id[o.id]["effort"], impact=by_id[o.id]["impact"]) for o in analyzed
    ]
    report = ArchitectureReport(options, data["comparison"], requirement=context.requirement)
    report.validate(require_both_kinds=False)
    return report


@dataclass(frozen=True)
class AssistantPaths:
    system_root: Path
    system_spec: Path
    component_root: Path
    component_spec: Path


def run_assistant(
    paths: AssistantPaths,
    requirement: str,
    architect_input: ArchitectInput,
    llm: LLMClient,
    max_workers: int = 1,
) -> ArchitectureReport:
    """Ingest both corpora and run steps 1 to 3; never returns a partial report."""
    start = len(llm.transcript)
    try:
        system = ingest_system(paths.system_root)
        component = ingest_corpus(paths.component_root)
        context = AssistantContext(
            requirement=requirement,
            system_spec=read_specs(paths.system_spec),
            component_spec=read_specs(paths.component_spec),
            guidelines=architect_input.guidelines,
            system_digest=render_digests(system),
            component_digest=component.render(),
        )
    except (OSError, ArchEvolveError) as exc:
        raise AssistantError("ingest", exc) from exc
    stage = "identify"
    try:
        drafts = identify_options(context, llm)
        stage = "analyze"
        analyzed = analyze_options(drafts, context, llm, max_workers)
        stage = "estimate"
        report = estimate_effort(analyzed, context, llm)
        report.validate(require_both_kinds=True)
    except (ArchEvolveError, ValueError) as exc:
        raise AssistantError(stage, exc) from exc
    transcript = Transcript()
    for entry in llm.transcript.since(start):
        transcript.append(entry)
    report.transcript = transcript
    return report
