"""Constraint-gated system updates and deployment command generation.

The workflow has four steps: generate rules from reference requirements,
let the model propose an updated system model, validate it against the
rules, and only when every rule holds expand the component catalog into
a command plan.  Commands are emitted, never executed.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from archevolve.errors import ArchEvolveError
from archevolve.llm import LLMClient, StructuredOutputError, Transcript
from archevolve.llm.templates import PLACEHOLDER
from archevolve.metamodel import (
    DeltaError,
    Metamodel,
    ModelDelta,
    ModelInstance,
    check_conformance,
    diff_instances,
)
from archevolve.modelio import (
    load_instance,
    load_metamodel,
    parse_instance,
    serialize_instance,
    serialize_metamodel,
)
from archevolve.ocl import ConstraintSet, ValidationReport, evaluate, parse_rules, typecheck

log = logging.getLogger(__name__)

CATEGORIES = ("driver_install", "container_run", "topic_subscribe")
DIRECTIONS = ("publish", "subscribe")
TEMPLATE_FIELDS = ("scenario", "device_model", "device_kind")


class PipelineError(ArchEvolveError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class CatalogError(ArchEvolveError):
    pass


class CatalogMissError(CatalogError):
    pass


class UpdateRejected(ArchEvolveError):
    """The proposed model is unusable: non-conformant or not additive."""


@dataclass(frozen=True)
class DeviceSpec:
    model: str
    kind: str
    resolution_mp: float = 0.0
    purpose: str = ""

    def __post_init__(self) -> None:
        if not self.model.strip():
            raise ValueError("device model must not be empty")
        if self.resolution_mp < 0:
            raise ValueError("device resolution must be >= 0")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DeviceSpec:
        return cls(
            model=str(data["model"]),
            kind=str(data["kind"]),
            resolution_mp=float(data.get("resolutionMp", 0.0)),
            purpose=str(data.get("purpose", "")),
        )

    @classmethod
    def load(cls, path: str | Path) -> DeviceSpec:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ArchEvolveError(f"invalid device description {path}: {exc}") from None

    def describe(self) -> str:
        return (
            f"model: {self.model}\n"
            f"kind: {self.kind}\n"
            f"resolutionMp: {self.resolution_mp!r}\n"
            f"purpose: {self.purpose or '(none given)'}"
        )


@dataclass(frozen=True)
class Topic:
    name: str
    message_type: str
    direction: str = "publish"

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise CatalogError(
                f"topic {self.name!r}: direction must be publish or subscribe"
            )


@dataclass(frozen=True)
class ComponentCatalog:
    """Drivers per device model, a container template and middleware topics.

    ``scenario`` names the use case; it is both the container name and the
    keyword that makes a topic relevant.
    """

    scenario: str
    drivers: Mapping[str, str]
    docker_template: str
    topics: tuple[Topic, ...] = ()

    def __post_init__(self) -> None:
        if not self.scenario:
            raise CatalogError("catalog scenario must not be empty")
        if not self.docker_template.strip():
            raise CatalogError("catalog docker_template must not be empty")
        for model, command in self.drivers.items():
            if not command.strip():
                raise CatalogError(f"driver command for {model!r} is empty")
        for text in [self.docker_template, *self.drivers.values()]:
            for m in PLACEHOLDER.finditer(text):
                if m.group(1) not in TEMPLATE_FIELDS:
                    raise CatalogError(
                        f"unknown placeholder {{{{{m.group(1)}}}}} in catalog; "
                        f"allowed: {', '.join(TEMPLATE_FIELDS)}"
                    )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ComponentCatalog:
        unknown = set(data) - {"scenario", "drivers", "docker_template", "topics"}
        if unknown:
            raise CatalogError(f"unknown catalog section(s): {', '.join(sorted(unknown))}")
        try:
            topics = tuple(
                Topic(t["name"], t["message_type"], t.get("direction", "publish"))
                for t in data.get("topics", [])
            )
            return cls(
                scenario=data["scenario"],
                drivers=dict(data["drivers"]),
                docker_template=data["docker_template"],
                topics=topics,
            )
        except (KeyError, TypeError) as exc:
            raise CatalogError(f"malformed catalog: missing or invalid {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> ComponentCatalog:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CatalogError(f"cannot read catalog {path}: {exc}") from None
        if not isinstance(data, dict):
            raise CatalogError(f"catalog {path} must be a JSON object")
        return cls.from_dict(data)

    def relevant_topics(self, device: DeviceSpec) -> list[Topic]:
        keys = [k for k in (device.kind, self.scenario) if k]
        return [t for t in self.topics if any(k in t.name for k in keys)]


@dataclass(frozen=True)
class Command:
    category: str
    text: str
    note: str = ""

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown command category {self.category!r}")


@dataclass(frozen=True)
class CommandPlan:
    commands: tuple[Command, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.commands)

    def __len__(self) -> int:
        return len(self.commands)

    def of(self, category: str) -> list[Command]:
        return [c for c in self.commands if c.category == category]

    def to_list(self) -> list[dict[str, str]]:
        return [{"category": c.category, "text": c.text, "note": c.note} for c in self.commands]

    def render(self) -> str:
        if not self.commands:
            return "(no commands)\n"
        lines = []
        for n, cmd in enumerate(self.commands, 1):
            line = f"{n}. [{cmd.category}] {cmd.text}"
            if cmd.note:
                line += f"  # {cmd.note}"
            lines.append(line)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Decision:
    proceed: bool
    reason: str = ""
    stage: str = ""

    def __str__(self) -> str:
        if self.proceed:
            return "proceed"
        return f"rejected ({self.stage}): {self.reason}"


@dataclass
class PipelineResult:
    updated_instance: ModelInstance | None
    report: ValidationReport | None
    plan: CommandPlan
    transcript: Transcript
    decision: Decision
    rules: ConstraintSet | None = None
    delta: ModelDelta | None = None
    warnings: list[str] = field(default_factory=list)
    meta: Metamodel | None = None

    def to_dict(self) -> dict[str, Any]:
        model = None
        if self.updated_instance is not None:
            model = serialize_instance(self.updated_instance, self.meta)
        return {
            "decision": {
                "proceed": self.decision.proceed,
                "stage": self.decision.stage,
                "reason": self.decision.reason,
            },
            "added_objects": [o.id for o in self.delta.additions] if self.delta else [],
            "report": self.report.to_dict() if self.report is not None else None,
            "plan": self.plan.to_list(),
            "warnings": list(self.warnings),
            "updated_model": model,
            "transcript": self.transcript.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        out = [f"decision: {self.decision}\n"]
        if self.delta is not None:
            added = ", ".join(o.id for o in self.delta.additions) or "(none)"
            out.append(f"added objects: {added}\n")
        for warning in self.warnings:
            out.append(f"warning: {warning}\n")
        if self.report is not None:
            out.append("validation:\n")
            for r in self.report.results:
                if r.holds:
                    out.append(f"  PASS {r.name}\n")
                else:
                    out.append(
                        f"  FAIL {r.name}: {r.message} [{', '.join(r.failing_objects)}]\n"
                    )
                for err in r.errors:
                    out.append(f"       error: {err}\n")
        out.append("plan:\n")
        out.append(self.plan.render())
        return "".join(out)


# -- step 1: rules -------------------------------------------------------


def generate_rules(
    reference_requirements: str, llm: LLMClient, meta: Metamodel | None = None
) -> ConstraintSet:
    """Ask the model for rules and parse them (type-checked if ``meta``)."""
    if not reference_requirements.strip():
        raise ValueError("reference requirements must not be empty")

    def parse(text: str) -> ConstraintSet:
        rules = parse_rules(text)
        if not len(rules):
            raise ValueError("no invariants found")
        if meta is not None:
            typecheck(rules, meta)
        return rules

    return llm.ask_structured(
        "generate-rules",
        {
            "reference_requirements": reference_requirements.strip(),
            "metamodel": serialize_metamodel(meta).strip() if meta else "(not provided)",
        },
        parse,
        fence=("ocl", "amocl"),
    )


# -- step 2: model update ------------------------------------------------


def check_additive(current: ModelInstance, updated: ModelInstance) -> ModelDelta:
    """Return the delta from ``current`` to ``updated`` if it only adds.

    Existing objects must keep their attribute values, and their links to
    other existing objects must be unchanged; new links may only point at
    new objects.
    """
    try:
        delta = diff_instances(current, updated)
    except DeltaError as exc:
        raise UpdateRejected(f"update is not additive: {exc}") from None
    if delta.attribute_changes:
        oid, name, _ = delta.attribute_changes[0]
        raise UpdateRejected(f"update is not additive: {oid}.{name} was modified")
    for source, ref, target in delta.link_additions:
        if target in current:
            raise UpdateRejected(
                f"update is not additive: new link {source}.{ref} -> {target} "
                "between existing objects"
            )
    return delta


def propose_update(
    current: ModelInstance,
    meta: Metamodel,
    device: DeviceSpec,
    requirements: str,
    llm: LLMClient,
) -> ModelInstance:
    def parse(text: str) -> ModelInstance:
        updated = parse_instance(text, meta)
        report = check_conformance(updated, meta)
        if not report.conformant:
            problems = "; ".join(str(v) for v in report.violations[:5])
            raise UpdateRejected(f"updated model does not conform: {problems}")
        check_additive(current, updated)
        return updated

    updated = llm.ask_structured(
        "update-model",
        {
            "metamodel": serialize_metamodel(meta).strip(),
            "current_model": serialize_instance(current, meta).strip(),
            "device_spec": device.describe(),
            "requirements": requirements.strip() or "(none given)",
        },
        parse,
        fence="xml",
    )
    if updated == current:
        log.warning("model update added no objects")
    return updated


# -- step 4: commands ----------------------------------------------------


def _fill(template: str, values: Mapping[str, str]) -> str:
    return PLACEHOLDER.sub(lambda m: values[m.group(1)], template)


def generate_commands(
    instance: ModelInstance,
    device: DeviceSpec,
    catalog: ComponentCatalog,
    report: ValidationReport,
) -> CommandPlan:
    """Expand the catalog into a plan; empty unless ``report.passed``."""
    if not report.passed:
        return CommandPlan()
    if device.model not in catalog.drivers:
        raise CatalogMissError(
            f"no driver for device model {device.model!r} in the catalog "
            f"(known: {', '.join(sorted(catalog.drivers)) or 'none'})"
        )
    values = {
        "scenario": catalog.scenario,
        "device_model": device.model,
        "device_kind": device.kind,
    }
    commands = [
        Command("driver_install", _fill(catalog.drivers[device.model], values)),
        Command("container_run", _fill(catalog.docker_template, values)),
    ]
    for topic in catalog.relevant_topics(device):
        if topic.direction == "publish":
            text = f"docker exec {catalog.scenario} ros2 topic echo /{topic.name} {topic.message_type}"
            note = f"{device.kind} {device.model} publishes {topic.name}; {catalog.scenario} subscribes"
        else:
            text = f"ros2 topic echo /{topic.name} {topic.message_type}"
            note = f"{catalog.scenario} publishes {topic.name}; {device.kind} {device.model} subscribes"
        commands.append(Command("topic_subscribe", text, note))
    return CommandPlan(tuple(commands))


# -- full workflow -------------------------------------------------------


def _gate_reason(report: ValidationReport) -> str:
    return "; ".join(dict.fromkeys(r.message for r in report.failed))


def run_pipeline(
    current_path: str | Path,
    meta_path: str | Path,
    device: DeviceSpec,
    requirements: str,
    reference_requirements: str,
    catalog_path: str | Path,
    llm: LLMClient,
    rules_path: str | Path | None = None,
) -> PipelineResult:
    """Run rule generation, model update, validation and command generation.

    With ``rules_path`` the rules are read from disk and step 1 makes no
    model call.
    """
    transcript = llm.transcript
    start = len(transcript)

    def result(**kwargs: Any) -> PipelineResult:
        run = Transcript()
        for entry in transcript.since(start):
            run.append(entry)
        return PipelineResult(transcript=run, meta=meta, **kwargs)

    meta: Metamodel | None = None
    try:
        meta = load_metamodel(meta_path)
        current = load_instance(current_path, meta)
        catalog = ComponentCatalog.load(catalog_path)
        rules = None
        if rules_path is not None:
            rules = parse_rules(Path(rules_path).read_text(encoding="utf-8"))
            typecheck(rules, meta)
    except (OSError, ArchEvolveError) as exc:
        raise PipelineError("load", exc) from exc
    baseline = check_conformance(current, meta)
    if not baseline.conformant:
        raise PipelineError("load", f"current model does not conform: {baseline.violations[0]}")

    if rules is None:
        try:
            rules = generate_rules(reference_requirements, llm, meta)
        except (ArchEvolveError, ValueError) as exc:
            raise PipelineError("rules", exc) from exc

    try:
        updated = propose_update(current, meta, device, requirements, llm)
    except StructuredOutputError as exc:
        return result(
            updated_instance=None,
            report=None,
            plan=CommandPlan(),
            decision=Decision(False, exc.error, "update"),
            rules=rules,
        )
    except (ArchEvolveError, ValueError) as exc:
        raise PipelineError("update", exc) from exc
    delta = check_additive(current, updated)
    warnings = [] if delta.additions else ["model update added no objects"]

    report = evaluate(rules, updated, meta)
    try:
        plan = generate_commands(updated, device, catalog, report)
    except CatalogError as exc:
        raise PipelineError("commands", exc) from exc
    if report.passed:
        decision = Decision(True)
    else:
        decision = Decision(False, _gate_reason(report), "validate")
    return result(
        updated_instance=updated,
        report=report,
        plan=plan,
        decision=decision,
        rules=rules,
        delta=delta,
        warnings=warnings,
    )
