"""Interface compatibility checking between a producer and a consumer.

Interfaces are written in the ``.amidl`` message-definition dialect::

    # pragma name=autoware_control_msgs/Lateral
    # pragma paradigm=publish_subscribe
    # pragma rate_hz=50
    # Free comment lines become documentation notes.
    # unit: rad/s
    # convention: counterclockwise positive
    float32 steering_tire_rotation_rate

``# unit:`` and ``# convention:`` annotate the next field line.  The
deterministic analyzer applies data-type, semantic and communication rules,
in that order; the LLM-assisted checker first extracts and refines interface
views with the model and then runs the same analyzer.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

import jsonschema

from archevolve.errors import ArchEvolveError, SourceSpan, SpannedError
from archevolve.llm import LLMClient, Transcript

PARADIGMS = ("publish_subscribe", "service_client")
CATEGORIES = ("data_type", "semantic", "communication")
SEVERITIES = ("info", "warning", "error")

# scalar type -> (family, bit width)
SCALAR_TYPES: dict[str, tuple[str, int]] = {
    "float32": ("float", 32),
    "float64": ("float", 64),
    "int8": ("int", 8),
    "int16": ("int", 16),
    "int32": ("int", 32),
    "int64": ("int", 64),
    "uint8": ("uint", 8),
    "uint16": ("uint", 16),
    "uint32": ("uint", 32),
    "uint64": ("uint", 64),
    "bool": ("bool", 1),
    "string": ("string", 0),
}
NUMERIC_FAMILIES = ("float", "int", "uint")

_FIELD = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s+([A-Za-z_][A-Za-z0-9_]*)\Z")
_PRAGMA = re.compile(r"#\s*pragma\b(.*)\Z")
_ANNOTATION = re.compile(r"#\s*(unit|convention)\s*:(.*)\Z")


class IdlError(SpannedError):
    pass


class UnknownTypeError(IdlError):
    pass


class MappingError(ArchEvolveError):
    pass


@dataclass(frozen=True)
class FieldDef:
    name: str
    scalar_type: str
    unit: str | None = None
    convention: str | None = None

    def __post_init__(self) -> None:
        if self.scalar_type not in SCALAR_TYPES:
            raise UnknownTypeError(f"unknown scalar type {self.scalar_type!r}")


@dataclass(frozen=True)
class InterfaceDef:
    name: str
    paradigm: str = "publish_subscribe"
    fields: tuple[FieldDef, ...] = ()
    rate_hz: float | None = None
    doc_notes: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))
        if self.paradigm not in PARADIGMS:
            raise IdlError(f"unknown paradigm {self.paradigm!r}")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise IdlError("duplicate field names")
        if self.rate_hz is not None:
            if self.paradigm != "publish_subscribe":
                raise IdlError("rate_hz only applies to publish_subscribe interfaces")
            if not self.rate_hz > 0:
                raise IdlError("rate_hz must be positive")

    def field(self, name: str) -> FieldDef | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None


def parse_interface(text: str, name: str = "interface") -> InterfaceDef:
    """Parse an ``.amidl`` document; ``name`` applies unless a pragma sets it."""
    pragmas: dict[str, str] = {}
    fields: list[FieldDef] = []
    notes: list[str] = []
    pending: dict[str, str] = {}
    pending_span: SourceSpan | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        span = SourceSpan(lineno, len(raw) - len(raw.lstrip()) + 1)
        if not line:
            continue
        if line.startswith("#"):
            pm = _PRAGMA.match(line)
            am = _ANNOTATION.match(line)
            if pm:
                key, sep, value = pm.group(1).strip().partition("=")
                key, value = key.strip(), value.strip()
                if not sep or not value or key not in ("name", "paradigm", "rate_hz"):
                    raise IdlError(
                        f"malformed pragma {line!r}; expected name=, paradigm= or rate_hz=",
                        span,
                    )
                if key in pragmas:
                    raise IdlError(f"duplicate pragma {key!r}", span)
                pragmas[key] = value
                if key == "paradigm" and value not in PARADIGMS:
                    raise IdlError(
                        f"malformed pragma: paradigm must be one of {', '.join(PARADIGMS)}",
                        span,
                    )
                if key == "rate_hz":
                    try:
                        rate = float(value)
                    except ValueError:
                        rate = -1.0
                    if not rate > 0 or rate == float("inf"):
                        raise IdlError("malformed pragma: rate_hz must be a positive number", span)
            elif am:
                key, value = am.group(1), am.group(2).strip()
                if not value:
                    raise IdlError(f"empty {key} annotation", span)
                if key in pending:
                    raise IdlError(f"{key} annotated twice for the same field", span)
                pending[key] = value
                pending_span = pending_span or span
            else:
                notes.append(line[1:].strip())
            continue
        body = line.split("#", 1)[0].strip()
        fm = _FIELD.match(body)
        if fm is None:
            raise IdlError(f"malformed field line {line!r}; expected '<type> <name>'", span)
        ftype, fname = fm.groups()
        if ftype not in SCALAR_TYPES:
            raise UnknownTypeError(f"unknown scalar type {ftype!r}", span)
        if any(f.name == fname for f in fields):
            raise IdlError(f"duplicate field {fname!r}", span)
        fields.append(FieldDef(fname, ftype, pending.get("unit"), pending.get("convention")))
        pending, pending_span = {}, None
    if pending:
        raise IdlError("annotation is not followed by a field", pending_span)
    paradigm = pragmas.get("paradigm", "publish_subscribe")
    rate = float(pragmas["rate_hz"]) if "rate_hz" in pragmas else None
    if rate is not None and paradigm != "publish_subscribe":
        raise IdlError("malformed pragma: rate_hz only applies to publish_subscribe")
    return InterfaceDef(
        pragmas.get("name", name), paradigm, tuple(fields), rate, "\n".join(notes)
    )


def _hz(rate: float) -> str:
    return str(int(rate)) if rate.is_integer() else repr(rate)


def format_interface(iface: InterfaceDef) -> str:
    out = [f"# pragma name={iface.name}", f"# pragma paradigm={iface.paradigm}"]
    if iface.rate_hz is not None:
        out.append(f"# pragma rate_hz={_hz(iface.rate_hz)}")
    out.extend(f"# {n}" if n else "#" for n in iface.doc_notes.splitlines())
    for f in iface.fields:
        if f.unit is not None:
            out.append(f"# unit: {f.unit}")
        if f.convention is not None:
            out.append(f"# convention: {f.convention}")
        out.append(f"{f.scalar_type} {f.name}")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class FieldMapping:
    pairs: tuple[tuple[str, str], ...] = ()

    @classmethod
    def by_name(cls, producer: InterfaceDef, consumer: InterfaceDef) -> FieldMapping:
        return cls(tuple((f.name, f.name) for f in consumer.fields if producer.field(f.name)))

    @classmethod
    def parse(cls, text: str) -> FieldMapping:
        """Parse ``producer_field -> consumer_field`` lines."""
        pairs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            left, sep, right = line.partition("->")
            if not sep or not left.strip() or not right.strip():
                raise MappingError(f"line {lineno}: expected 'producer_field -> consumer_field'")
            pairs.append((left.strip(), right.strip()))
        return cls(tuple(pairs))

    def resolve(self, producer: InterfaceDef, consumer: InterfaceDef) -> None:
        seen: set[str] = set()
        for p, c in self.pairs:
            if producer.field(p) is None:
                raise MappingError(f"mapping names unknown producer field {p!r}")
            if consumer.field(c) is None:
                raise MappingError(f"mapping names unknown consumer field {c!r}")
            if c in seen:
                raise MappingError(f"consumer field {c!r} is mapped twice")
            seen.add(c)


@dataclass(frozen=True)
class CompatibilityFinding:
    category: str
    severity: str
    description: str
    suggestion: str
    producer_field: str | None = None
    consumer_field: str | None = None
    source: str = "rule"  # rule | provider

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown finding category {self.category!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown finding severity {self.severity!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "severity": self.severity,
            "producer_field": self.producer_field,
            "consumer_field": self.consumer_field,
            "description": self.description,
            "suggestion": self.suggestion,
            "source": self.source,
        }


@dataclass
class CompatibilityReport:
    findings: list[CompatibilityFinding]
    transcript: Transcript = field(default_factory=Transcript)
    producer: str = ""
    consumer: str = ""

    @property
    def compatible(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def of(self, category: str) -> list[CompatibilityFinding]:
        return [f for f in self.findings if f.category == category]

    def to_dict(self) -> dict[str, Any]:
        return {
            "producer": self.producer,
            "consumer": self.consumer,
            "compatible": self.compatible,
            "findings": [f.to_dict() for f in self.findings],
            "transcript": self.transcript.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        verdict = "compatible" if self.compatible else "INCOMPATIBLE"
        out = [f"{self.producer} -> {self.consumer}: {verdict}\n"]
        if not self.findings:
            out.append("no findings\n")
        for f in self.findings:
            where = ""
            if f.producer_field or f.consumer_field:
                where = f" ({f.producer_field or '-'} -> {f.consumer_field or '-'})"
            tag = " [provider]" if f.source == "provider" else ""
            out.append(f"[{f.severity}] {f.category}{where}{tag}: {f.description}\n")
            out.append(f"    suggestion: {f.suggestion}\n")
        return "".join(out)


# -- deterministic rules -------------------------------------------------


def _data_type(p: FieldDef, c: FieldDef) -> list[CompatibilityFinding]:
    if p.scalar_type == c.scalar_type:
        return []
    (pfam, pbits), (cfam, cbits) = SCALAR_TYPES[p.scalar_type], SCALAR_TYPES[c.scalar_type]
    pair = dict(producer_field=p.name, consumer_field=c.name)
    conv = f"{p.scalar_type} to {c.scalar_type}"
    if pfam == cfam:
        if pbits > cbits:
            return [
                CompatibilityFinding(
                    "data_type",
                    "error",
                    f"precision loss: producer sends {p.scalar_type}, consumer stores {c.scalar_type}",
                    f"explicit conversion from {conv} with a range and precision check in the adapter",
                    **pair,
                )
            ]
        # typed messages are never converted implicitly, so widening still breaks delivery
        return [
            CompatibilityFinding(
                "data_type",
                "error",
                f"precision loss risk: producer sends {p.scalar_type}, consumer expects {c.scalar_type}; "
                "values carry only producer precision and the message types differ",
                f"explicit conversion from {conv} in the adapter instead of relying on implicit casts",
                **pair,
            )
        ]
    if pfam in NUMERIC_FAMILIES and cfam in NUMERIC_FAMILIES:
        return [
            CompatibilityFinding(
                "data_type",
                "error",
                f"numeric family changes: producer sends {p.scalar_type}, consumer expects {c.scalar_type}",
                f"explicit conversion from {conv} with rounding and range handling",
                **pair,
            )
        ]
    return [
        CompatibilityFinding(
            "data_type",
            "error",
            f"incompatible types: producer sends {p.scalar_type}, consumer expects {c.scalar_type}",
            f"adapter must translate {conv} explicitly (parsing or encoding the value)",
            **pair,
        )
    ]


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def _semantic(p: FieldDef, c: FieldDef) -> list[CompatibilityFinding]:
    findings = []
    pair = dict(producer_field=p.name, consumer_field=c.name)
    for aspect in ("unit", "convention"):
        pv, cv = getattr(p, aspect), getattr(c, aspect)
        if pv is not None and cv is not None:
            if _normalize(pv) != _normalize(cv):
                if aspect == "unit":
                    suggestion = f"convert values from {pv} to {cv} before publishing to the consumer"
                else:
                    suggestion = (
                        f"apply a transformation between conventions ('{pv}' to '{cv}') "
                        "in the adapter"
                    )
                findings.append(
                    CompatibilityFinding(
                        "semantic",
                        "error",
                        f"{aspect} mismatch: producer uses '{pv}', consumer expects '{cv}'",
                        suggestion,
                        **pair,
                    )
                )
        elif pv is not None or cv is not None:
            side, value = ("producer", pv) if pv is not None else ("consumer", cv)
            findings.append(
                CompatibilityFinding(
                    "semantic",
                    "warning",
                    f"{aspect} documented only by the {side} ('{value}')",
                    f"confirm the {aspect} of the other side and document it",
                    **pair,
                )
            )
    return findings


def _communication(
    producer: InterfaceDef, consumer: InterfaceDef, rate_tolerance: float
) -> list[CompatibilityFinding]:
    findings = []
    if producer.paradigm != consumer.paradigm:
        findings.append(
            CompatibilityFinding(
                "communication",
                "error",
                f"paradigm mismatch: producer uses {producer.paradigm}, "
                f"consumer expects {consumer.paradigm}",
                "bridge the paradigms with an adapter node (e.g. a service that serves "
                "the latest published message, or a client that republishes responses)",
            )
        )
    p_rate, c_rate = producer.rate_hz, consumer.rate_hz
    if p_rate is not None and c_rate is not None and abs(p_rate - c_rate) > rate_tolerance:
        if p_rate < c_rate:
            suggestion = (
                f"interpolation or resampling to raise {_hz(p_rate)} Hz to {_hz(c_rate)} Hz "
                "(or hold the last value)"
            )
        else:
            suggestion = f"downsampling from {_hz(p_rate)} Hz to {_hz(c_rate)} Hz (throttle or decimate)"
        findings.append(
            CompatibilityFinding(
                "communication",
                "error",
                f"rate mismatch: producer publishes at {_hz(p_rate)} Hz, consumer expects {_hz(c_rate)} Hz",
                suggestion,
            )
        )
    return findings


def analyze_compatibility(
    producer: InterfaceDef,
    consumer: InterfaceDef,
    mapping: FieldMapping | None = None,
    rate_tolerance: float = 0.0,
) -> CompatibilityReport:
    """Apply the data-type, semantic and communication rules in order."""
    if mapping is None:
        mapping = FieldMapping.by_name(producer, consumer)
    mapping.resolve(producer, consumer)
    pairs = [(producer.field(p), consumer.field(c)) for p, c in mapping.pairs]
    findings: list[CompatibilityFinding] = []
    for pf, cf in pairs:
        findings.extend(_data_type(pf, cf))  # type: ignore[arg-type]
    mapped = {c for _, c in mapping.pairs}
    for cf in consumer.fields:
        if cf.name not in mapped:
            findings.append(
                CompatibilityFinding(
                    "data_type",
                    "error",
                    f"missing data: no producer field feeds consumer field {cf.name!r}",
                    f"provide {cf.name!r} in the adapter (derive it or set a documented default)",
                    consumer_field=cf.name,
                )
            )
    for pf, cf in pairs:
        findings.extend(_semantic(pf, cf))  # type: ignore[arg-type]
    findings.extend(_communication(producer, consumer, rate_tolerance))
    return CompatibilityReport(findings, producer=producer.name, consumer=consumer.name)


# -- LLM-assisted steps --------------------------------------------------


def extract_relevant(
    system_spec: str,
    component_spec: str,
    requirement: str,
    llm: LLMClient,
    system_code: str = "",
    component_code: str = "",
) -> tuple[str, str]:
    if not requirement.strip():
        raise ValueError("requirement must not be empty")
    system_view = llm.ask(
        "extract-system",
        {
            "requirement": requirement.strip(),
            "system_spec": system_spec.strip() or "(none)",
            "system_code": system_code.strip() or "(none)",
        },
    )
    component_view = llm.ask(
        "extract-component",
        {
            "requirement": requirement.strip(),
            "component_spec": component_spec.strip() or "(none)",
            "component_code": component_code.strip() or "(none)",
        },
    )
    return system_view, component_view


def refine_views(system_view: str, component_view: str, llm: LLMClient) -> tuple[str, str]:
    if not system_view.strip() or not component_view.strip():
        raise ValueError("interface views must not be empty")
    bindings = {"system_view": system_view.strip(), "component_view": component_view.strip()}
    return llm.ask("refine-system", bindings), llm.ask("refine-component", bindings)


FINDINGS_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["findings"],
    "additionalProperties": False,
    "properties": {
        "findings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["category", "severity", "description", "suggestion"],
                "additionalProperties": False,
                "properties": {
                    "category": {"enum": list(CATEGORIES)},
                    "severity": {"enum": list(SEVERITIES)},
                    "producer_field": {"type": ["string", "null"]},
                    "consumer_field": {"type": ["string", "null"]},
                    "description": {"type": "string", "minLength": 1},
                    "suggestion": {"type": "string", "minLength": 1},
                },
            },
        }
    },
}


def _parse_llm_findings(text: str) -> list[CompatibilityFinding]:
    data = json.loads(text)
    try:
        jsonschema.validate(data, FINDINGS_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValueError(f"findings do not match the schema: {exc.message}") from None
    return [CompatibilityFinding(source="provider", **item) for item in data["findings"]]


@dataclass(frozen=True)
class CheckerInputs:
    """What the checker receives for each side.

    In deterministic mode ``system_spec`` and ``component_spec`` must be
    ``.amidl`` texts; in LLM-assisted mode they are free-form documents.
    ``producer`` says which side sends the data.
    """

    system_spec: str
    component_spec: str
    system_code: str = ""
    component_code: str = ""
    requirement: str = ""
    producer: str = "component"

    def __post_init__(self) -> None:
        if self.producer not in ("system", "component"):
            raise ValueError("producer must be 'system' or 'component'")


def run_checker(
    inputs: CheckerInputs,
    mode: str = "deterministic",
    llm: LLMClient | None = None,
    mapping: FieldMapping | None = None,
    rate_tolerance: float = 0.0,
) -> CompatibilityReport:
    if mode == "deterministic":
        system = parse_interface(inputs.system_spec, "system")
        component = parse_interface(inputs.component_spec, "component")
        producer, consumer = (
            (component, system) if inputs.producer == "component" else (system, component)
        )
        return analyze_compatibility(producer, consumer, mapping, rate_tolerance)
    if mode != "llm_assisted":
        raise ValueError(f"unknown checker mode {mode!r}")
    if llm is None:
        raise ValueError("llm_assisted mode needs an LLM client")
    start = len(llm.transcript)
    system_view, component_view = extract_relevant(
        inputs.system_spec,
        inputs.component_spec,
        inputs.requirement,
        llm,
        inputs.system_code,
        inputs.component_code,
    )
    refined_system, refined_component = refine_views(system_view, component_view, llm)
    bindings = {"system_view": system_view.strip(), "component_view": component_view.strip()}
    system = llm.parse_or_repair(
        llm.request("refine-system", bindings),
        refined_system,
        lambda t: parse_interface(t, "system"),
        fence="amidl",
    )
    component = llm.parse_or_repair(
        llm.request("refine-component", bindings),
        refined_component,
        lambda t: parse_interface(t, "component"),
        fence="amidl",
    )
    if inputs.producer == "component":
        producer, consumer = component, system
        producer_view, consumer_view = refined_component, refined_system
    else:
        producer, consumer = system, component
        producer_view, consumer_view = refined_system, refined_component
    report = analyze_compatibility(producer, consumer, mapping, rate_tolerance)
    summary = "\n".join(
        f"- [{f.severity}] {f.category}: {f.description}" for f in report.findings
    ) or "(no findings)"
    extra = llm.ask_structured(
        "analyze-compatibility",
        {"producer_view": producer_view.strip(), "consumer_view": consumer_view.strip(), "findings": summary},
        _parse_llm_findings,
    )
    known = {(f.category, f.producer_field, f.consumer_field) for f in report.findings}
    for finding in extra:
        key = (finding.category, finding.producer_field, finding.consumer_field)
        if finding.category == "semantic" and key not in known:
            report.findings.append(finding)
            known.add(key)
    transcript = Transcript()
    for entry in llm.transcript.since(start):
        transcript.append(entry)
    report.transcript = transcript
    return report


__all__ = [
    "CheckerInputs",
    "CompatibilityFinding",
    "CompatibilityReport",
    "FieldDef",
    "FieldMapping",
    "IdlError",
    "InterfaceDef",
    "MappingError",
    "UnknownTypeError",
    "analyze_compatibility",
    "extract_relevant",
    "format_interface",
    "parse_interface",
    "refine_views",
    "run_checker",
]
