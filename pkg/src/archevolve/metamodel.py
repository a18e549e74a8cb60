"""Metamodels, model instances, conformance checking and deltas.

A :class:`Metamodel` is a flat list of classes with scalar attributes and
typed references.  A :class:`ModelInstance` is an object graph whose nodes
name their class; :func:`check_conformance` reports every way an instance
departs from its metamodel, and :func:`apply_delta` builds a new instance
from additive changes without ever touching its input.
"""

from __future__ import annotations

import enum
import math
import re
from collections import Counter
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from typing import Union

from archevolve.errors import ArchEvolveError

Value = Union[int, float, str, bool]

SCALAR_TYPES = ("integer", "real", "text", "boolean")

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
OBJECT_ID = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")

# XML 1.0 Char production; text values outside it cannot be serialized.
_XML_INVALID = re.compile("[^\t\n\r\x20-\ud7ff\ue000-\ufffd\U00010000-\U0010ffff]")


class MetamodelError(ArchEvolveError):
    """A metamodel violates its own structural invariants."""


class InstanceError(ArchEvolveError):
    """A model instance violates its own structural invariants."""


class DeltaError(ArchEvolveError):
    """A delta cannot be applied; the instance is left untouched."""


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str

    def __post_init__(self) -> None:
        if not IDENTIFIER.match(self.name):
            raise MetamodelError(f"invalid attribute name {self.name!r}")
        if self.type not in SCALAR_TYPES:
            raise MetamodelError(
                f"attribute {self.name!r}: unknown type {self.type!r}, "
                f"expected one of {', '.join(SCALAR_TYPES)}"
            )


@dataclass(frozen=True)
class Reference:
    name: str
    target: str
    lower: int = 0
    upper: int | None = None  # None means unbounded
    containment: bool = False

    def __post_init__(self) -> None:
        if not IDENTIFIER.match(self.name):
            raise MetamodelError(f"invalid reference name {self.name!r}")
        if self.lower < 0:
            raise MetamodelError(f"reference {self.name!r}: negative lower bound")
        if self.upper is not None and self.upper < self.lower:
            raise MetamodelError(
                f"reference {self.name!r}: lower bound {self.lower} "
                f"exceeds upper bound {self.upper}"
            )

    @property
    def multiplicity(self) -> str:
        upper = "*" if self.upper is None else str(self.upper)
        return f"{self.lower}..{upper}"


@dataclass(frozen=True)
class ClassDef:
    name: str
    attributes: tuple[Attribute, ...] = ()
    references: tuple[Reference, ...] = ()

    def __post_init__(self) -> None:
        if not IDENTIFIER.match(self.name):
            raise MetamodelError(f"invalid class name {self.name!r}")
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "references", tuple(self.references))
        names = [a.name for a in self.attributes] + [r.name for r in self.references]
        dupes = sorted(n for n, c in Counter(names).items() if c > 1)
        if dupes:
            raise MetamodelError(
                f"class {self.name!r}: duplicate feature name(s) {', '.join(dupes)}"
            )

    def attribute(self, name: str) -> Attribute | None:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None

    def reference(self, name: str) -> Reference | None:
        for ref in self.references:
            if ref.name == name:
                return ref
        return None


@dataclass(frozen=True)
class Metamodel:
    name: str
    classes: tuple[ClassDef, ...] = ()

    def __post_init__(self) -> None:
        if not IDENTIFIER.match(self.name):
            raise MetamodelError(f"invalid metamodel name {self.name!r}")
        object.__setattr__(self, "classes", tuple(self.classes))
        counts = Counter(c.name for c in self.classes)
        dupes = sorted(n for n, c in counts.items() if c > 1)
        if dupes:
            raise MetamodelError(f"duplicate class name(s) {', '.join(dupes)}")
        for cls in self.classes:
            for ref in cls.references:
                if ref.target not in counts:
                    raise MetamodelError(
                        f"reference {cls.name}.{ref.name}: "
                        f"unresolved target class {ref.target!r}"
                    )

    def get(self, name: str) -> ClassDef | None:
        for cls in self.classes:
            if cls.name == name:
                return cls
        return None

    def __contains__(self, name: object) -> bool:
        return any(c.name == name for c in self.classes)


@dataclass(frozen=True, eq=True)
class ObjectNode:
    id: str
    cls: str
    attributes: Mapping[str, Value] = field(default_factory=dict)
    links: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not OBJECT_ID.match(self.id):
            raise InstanceError(f"invalid object id {self.id!r}")
        object.__setattr__(self, "attributes", dict(self.attributes))
        # an empty target list is the same as no link at all
        object.__setattr__(
            self, "links", {k: tuple(v) for k, v in self.links.items() if len(v)}
        )

    __hash__ = None  # type: ignore[assignment]

    def targets(self, reference: str) -> tuple[str, ...]:
        return self.links.get(reference, ())


@dataclass(frozen=True, eq=True)
class ModelInstance:
    """An object graph; objects are kept sorted by id."""

    objects: tuple[ObjectNode, ...]
    root: str

    def __post_init__(self) -> None:
        objs = tuple(sorted(self.objects, key=lambda o: o.id))
        object.__setattr__(self, "objects", objs)
        index: dict[str, ObjectNode] = {}
        for obj in objs:
            if obj.id in index:
                raise InstanceError(f"duplicate object id {obj.id!r}")
            index[obj.id] = obj
        object.__setattr__(self, "_index", index)
        if self.root not in index:
            raise InstanceError(f"root object {self.root!r} does not exist")
        for obj in objs:
            for ref, targets in obj.links.items():
                for target in targets:
                    if target not in index:
                        raise InstanceError(
                            f"object {obj.id!r}: link {ref!r} points at "
                            f"missing object {target!r}"
                        )

    __hash__ = None  # type: ignore[assignment]

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self) -> Iterator[ObjectNode]:
        return iter(self.objects)

    def __contains__(self, object_id: object) -> bool:
        return object_id in self._index  # type: ignore[attr-defined]

    def get(self, object_id: str) -> ObjectNode:
        return self._index[object_id]  # type: ignore[attr-defined]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.objects)

    def of_class(self, cls: str) -> list[ObjectNode]:
        return [o for o in self.objects if o.cls == cls]


@dataclass(frozen=True)
class ModelDelta:
    additions: tuple[ObjectNode, ...] = ()
    link_additions: tuple[tuple[str, str, str], ...] = ()
    attribute_changes: tuple[tuple[str, str, Value], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "additions", tuple(self.additions))
        object.__setattr__(self, "link_additions", tuple(self.link_additions))
        object.__setattr__(self, "attribute_changes", tuple(self.attribute_changes))

    def is_empty(self) -> bool:
        return not (self.additions or self.link_additions or self.attribute_changes)


class ViolationKind(str, enum.Enum):
    UNKNOWN_CLASS = "unknown_class"
    UNKNOWN_ATTRIBUTE = "unknown_attribute"
    UNKNOWN_REFERENCE = "unknown_reference"
    TYPE_MISMATCH = "type_mismatch"
    MULTIPLICITY = "multiplicity"


@dataclass(frozen=True)
class Violation:
    object_id: str
    kind: ViolationKind
    reason: str

    def __str__(self) -> str:
        return f"{self.object_id}: {self.kind.value}: {self.reason}"


@dataclass(frozen=True)
class ConformanceReport:
    violations: tuple[Violation, ...] = ()

    @property
    def conformant(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.conformant

    def for_object(self, object_id: str) -> list[Violation]:
        return [v for v in self.violations if v.object_id == object_id]


def value_matches(value: object, scalar_type: str) -> bool:
    """True when ``value`` is a legal value of ``scalar_type``."""
    if scalar_type == "boolean":
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if scalar_type == "integer":
        return isinstance(value, int)
    if scalar_type == "real":
        return isinstance(value, (int, float)) and math.isfinite(value)
    if scalar_type == "text":
        return isinstance(value, str) and not _XML_INVALID.search(value)
    return False


def check_conformance(instance: ModelInstance, meta: Metamodel) -> ConformanceReport:
    """Report every departure of ``instance`` from ``meta``.

    Declared attributes are mandatory (multiplicity 1..1), so a missing
    attribute value is reported as a multiplicity violation.
    """
    violations: list[Violation] = []

    def report(obj: ObjectNode, kind: ViolationKind, reason: str) -> None:
        violations.append(Violation(obj.id, kind, reason))

    containers: dict[str, list[str]] = {}
    for obj in instance.objects:
        cls = meta.get(obj.cls)
        if cls is None:
            report(obj, ViolationKind.UNKNOWN_CLASS, f"class {obj.cls!r} is not declared")
            continue
        for name, value in obj.attributes.items():
            attr = cls.attribute(name)
            if attr is None:
                report(
                    obj,
                    ViolationKind.UNKNOWN_ATTRIBUTE,
                    f"{cls.name} has no attribute {name!r}",
                )
            elif not value_matches(value, attr.type):
                report(
                    obj,
                    ViolationKind.TYPE_MISMATCH,
                    f"attribute {name!r} expects {attr.type}, got {value!r}",
                )
        for attr in cls.attributes:
            if attr.name not in obj.attributes:
                report(
                    obj,
                    ViolationKind.MULTIPLICITY,
                    f"attribute {attr.name!r} is required (1..1) but missing",
                )
        for name in obj.links:
            if cls.reference(name) is None:
                report(
                    obj,
                    ViolationKind.UNKNOWN_REFERENCE,
                    f"{cls.name} has no reference {name!r}",
                )
        for ref in cls.references:
            targets = obj.targets(ref.name)
            count = len(targets)
            if count < ref.lower or (ref.upper is not None and count > ref.upper):
                report(
                    obj,
                    ViolationKind.MULTIPLICITY,
                    f"reference {ref.name!r} has {count} target(s), "
                    f"expected {ref.multiplicity}",
                )
            dupes = sorted(t for t, c in Counter(targets).items() if c > 1)
            if dupes:
                report(
                    obj,
                    ViolationKind.MULTIPLICITY,
                    f"reference {ref.name!r} lists {', '.join(dupes)} more than once",
                )
            for target in targets:
                target_cls = instance.get(target).cls
                if target_cls != ref.target:
                    report(
                        obj,
                        ViolationKind.TYPE_MISMATCH,
                        f"reference {ref.name!r} expects {ref.target}, "
                        f"but {target!r} is a {target_cls}",
                    )
                if ref.containment:
                    containers.setdefault(target, []).append(obj.id)
    for obj in instance.objects:
        owners = containers.get(obj.id, [])
        if len(set(owners)) > 1:
            report(
                obj,
                ViolationKind.MULTIPLICITY,
                f"contained by more than one object ({', '.join(sorted(set(owners)))})",
            )
        if obj.id == instance.root and owners:
            report(obj, ViolationKind.MULTIPLICITY, "root object must not be contained")
    return ConformanceReport(tuple(violations))


def apply_delta(instance: ModelInstance, delta: ModelDelta) -> ModelInstance:
    """Return a new instance with ``delta`` applied; atomic on failure."""
    nodes: dict[str, ObjectNode] = {o.id: o for o in instance.objects}
    for obj in delta.additions:
        if obj.id in nodes:
            raise DeltaError(f"duplicate object id {obj.id!r}")
        nodes[obj.id] = obj

    links: dict[str, dict[str, list[str]]] = {}
    for source, ref, target in delta.link_additions:
        for end in (source, target):
            if end not in nodes:
                raise DeltaError(
                    f"link {source}.{ref} -> {target}: object {end!r} does not exist"
                )
        if source not in links:
            links[source] = {k: list(v) for k, v in nodes[source].links.items()}
        links[source].setdefault(ref, []).append(target)

    attrs: dict[str, dict[str, Value]] = {}
    for object_id, name, value in delta.attribute_changes:
        if object_id not in nodes:
            raise DeltaError(f"attribute change on missing object {object_id!r}")
        attrs.setdefault(object_id, dict(nodes[object_id].attributes))[name] = value

    for object_id in set(links) | set(attrs):
        old = nodes[object_id]
        nodes[object_id] = ObjectNode(
            old.id,
            old.cls,
            attrs.get(object_id, old.attributes),
            links.get(object_id, old.links),
        )
    try:
        return ModelInstance(tuple(nodes.values()), instance.root)
    except InstanceError as exc:
        raise DeltaError(str(exc)) from exc


def diff_instances(old: ModelInstance, new: ModelInstance) -> ModelDelta:
    """Compute the delta that turns ``old`` into ``new``.

    Raises :class:`DeltaError` when ``new`` is not reachable through a
    delta: removed objects, changed classes, dropped or reordered links.
    """
    if old.root != new.root:
        raise DeltaError(f"root changed from {old.root!r} to {new.root!r}")
    additions: list[ObjectNode] = []
    link_additions: list[tuple[str, str, str]] = []
    changes: list[tuple[str, str, Value]] = []
    for obj in old.objects:
        if obj.id not in new:
            raise DeltaError(f"object {obj.id!r} was removed")
        after = new.get(obj.id)
        if after.cls != obj.cls:
            raise DeltaError(f"object {obj.id!r} changed class to {after.cls!r}")
        for name in obj.attributes:
            if name not in after.attributes:
                raise DeltaError(f"object {obj.id!r} lost attribute {name!r}")
        for name, value in after.attributes.items():
            if name not in obj.attributes or not _same_value(obj.attributes[name], value):
                changes.append((obj.id, name, value))
        for ref in sorted(set(obj.links) | set(after.links)):
            before_t, after_t = obj.targets(ref), after.targets(ref)
            if after_t[: len(before_t)] != before_t:
                raise DeltaError(f"object {obj.id!r}: links of {ref!r} were altered")
            link_additions.extend((obj.id, ref, t) for t in after_t[len(before_t):])
    for obj in new.objects:
        if obj.id not in old:
            additions.append(obj)
    return ModelDelta(tuple(additions), tuple(link_additions), tuple(changes))


def _same_value(a: Value, b: Value) -> bool:
    return type(a) is type(b) and a == b

