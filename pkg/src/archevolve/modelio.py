"""Reading and writing ``.ammeta`` metamodels and ``.ammodel`` instances.

Both formats are a small XML dialect.  Parsing goes through expat so every
element keeps its line/column, and every error raised here carries a
:class:`~archevolve.errors.SourceSpan` inside the document.  Serialization
is canonical: structurally equal inputs produce byte-identical text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from xml.parsers import expat

from archevolve.errors import SourceSpan, SpannedError
from archevolve.metamodel import (
    IDENTIFIER,
    OBJECT_ID,
    Attribute,
    ClassDef,
    InstanceError,
    Metamodel,
    MetamodelError,
    ModelInstance,
    ObjectNode,
    Reference,
    Value,
)

XML_DECL = '<?xml version="1.0" encoding="UTF-8"?>\n'

_INTEGER = re.compile(r"[+-]?[0-9]+\Z")
_REAL = re.compile(r"[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?\Z")


class ModelIOError(SpannedError):
    """Raised for any problem reading a metamodel or model document."""


class ModelSyntaxError(ModelIOError):
    pass


class ModelTypeError(ModelIOError):
    """A scalar value does not match its declared attribute type."""


@dataclass
class _Element:
    tag: str
    attrs: dict[str, str]
    span: SourceSpan
    children: list[_Element] = field(default_factory=list)
    has_text: bool = False


def _parse_xml(text: str) -> _Element:
    parser = expat.ParserCreate("UTF-8")
    stack: list[_Element] = []
    root: list[_Element] = []

    def here() -> SourceSpan:
        return SourceSpan.clamp(
            text, parser.CurrentLineNumber, parser.CurrentColumnNumber + 1
        )

    def start(tag: str, attrs: dict[str, str]) -> None:
        el = _Element(tag, attrs, here())
        if stack:
            stack[-1].children.append(el)
        else:
            root.append(el)
        stack.append(el)

    def end(tag: str) -> None:
        stack.pop()

    def chars(data: str) -> None:
        if data.strip() and stack:
            stack[-1].has_text = True

    def doctype(*args: object) -> None:
        raise ModelSyntaxError("DOCTYPE declarations are not allowed", here())

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    parser.StartDoctypeDeclHandler = doctype
    try:
        parser.Parse(text.encode("utf-8"), True)
    except expat.ExpatError as exc:
        raise ModelSyntaxError(
            expat.ErrorString(exc.code),
            SourceSpan.clamp(text, exc.lineno, exc.offset + 1),
        ) from None
    return root[0]


def _check_element(
    el: _Element,
    tag: str,
    required: tuple[str, ...],
    optional: tuple[str, ...] = (),
    children: tuple[str, ...] = (),
) -> None:
    if el.tag != tag:
        raise ModelSyntaxError(f"expected <{tag}>, found <{el.tag}>", el.span)
    for name in el.attrs:
        if name not in required and name not in optional:
            raise ModelSyntaxError(f"<{tag}>: unknown XML attribute {name!r}", el.span)
    for name in required:
        if name not in el.attrs:
            raise ModelSyntaxError(f"<{tag}>: missing XML attribute {name!r}", el.span)
    for child in el.children:
        if child.tag not in children:
            raise ModelSyntaxError(
                f"<{child.tag}> is not allowed inside <{tag}>", child.span
            )
    if el.has_text:
        raise ModelSyntaxError(f"<{tag}> must not contain text", el.span)


def _identifier(el: _Element, key: str, pattern: re.Pattern[str] = IDENTIFIER) -> str:
    value = el.attrs[key]
    if not pattern.match(value):
        raise ModelSyntaxError(f"<{el.tag}>: {key}={value!r} is not a valid identifier", el.span)
    return value


# -- metamodel -----------------------------------------------------------


def parse_metamodel(text: str) -> Metamodel:
    """Parse an ``.ammeta`` document."""
    doc = _parse_xml(text)
    _check_element(doc, "metamodel", ("name",), children=("class",))
    classes: list[ClassDef] = []
    seen: dict[str, _Element] = {}
    targets: list[tuple[Reference, _Element]] = []
    for cel in doc.children:
        _check_element(cel, "class", ("name",), children=("attribute", "reference"))
        name = _identifier(cel, "name")
        if name in seen:
            raise ModelIOError(f"duplicate class {name!r}", cel.span)
        seen[name] = cel
        attributes: list[Attribute] = []
        references: list[Reference] = []
        features: set[str] = set()
        for fel in cel.children:
            if fel.tag == "attribute":
                _check_element(fel, "attribute", ("name", "type"))
            else:
                _check_element(
                    fel, "reference", ("name", "target"), ("lower", "upper", "containment")
                )
            fname = _identifier(fel, "name")
            if fname in features:
                raise ModelIOError(f"class {name!r}: duplicate feature {fname!r}", fel.span)
            features.add(fname)
            try:
                if fel.tag == "attribute":
                    attributes.append(Attribute(fname, fel.attrs["type"]))
                else:
                    ref = Reference(
                        fname,
                        _identifier(fel, "target"),
                        _count(fel, "lower", "0"),
                        _upper(fel),
                        _flag(fel, "containment"),
                    )
                    references.append(ref)
                    targets.append((ref, fel))
            except MetamodelError as exc:
                raise ModelIOError(str(exc), fel.span) from None
        classes.append(ClassDef(name, tuple(attributes), tuple(references)))
    for ref, fel in targets:
        if ref.target not in seen:
            raise ModelIOError(
                f"reference {ref.name!r}: unresolved target class {ref.target!r}", fel.span
            )
    try:
        return Metamodel(_identifier(doc, "name"), tuple(classes))
    except MetamodelError as exc:
        raise ModelIOError(str(exc), doc.span) from None


def _count(el: _Element, key: str, default: str) -> int:
    raw = el.attrs.get(key, default)
    if not raw.isdigit():
        raise ModelSyntaxError(f"<{el.tag}>: {key} must be a non-negative integer", el.span)
    return int(raw)


def _upper(el: _Element) -> int | None:
    if el.attrs.get("upper", "*") == "*":
        return None
    return _count(el, "upper", "*")


def _flag(el: _Element, key: str) -> bool:
    raw = el.attrs.get(key, "false")
    if raw not in ("true", "false"):
        raise ModelSyntaxError(f"<{el.tag}>: {key} must be true or false", el.span)
    return raw == "true"


def serialize_metamodel(meta: Metamodel) -> str:
    out = [XML_DECL, f"<metamodel name={_quote(meta.name)}>\n"]
    for cls in meta.classes:
        if not cls.attributes and not cls.references:
            out.append(f"  <class name={_quote(cls.name)}/>\n")
            continue
        out.append(f"  <class name={_quote(cls.name)}>\n")
        for attr in cls.attributes:
            out.append(
                f"    <attribute name={_quote(attr.name)} type={_quote(attr.type)}/>\n"
            )
        for ref in cls.references:
            upper = "*" if ref.upper is None else str(ref.upper)
            out.append(
                f"    <reference name={_quote(ref.name)} target={_quote(ref.target)}"
                f' lower="{ref.lower}" upper="{upper}"'
                f' containment="{"true" if ref.containment else "false"}"/>\n'
            )
        out.append("  </class>\n")
    out.append("</metamodel>\n")
    return "".join(out)


# -- instances -----------------------------------------------------------


def parse_value(raw: str, scalar_type: str) -> Value:
    """Decode the textual form of a scalar; raises ``ValueError``."""
    if scalar_type == "text":
        return raw
    if scalar_type == "boolean":
        if raw in ("true", "false"):
            return raw == "true"
        raise ValueError(f"{raw!r} is not a boolean (true/false)")
    if scalar_type == "integer":
        if _INTEGER.match(raw):
            return int(raw)
        raise ValueError(f"{raw!r} is not an integer")
    if scalar_type == "real":
        if _REAL.match(raw):
            value = float(raw)
            if math.isfinite(value):
                return value
        raise ValueError(f"{raw!r} is not a finite real number")
    raise ValueError(f"unknown scalar type {scalar_type!r}")


def format_value(value: Value, scalar_type: str | None = None) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if scalar_type == "real" or isinstance(value, float):
        return repr(float(value))
    return str(value)


def parse_instance(text: str, meta: Metamodel) -> ModelInstance:
    """Parse an ``.ammodel`` document against ``meta``.

    Names and scalar values are checked here; multiplicities and link
    target classes are left to :func:`~archevolve.metamodel.check_conformance`.
    """
    doc = _parse_xml(text)
    _check_element(doc, "model", ("root",), ("metamodel",), children=("object",))
    if "metamodel" in doc.attrs and doc.attrs["metamodel"] != meta.name:
        raise ModelIOError(
            f"document targets metamodel {doc.attrs['metamodel']!r}, not {meta.name!r}",
            doc.span,
        )
    objects: list[ObjectNode] = []
    spans: dict[str, SourceSpan] = {}
    link_spans: list[tuple[str, _Element]] = []
    for oel in doc.children:
        _check_element(oel, "object", ("id", "class"), children=("attr", "link"))
        oid = _identifier(oel, "id", OBJECT_ID)
        if oid in spans:
            raise ModelIOError(f"duplicate object id {oid!r}", oel.span)
        spans[oid] = oel.span
        cls = meta.get(oel.attrs["class"])
        if cls is None:
            raise ModelIOError(f"unknown class {oel.attrs['class']!r}", oel.span)
        values: dict[str, Value] = {}
        links: dict[str, list[str]] = {}
        for fel in oel.children:
            if fel.tag == "attr":
                _check_element(fel, "attr", ("name", "value"))
                name = fel.attrs["name"]
                attr = cls.attribute(name)
                if attr is None:
                    raise ModelIOError(f"{cls.name} has no attribute {name!r}", fel.span)
                if name in values:
                    raise ModelIOError(f"attribute {name!r} given twice", fel.span)
                try:
                    values[name] = parse_value(fel.attrs["value"], attr.type)
                except ValueError as exc:
                    raise ModelTypeError(f"attribute {name!r}: {exc}", fel.span) from None
            else:
                _check_element(fel, "link", ("ref", "target"))
                name = fel.attrs["ref"]
                if cls.reference(name) is None:
                    raise ModelIOError(f"{cls.name} has no reference {name!r}", fel.span)
                links.setdefault(name, []).append(_identifier(fel, "target", OBJECT_ID))
                link_spans.append((fel.attrs["target"], fel))
        objects.append(ObjectNode(oid, cls.name, values, links))
    for target, fel in link_spans:
        if target not in spans:
            raise ModelIOError(f"link target {target!r} does not exist", fel.span)
    root = doc.attrs["root"]
    if root not in spans:
        raise ModelIOError(f"root object {root!r} does not exist", doc.span)
    try:
        return ModelInstance(tuple(objects), root)
    except InstanceError as exc:  # pragma: no cover - guarded above
        raise ModelIOError(str(exc), doc.span) from None


def serialize_instance(instance: ModelInstance, meta: Metamodel | None = None) -> str:
    """Render ``instance`` canonically.

    Objects are written in id order.  With ``meta`` the attributes and links
    of each object follow declaration order; without it they are sorted by
    name.  Features unknown to ``meta`` go last, sorted by name.
    """
    header = "<model"
    if meta is not None:
        header += f" metamodel={_quote(meta.name)}"
    out = [XML_DECL, f"{header} root={_quote(instance.root)}>\n"]
    for obj in instance.objects:
        cls = meta.get(obj.cls) if meta is not None else None
        attr_order = _ordered(obj.attributes, [a.name for a in cls.attributes] if cls else [])
        link_order = _ordered(obj.links, [r.name for r in cls.references] if cls else [])
        body: list[str] = []
        for name in attr_order:
            attr = cls.attribute(name) if cls else None
            value = format_value(obj.attributes[name], attr.type if attr else None)
            body.append(f"    <attr name={_quote(name)} value={_quote(value)}/>\n")
        for name in link_order:
            for target in obj.links[name]:
                body.append(f"    <link ref={_quote(name)} target={_quote(target)}/>\n")
        opening = f"  <object id={_quote(obj.id)} class={_quote(obj.cls)}"
        if body:
            out.append(opening + ">\n")
            out.extend(body)
            out.append("  </object>\n")
        else:
            out.append(opening + "/>\n")
    out.append("</model>\n")
    return "".join(out)


def _ordered(features: dict, declared: list[str]) -> list[str]:
    known = [n for n in declared if n in features]
    rest = sorted(n for n in features if n not in declared)
    return known + rest


_ESCAPES = {
    "&": "&amp;",
    "<": "&lt;",
    ">": "&gt;",
    '"': "&quot;",
    "\t": "&#9;",
    "\n": "&#10;",
    "\r": "&#13;",
}


def _quote(value: str) -> str:
    return '"' + "".join(_ESCAPES.get(ch, ch) for ch in value) + '"'


# -- file helpers --------------------------------------------------------


def load_metamodel(path: str | Path) -> Metamodel:
    return parse_metamodel(Path(path).read_text(encoding="utf-8"))


def load_instance(path: str | Path, meta: Metamodel) -> ModelInstance:
    return parse_instance(Path(path).read_text(encoding="utf-8"), meta)
