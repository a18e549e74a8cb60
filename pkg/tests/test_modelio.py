from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from archevolve import data
from archevolve.errors import SourceSpan
from archevolve.metamodel import ModelInstance, ObjectNode
from archevolve.modelio import (
    ModelIOError,
    ModelSyntaxError,
    ModelTypeError,
    format_value,
    parse_instance,
    parse_metamodel,
    parse_value,
    serialize_instance,
    serialize_metamodel,
)

from strategies import metamodels, models, vehicle_instances

META_TEXT = data.read(data.METAMODEL)
CURRENT_TEXT = data.read(data.CURRENT_MODEL)


@pytest.fixture(scope="module")
def meta():
    return parse_metamodel(META_TEXT)


def instance_doc(body: str, root: str = "v") -> str:
    return f'<model metamodel="automotive" root="{root}">{body}</model>'


# -- metamodels ----------------------------------------------------------


def test_single_class_metamodel():
    meta = parse_metamodel('<metamodel name="m"><class name="A"/></metamodel>')
    assert [c.name for c in meta.classes] == ["A"]
    assert meta.get("A").attributes == ()


def test_automotive_metamodel(meta):
    assert [c.name for c in meta.classes] == ["Vehicle", "Device"]
    devices = meta.get("Vehicle").reference("devices")
    assert (devices.target, devices.lower, devices.upper, devices.containment) == (
        "Device", 0, None, True,
    )
    assert [(a.name, a.type) for a in meta.get("Device").attributes] == [
        ("kind", "text"), ("model", "text"), ("resolutionMp", "real"),
    ]


def test_metamodel_serialization_is_byte_exact(meta):
    assert serialize_metamodel(meta) == META_TEXT


def test_unresolved_target_reported_at_its_span():
    text = '<metamodel name="m">\n  <class name="A">\n    <reference name="r" target="Ghost"/>\n  </class>\n</metamodel>'
    with pytest.raises(ModelIOError, match="Ghost") as info:
        parse_metamodel(text)
    assert info.value.span == SourceSpan(3, 5)


def test_duplicate_class_rejected():
    with pytest.raises(ModelIOError, match="duplicate class"):
        parse_metamodel('<metamodel name="m"><class name="A"/><class name="A"/></metamodel>')


@pytest.mark.parametrize(
    "text, match",
    [
        ('<metamodel name="m" version="2"/>', "unknown XML attribute"),
        ('<metamodel name="m"><class name="A"><attribute name="x"/></class></metamodel>', "missing"),
        ('<metamodel name="m"><class name="A"><attribute name="x" type="float"/></class></metamodel>', "unknown type"),
        ('<metamodel name="m"><class name="A"><reference name="r" target="A" upper="x"/></class></metamodel>', "non-negative"),
        ('<metamodel name="m"><class name="A"><reference name="r" target="A" containment="yes"/></class></metamodel>', "true or false"),
        ('<metamodel name="m"><klass name="A"/></metamodel>', "not allowed"),
        ('<metamodel name="m">text</metamodel>', "must not contain text"),
        ('<!DOCTYPE x><metamodel name="m"/>', "DOCTYPE"),
        ('<metamodel name="m">', "no element found"),
    ],
)
def test_malformed_metamodels(text, match):
    with pytest.raises(ModelIOError, match=match):
        parse_metamodel(text)


# -- instances -----------------------------------------------------------


def test_current_config(meta):
    inst = parse_instance(CURRENT_TEXT, meta)
    devices = inst.get(inst.root).targets("devices")
    kinds = [inst.get(d).attributes["kind"] for d in devices]
    assert inst.root == "vehicle" and len(devices) == 16
    assert (kinds.count("camera"), kinds.count("radar"), kinds.count("ultrasonic")) == (1, 5, 10)


def test_root_only_document(meta):
    inst = parse_instance(instance_doc('<object id="v" class="Vehicle"><attr name="name" value=""/></object>'), meta)
    assert len(inst) == 1 and inst.root == "v"


def test_malformed_real_value_reports_span(meta):
    text = instance_doc(
        '\n<object id="d" class="Device">\n'
        '  <attr name="resolutionMp" value="abc"/>\n</object>\n'
        '<object id="v" class="Vehicle"/>'
    )
    with pytest.raises(ModelTypeError, match="resolutionMp") as info:
        parse_instance(text, meta)
    assert info.value.span == SourceSpan(3, 3)


@pytest.mark.parametrize(
    "body, match",
    [
        ('<object id="v" class="Lidar"/>', "unknown class"),
        ('<object id="v" class="Vehicle"><attr name="colour" value="red"/></object>', "no attribute"),
        ('<object id="v" class="Vehicle"/><object id="v" class="Vehicle"/>', "duplicate object id"),
        ('<object id="v" class="Vehicle"><link ref="devices" target="x"/></object>', "does not exist"),
        ('<object id="v" class="Vehicle"><link ref="wheels" target="v"/></object>', "no reference"),
        ('<object id="v" class="Vehicle" extra="1"/>', "unknown XML attribute"),
        ('<object id="1v" class="Vehicle"/>', "not a valid identifier"),
        ('<object id="w" class="Vehicle"/>', "root object"),
    ],
)
def test_malformed_instances(meta, body, match):
    with pytest.raises(ModelIOError, match=match):
        parse_instance(instance_doc(body), meta)


def test_wrong_metamodel_name(meta):
    with pytest.raises(ModelIOError, match="targets metamodel"):
        parse_instance('<model metamodel="other" root="v"><object id="v" class="Vehicle"/></model>', meta)


def test_current_config_round_trip(meta):
    inst = parse_instance(CURRENT_TEXT, meta)
    assert parse_instance(serialize_instance(inst, meta), meta) == inst
    assert serialize_instance(inst, meta) == CURRENT_TEXT
    assert serialize_instance(inst, meta) == serialize_instance(inst, meta)


def test_escaping_survives_round_trip(meta):
    name = 'a&b <c> "d"\te\nf\rg'
    inst = ModelInstance((ObjectNode("v", "Vehicle", {"name": name}),), "v")
    text = serialize_instance(inst, meta)
    assert "&amp;" in text and "&#10;" in text and "&#13;" in text
    assert parse_instance(text, meta).get("v").attributes["name"] == name


def test_attributes_follow_declaration_order(meta):
    inst = ModelInstance(
        (ObjectNode("d", "Device", {"resolutionMp": 1.0, "model": "m", "kind": "k"}),), "d"
    )
    with_meta = serialize_instance(inst, meta)
    assert with_meta.index('"kind"') < with_meta.index('"model"') < with_meta.index('"resolutionMp"')
    assert serialize_instance(inst).index('"kind"') < serialize_instance(inst).index('"resolutionMp"')


@pytest.mark.parametrize(
    "raw, kind, value",
    [("42", "integer", 42), ("-7", "integer", -7), ("8.3", "real", 8.3), ("3", "real", 3.0),
     (".5", "real", 0.5), ("1e3", "real", 1000.0), ("true", "boolean", True), ("", "text", "")],
)
def test_parse_value(raw, kind, value):
    got = parse_value(raw, kind)
    assert got == value and type(got) is type(value)


@pytest.mark.parametrize(
    "raw, kind",
    [("4.2", "integer"), ("abc", "real"), ("nan", "real"), ("inf", "real"), ("1e999", "real"),
     ("True", "boolean"), ("1", "boolean")],
)
def test_parse_value_rejects(raw, kind):
    with pytest.raises(ValueError):
        parse_value(raw, kind)


def test_format_value_is_shortest_repr():
    assert format_value(8.3, "real") == "8.3"
    assert format_value(3, "real") == "3.0"
    assert format_value(False) == "false"


# -- properties ------------------------------------------------------------


@given(metamodels())
def test_metamodel_round_trip(meta):
    text = serialize_metamodel(meta)
    assert parse_metamodel(text) == meta
    assert serialize_metamodel(parse_metamodel(text)) == text


@given(models())
def test_instance_round_trip_any_metamodel(case):
    meta, inst = case
    text = serialize_instance(inst, meta)
    back = parse_instance(text, meta)
    assert back == inst
    assert serialize_instance(back, meta) == text


@given(vehicle_instances(), st.randoms(use_true_random=False))
def test_serialization_ignores_construction_order(meta, inst, rnd):
    shuffled = list(inst.objects)
    rnd.shuffle(shuffled)
    rebuilt = ModelInstance(
        tuple(ObjectNode(o.id, o.cls, dict(reversed(list(o.attributes.items()))), o.links) for o in shuffled),
        inst.root,
    )
    assert rebuilt == inst
    assert serialize_instance(rebuilt, meta) == serialize_instance(inst, meta)


@given(st.integers(0, len(CURRENT_TEXT)), st.text(alphabet='<>"=/ a&', max_size=3))
def test_parse_errors_carry_spans_inside_the_document(meta, cut, junk):
    text = CURRENT_TEXT[:cut] + junk + CURRENT_TEXT[cut:]
    try:
        parse_instance(text, meta)
    except ModelIOError as exc:
        assert exc.span is not None
        lines = text.split("\n")
        assert 1 <= exc.span.line <= len(lines)
        assert 1 <= exc.span.column <= len(lines[exc.span.line - 1]) + 1


def test_syntax_error_class():
    with pytest.raises(ModelSyntaxError):
        parse_metamodel("<metamodel")
