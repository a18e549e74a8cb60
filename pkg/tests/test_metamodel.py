from __future__ import annotations

import copy

import pytest
from hypothesis import given, strategies as st

from archevolve import data
from archevolve.metamodel import (
    Attribute,
    ClassDef,
    DeltaError,
    InstanceError,
    Metamodel,
    MetamodelError,
    ModelDelta,
    ModelInstance,
    ObjectNode,
    Reference,
    ViolationKind,
    apply_delta,
    check_conformance,
    diff_instances,
    value_matches,
)
from archevolve.modelio import load_instance, load_metamodel

from strategies import vehicle_instances


@pytest.fixture(scope="module")
def meta():
    return load_metamodel(data.path(data.METAMODEL))


@pytest.fixture(scope="module")
def current(meta):
    return load_instance(data.path(data.CURRENT_MODEL), meta)


def camera(oid="camera_2", res=8.3, model="c1"):
    return ObjectNode(oid, "Device", {"kind": "camera", "model": model, "resolutionMp": res})


# -- structural invariants -------------------------------------------------


def test_duplicate_class_names_rejected():
    with pytest.raises(MetamodelError, match="duplicate"):
        Metamodel("m", (ClassDef("A"), ClassDef("A")))


def test_unresolved_reference_target_rejected():
    with pytest.raises(MetamodelError, match="Ghost"):
        Metamodel("m", (ClassDef("A", (), (Reference("r", "Ghost"),)),))


def test_feature_names_unique_within_class():
    with pytest.raises(MetamodelError):
        ClassDef("A", (Attribute("x", "integer"),), (Reference("x", "A"),))
    with pytest.raises(MetamodelError):
        ClassDef("A", (Attribute("x", "integer"), Attribute("x", "real")))


def test_lower_bound_above_upper_rejected():
    with pytest.raises(MetamodelError):
        Reference("r", "A", lower=3, upper=2)


def test_unknown_scalar_type_rejected():
    with pytest.raises(MetamodelError, match="unknown type"):
        Attribute("x", "float")


def test_instance_requires_root_and_unique_ids():
    a = ObjectNode("a", "A")
    with pytest.raises(InstanceError, match="root"):
        ModelInstance((a,), "b")
    with pytest.raises(InstanceError, match="duplicate"):
        ModelInstance((a, ObjectNode("a", "A")), "a")


def test_instance_rejects_dangling_links():
    with pytest.raises(InstanceError, match="missing object"):
        ModelInstance((ObjectNode("a", "A", {}, {"r": ("zz",)}),), "a")


def test_objects_sorted_by_id():
    inst = ModelInstance((ObjectNode("b", "A"), ObjectNode("a", "A")), "b")
    assert inst.ids == ("a", "b")


def test_value_matches_distinguishes_booleans():
    assert value_matches(True, "boolean")
    assert not value_matches(True, "integer")
    assert not value_matches(1, "boolean")
    assert value_matches(3, "real")
    assert not value_matches(float("nan"), "real")
    assert not value_matches("a\x01b", "text")


# -- conformance ---------------------------------------------------------


def test_root_only_instance_is_conformant(meta):
    inst = ModelInstance((ObjectNode("v", "Vehicle", {"name": "x"}),), "v")
    assert check_conformance(inst, meta).conformant


def test_current_config_is_conformant(meta, current):
    assert check_conformance(current, meta).violations == ()
    kinds = [o.attributes["kind"] for o in current.of_class("Device")]
    assert (kinds.count("camera"), kinds.count("radar"), kinds.count("ultrasonic")) == (1, 5, 10)


def test_undeclared_class_reported(meta, current):
    lidar = ObjectNode("lidar_1", "Lidar")
    inst = ModelInstance(current.objects + (lidar,), current.root)
    report = check_conformance(inst, meta)
    assert [(v.object_id, v.kind) for v in report.violations] == [
        ("lidar_1", ViolationKind.UNKNOWN_CLASS)
    ]


def test_report_lists_each_defect(meta):
    objs = (
        ObjectNode("v", "Vehicle", {"name": 3, "colour": "red"}, {"wheels": ("v",)}),
        ObjectNode("d", "Device", {"kind": "camera", "model": "c1"}),
    )
    report = check_conformance(ModelInstance(objs, "v"), meta)
    got = {(v.object_id, v.kind) for v in report.violations}
    assert got == {
        ("v", ViolationKind.TYPE_MISMATCH),
        ("v", ViolationKind.UNKNOWN_ATTRIBUTE),
        ("v", ViolationKind.UNKNOWN_REFERENCE),
        ("d", ViolationKind.MULTIPLICITY),
    }


def test_link_target_class_checked(meta):
    objs = (
        ObjectNode("v", "Vehicle", {"name": ""}, {"devices": ("w",)}),
        ObjectNode("w", "Vehicle", {"name": ""}),
    )
    report = check_conformance(ModelInstance(objs, "v"), meta)
    assert [v.kind for v in report.for_object("v")] == [ViolationKind.TYPE_MISMATCH]


def test_double_containment_reported(meta):
    d = camera("d")
    objs = (
        ObjectNode("v1", "Vehicle", {"name": ""}, {"devices": ("d",)}),
        ObjectNode("v2", "Vehicle", {"name": ""}, {"devices": ("d",)}),
        d,
    )
    report = check_conformance(ModelInstance(objs, "v1"), meta)
    assert [v.object_id for v in report.violations] == ["d"]


def test_bounded_multiplicity():
    meta = Metamodel(
        "m", (ClassDef("A", (), (Reference("r", "A", lower=1, upper=2),)),)
    )
    ok = ModelInstance((ObjectNode("a", "A", {}, {"r": ("a",)}),), "a")
    assert check_conformance(ok, meta).conformant
    empty = ModelInstance((ObjectNode("a", "A"),), "a")
    assert "expected 1..2" in check_conformance(empty, meta).violations[0].reason


_DEFECTS = ("unknown_class", "drop_attr", "bad_type", "extra_attr", "bad_ref", "bad_target")


def _corrupt(inst: ModelInstance, victim: str, defect: str) -> ModelInstance:
    objs = []
    for o in inst.objects:
        if o.id != victim:
            objs.append(o)
            continue
        attrs, links, cls = dict(o.attributes), dict(o.links), o.cls
        if defect == "unknown_class":
            cls = "Ghost"
        elif defect == "drop_attr":
            attrs.pop(next(iter(attrs)))
        elif defect == "bad_type":
            key = next(iter(attrs))
            attrs[key] = True
        elif defect == "extra_attr":
            attrs["bogus"] = 1
        elif defect == "bad_ref":
            links["bogus"] = (o.id,)
        else:
            links["devices"] = (inst.root,) if o.cls == "Vehicle" else (o.id,)
        objs.append(ObjectNode(o.id, cls, attrs, links))
    return ModelInstance(tuple(objs), inst.root)


@given(vehicle_instances(), st.data())
def test_injected_defect_is_always_reported(meta, inst, draw):
    assert check_conformance(inst, meta).conformant
    victim = draw.draw(st.sampled_from(inst.ids))
    defect = draw.draw(st.sampled_from(_DEFECTS))
    corrupted = _corrupt(inst, victim, defect)
    named = {v.object_id for v in check_conformance(corrupted, meta).violations}
    assert victim in named


# -- deltas --------------------------------------------------------------


def _merge_oracle(inst: ModelInstance, delta: ModelDelta) -> ModelInstance:
    """Plain dictionary rebuild, independent of apply_delta."""
    table = {o.id: [o.cls, dict(o.attributes), {k: list(v) for k, v in o.links.items()}] for o in inst}
    for o in delta.additions:
        table[o.id] = [o.cls, dict(o.attributes), {k: list(v) for k, v in o.links.items()}]
    for src, ref, tgt in delta.link_additions:
        table[src][2].setdefault(ref, []).append(tgt)
    for oid, name, value in delta.attribute_changes:
        table[oid][1][name] = value
    return ModelInstance(
        tuple(ObjectNode(k, c, a, l) for k, (c, a, l) in table.items()), inst.root
    )


def test_empty_delta_is_identity(current):
    assert apply_delta(current, ModelDelta()) == current


def test_adding_camera_c1(meta, current):
    delta = ModelDelta((camera(),), (("vehicle", "devices", "camera_2"),))
    out = apply_delta(current, delta)
    assert len(out) == len(current) + 1
    cams = [o for o in out.of_class("Device") if o.attributes["kind"] == "camera"]
    assert [c.id for c in cams] == ["camera_1", "camera_2"]
    assert check_conformance(out, meta).conformant
    assert "camera_2" not in current


def test_duplicate_addition_rejected_atomically(current):
    before = copy.deepcopy(current)
    delta = ModelDelta((camera("radar_1"),), (("vehicle", "devices", "radar_1"),))
    with pytest.raises(DeltaError, match="duplicate"):
        apply_delta(current, delta)
    assert current == before


def test_dangling_link_rejected(current):
    with pytest.raises(DeltaError, match="does not exist"):
        apply_delta(current, ModelDelta((), (("vehicle", "devices", "nowhere"),)))


def test_diff_rejects_removal(current):
    bigger = ModelInstance(current.objects + (camera("spare"),), current.root)
    with pytest.raises(DeltaError, match="removed"):
        diff_instances(bigger, current)


def test_diff_reports_attribute_change_exactly(current):
    delta = ModelDelta(attribute_changes=(("radar_1", "resolutionMp", 1.0),))
    changed = apply_delta(current, delta)
    assert diff_instances(current, changed).attribute_changes == delta.attribute_changes


@st.composite
def instance_and_delta(draw):
    inst = draw(vehicle_instances(max_objects=20))
    vehicles = [o.id for o in inst.of_class("Vehicle")]
    n = draw(st.integers(0, 3))
    additions = tuple(camera(f"new_{i}", draw(st.floats(0, 20))) for i in range(n))
    links = tuple(
        (draw(st.sampled_from(vehicles)), "devices", a.id) for a in additions if draw(st.booleans())
    )
    devices = [o.id for o in inst.of_class("Device")]
    changes = ()
    if devices and draw(st.booleans()):
        changes = ((draw(st.sampled_from(devices)), "model", draw(st.sampled_from(["c0", "c1"]))),)
    return inst, ModelDelta(additions, links, changes)


@given(instance_and_delta())
def test_apply_delta_matches_independent_merge(meta, case):
    inst, delta = case
    snapshot = copy.deepcopy(inst)
    out = apply_delta(inst, delta)
    assert inst == snapshot
    assert out == _merge_oracle(inst, delta)
    assert len(out) == len(inst) + len(delta.additions)
    assert check_conformance(out, meta) == check_conformance(_merge_oracle(inst, delta), meta)
    assert apply_delta(inst, delta) == out


@given(instance_and_delta())
def test_diff_inverts_apply(case):
    inst, delta = case
    out = apply_delta(inst, delta)
    recovered = diff_instances(inst, out)
    assert apply_delta(inst, recovered) == out
