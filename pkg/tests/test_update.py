from __future__ import annotations

import json

import pytest
from hypothesis import given, settings

from archevolve import data
from archevolve.llm import LLMClient, ScriptedProvider, StructuredOutputError
from archevolve.metamodel import ModelInstance, ObjectNode
from archevolve.modelio import load_instance, load_metamodel, serialize_instance
from archevolve.ocl import evaluate, parse_rules
from archevolve.update import (
    CatalogError,
    CatalogMissError,
    ComponentCatalog,
    DeviceSpec,
    PipelineError,
    UpdateRejected,
    check_additive,
    generate_commands,
    generate_rules,
    propose_update,
    run_pipeline,
)

from oracle import failing_objects
from scenarios import UPDATE, fenced, run_gate_scenario, update_script
from strategies import gate_scenarios

C0 = DeviceSpec("c0", "camera", 2.1, "rear parking camera")
C1 = DeviceSpec("c1", "camera", 8.3, "rear parking camera")
REQUIREMENT = (UPDATE / "requirement.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="module")
def meta():
    return load_metamodel(data.path(data.METAMODEL))


@pytest.fixture(scope="module")
def current(meta):
    return load_instance(data.path(data.CURRENT_MODEL), meta)


@pytest.fixture(scope="module")
def catalog():
    return ComponentCatalog.load(data.path(data.CATALOG))


@pytest.fixture(scope="module")
def rules():
    return parse_rules(data.read(data.RULES))


def scripted(*responses: str) -> LLMClient:
    return LLMClient(ScriptedProvider(responses))


def pipeline(llm: LLMClient, device: DeviceSpec = C1, **kwargs):
    return run_pipeline(
        kwargs.pop("current", data.path(data.CURRENT_MODEL)),
        data.path(data.METAMODEL),
        device,
        REQUIREMENT,
        kwargs.pop("reference", data.read(data.REFERENCE_REQUIREMENTS)),
        kwargs.pop("catalog", data.path(data.CATALOG)),
        llm,
        **kwargs,
    )


def with_camera(current: ModelInstance, meta, res: float, model: str = "c1") -> str:
    cam = ObjectNode("camera_2", "Device", {"kind": "camera", "model": model, "resolutionMp": res})
    objs = [o for o in current.objects if o.id != current.root]
    root = current.get(current.root)
    devices = root.targets("devices") + ("camera_2",)
    objs += [cam, ObjectNode(root.id, root.cls, root.attributes, {"devices": devices})]
    return serialize_instance(ModelInstance(tuple(objs), current.root), meta)


# -- device specs and catalog ------------------------------------------------


def test_device_spec_from_file():
    assert DeviceSpec.load(UPDATE / "device_c0.json") == C0


def test_device_spec_requires_model():
    with pytest.raises(ValueError):
        DeviceSpec(" ", "camera")
    with pytest.raises(ValueError):
        DeviceSpec("c1", "camera", -1.0)


def test_bundled_catalog(catalog):
    assert catalog.scenario == "parking"
    assert {"c0", "c1"} <= set(catalog.drivers)
    assert [t.name for t in catalog.relevant_topics(C1)] == ["camera2parking"]


def test_relevant_topics_match_kind_or_scenario(catalog):
    radar = DeviceSpec("r4", "radar")
    assert [t.name for t in catalog.relevant_topics(radar)] == ["camera2parking", "radar2cruise"]


@pytest.mark.parametrize(
    "data_, match",
    [
        ({"scenario": "p", "drivers": {}, "docker_template": "run", "extra": 1}, "unknown catalog section"),
        ({"scenario": "p", "drivers": {"c1": " "}, "docker_template": "run"}, "empty"),
        ({"scenario": "p", "drivers": {}, "docker_template": "run {{colour}}"}, "unknown placeholder"),
        ({"scenario": "", "drivers": {}, "docker_template": "run"}, "scenario"),
        ({"scenario": "p", "drivers": {}}, "missing"),
        ({"scenario": "p", "drivers": {}, "docker_template": "r", "topics": [{"name": "t", "message_type": "m", "direction": "both"}]}, "direction"),
    ],
)
def test_malformed_catalogs(data_, match):
    with pytest.raises(CatalogError, match=match):
        ComponentCatalog.from_dict(data_)


def test_catalog_file_not_found(tmp_path):
    with pytest.raises(CatalogError, match="cannot read"):
        ComponentCatalog.load(tmp_path / "none.json")


# -- rule generation -----------------------------------------------------------


def test_generate_rules_from_reference_text(meta):
    llm = scripted(update_script("c1")[0])
    rules = generate_rules(data.read(data.REFERENCE_REQUIREMENTS), llm, meta)
    assert rules.names == ("minCams", "minRadars", "minUltrasonic")
    prompt = llm.transcript.entries[0].prompt
    assert "8.3 MP" in prompt and "ultrasonic" in prompt


def test_garbage_rules_fail_after_repair():
    llm = scripted("no rules here", "```ocl\ncontext Vehicle inv\n```")
    with pytest.raises(StructuredOutputError):
        generate_rules("two cameras", llm)
    assert [e.request.template_id for e in llm.transcript] == ["generate-rules", "repair"]


def test_ill_typed_rules_are_repaired(meta):
    bad = fenced("ocl", "context Vehicle inv x: self.wheels->size() > 0")
    llm = scripted(bad, update_script("c1")[0])
    assert len(generate_rules("two cameras", llm, meta)) == 3


def test_empty_reference_requirements_make_no_call():
    llm = scripted()
    with pytest.raises(ValueError):
        generate_rules("  \n", llm)
    assert len(llm.transcript) == 0


# -- model update ------------------------------------------------------------


def test_propose_update_adds_camera(meta, current):
    llm = scripted(fenced("xml", with_camera(current, meta, 8.3)))
    out = propose_update(current, meta, C1, REQUIREMENT, llm)
    assert len(out) == len(current) + 1
    assert out.get("camera_2").attributes["resolutionMp"] == 8.3
    prompt = llm.transcript.entries[0].prompt
    assert "model: c1" in prompt and REQUIREMENT.strip() in prompt


def test_low_resolution_update_still_succeeds(meta, current):
    llm = scripted(fenced("xml", with_camera(current, meta, 2.1, "c0")))
    assert propose_update(current, meta, C0, REQUIREMENT, llm).get("camera_2").attributes["model"] == "c0"


def test_echoed_model_is_accepted_with_warning(meta, current, caplog):
    llm = scripted(fenced("xml", serialize_instance(current, meta)))
    assert propose_update(current, meta, C1, REQUIREMENT, llm) == current
    assert "added no objects" in caplog.text


def test_check_additive_rejects_mutation(meta, current):
    objs = tuple(
        ObjectNode(o.id, o.cls, {**o.attributes, "resolutionMp": 1.0}, o.links) if o.id == "radar_1" else o
        for o in current.objects
    )
    with pytest.raises(UpdateRejected, match="radar_1.resolutionMp"):
        check_additive(current, ModelInstance(objs, current.root))


def test_check_additive_rejects_deletion(current):
    root = current.get(current.root)
    keep = tuple(o for o in current.objects if o.id not in ("radar_1", root.id))
    devices = tuple(d for d in root.targets("devices") if d != "radar_1")
    smaller = ModelInstance(keep + (ObjectNode(root.id, root.cls, root.attributes, {"devices": devices}),), root.id)
    with pytest.raises(UpdateRejected, match="not additive"):
        check_additive(current, smaller)


def test_non_additive_output_repaired_then_rejected(meta, current):
    text = serialize_instance(current, meta).replace('value="8.3"', 'value="9.9"', 1)
    llm = scripted(fenced("xml", text), fenced("xml", text))
    with pytest.raises(StructuredOutputError, match="not additive"):
        propose_update(current, meta, C1, REQUIREMENT, llm)


def test_non_conformant_output_is_repaired(meta, current):
    bad = with_camera(current, meta, 8.3).replace('<attr name="kind" value="camera"/>', "", 1)
    good = with_camera(current, meta, 8.3)
    llm = scripted(fenced("xml", bad), fenced("xml", good))
    assert "camera_2" in propose_update(current, meta, C1, REQUIREMENT, llm)
    assert "does not conform" in llm.transcript.entries[1].prompt


# -- commands ------------------------------------------------------------------


def test_plan_for_c1(meta, current, catalog, rules):
    from archevolve.modelio import parse_instance

    updated = parse_instance(with_camera(current, meta, 8.3), meta)
    report = evaluate(rules, updated, meta)
    plan = generate_commands(updated, C1, catalog, report)
    assert [c.category for c in plan.commands] == ["driver_install", "container_run", "topic_subscribe"]
    assert "c1" in plan.of("driver_install")[0].text
    assert "parking" in plan.of("container_run")[0].text
    assert "camera2parking" in plan.of("topic_subscribe")[0].text
    assert "{{" not in plan.render()


def test_failed_report_gives_empty_plan(meta, current, catalog, rules):
    report = evaluate(rules, current, meta)
    assert not report.passed
    assert not generate_commands(current, DeviceSpec("cX", "camera"), catalog, report)


def test_unknown_model_with_passing_report_is_catalog_miss(meta, current, catalog, rules):
    from archevolve.modelio import parse_instance

    updated = parse_instance(with_camera(current, meta, 8.3, "cX"), meta)
    report = evaluate(rules, updated, meta)
    with pytest.raises(CatalogMissError, match="cX"):
        generate_commands(updated, DeviceSpec("cX", "camera", 8.3), catalog, report)


# -- full pipeline ---------------------------------------------------------------


def test_scenario_a1_rejected():
    result = pipeline(scripted(*update_script("c0")), C0)
    assert not result.decision.proceed
    assert result.decision.stage == "validate"
    assert result.decision.reason == "Camera resolution too low"
    assert not result.plan and len(result.transcript) == 2


def test_scenario_a2_proceeds():
    result = pipeline(scripted(*update_script("c1")))
    assert result.decision.proceed and result.report.passed
    assert len(result.plan) == 3
    assert [o.id for o in result.delta.additions] == ["camera_2"]


def test_rules_file_skips_generation():
    result = pipeline(scripted(update_script("c1")[1]), rules_path=data.path(data.RULES))
    assert result.decision.proceed
    assert [e.request.template_id for e in result.transcript] == ["update-model"]


def test_update_failure_after_repair_is_rejected_at_update_stage():
    llm = scripted(update_script("c1")[0], "nothing", "still nothing")
    result = pipeline(llm)
    assert (result.decision.proceed, result.decision.stage) == (False, "update")
    assert result.report is None and result.updated_instance is None and not result.plan
    assert len(result.transcript) == 3


def test_stage_tags(tmp_path):
    with pytest.raises(PipelineError) as info:
        pipeline(scripted(), catalog=tmp_path / "missing.json")
    assert info.value.stage == "load"
    with pytest.raises(PipelineError) as info:
        pipeline(scripted(), reference="")
    assert info.value.stage == "rules"
    with pytest.raises(PipelineError) as info:
        pipeline(scripted(update_script("c1")[0]))
    assert info.value.stage == "update"


def test_catalog_miss_is_commands_stage(meta, current):
    llm = scripted(update_script("c1")[0], fenced("xml", with_camera(current, meta, 8.3, "cX")))
    with pytest.raises(PipelineError, match="cX") as info:
        pipeline(llm, DeviceSpec("cX", "camera", 8.3))
    assert info.value.stage == "commands"


def test_structured_result_is_deterministic():
    first = pipeline(scripted(*update_script("c1"))).to_json()
    second = pipeline(scripted(*update_script("c1"))).to_json()
    assert first == second
    doc = json.loads(first)
    assert doc["decision"]["proceed"] and len(doc["plan"]) == 3
    assert "wall_time" not in first


def test_transcript_counts_only_this_run():
    llm = scripted(*update_script("c1"), *update_script("c0"))
    pipeline(llm)
    result = pipeline(llm, C0)
    assert len(result.transcript) == 2 and len(llm.transcript) == 4


# -- gate properties -------------------------------------------------------------


@settings(max_examples=200)
@given(gate_scenarios())
def test_gate_is_sound_and_complete(case):
    result = run_gate_scenario(case)
    expected = case.expected_to_hold()
    oracle = failing_objects(result.rules, case.model_text(), data.read(data.METAMODEL))
    assert (not any(oracle.values())) == expected
    assert result.report.passed == expected
    assert bool(result.plan) == expected == result.decision.proceed
    if result.plan:
        assert len(result.plan.of("driver_install")) == 1
        assert len(result.plan.of("container_run")) == 1
        assert len(result.plan.of("topic_subscribe")) >= 1


@settings(max_examples=50)
@given(gate_scenarios())
def test_update_never_touches_existing_objects(case):
    result = run_gate_scenario(case)
    meta = load_metamodel(data.path(data.METAMODEL))
    current = load_instance(data.path(data.CURRENT_MODEL), meta)
    for obj in current:
        if obj.id != current.root:
            assert result.updated_instance.get(obj.id) == obj
    assert len(result.delta.additions) == case.copies
    assert bool(result.warnings) == (case.copies == 0)
