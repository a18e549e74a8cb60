from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import pytest

from archevolve.architect import ANALYSIS_SCHEMA, ESTIMATE_SCHEMA, OPTIONS_SCHEMA
from archevolve.cli import main
from archevolve.compat import FINDINGS_SCHEMA

from scenarios import B2_PROSE, COMPAT, GOLDEN, architect_argv, update_argv

SCHEMAS = Path(__file__).parent.parent / "docs" / "schemas"


def schema(name: str) -> dict:
    return json.loads((SCHEMAS / f"{name}.json").read_text(encoding="utf-8"))


@pytest.mark.parametrize(
    "name, code",
    [("llm-options", OPTIONS_SCHEMA), ("llm-analysis", ANALYSIS_SCHEMA),
     ("llm-estimate", ESTIMATE_SCHEMA), ("llm-findings", FINDINGS_SCHEMA)],
)
def test_published_llm_schemas_match_code(name, code):
    doc = schema(name)
    doc.pop("$schema")
    doc.pop("title")
    assert doc == code


def structured(argv, capsys, tmp_path):
    out = tmp_path / "out.json"
    main([str(a) for a in argv] + ["--format", "structured", "--out", str(out)])
    capsys.readouterr()
    return json.loads(out.read_text(encoding="utf-8"))


def test_update_output_matches_schema(capsys, tmp_path):
    for model in ("c0", "c1"):
        jsonschema.validate(structured(update_argv(model), capsys, tmp_path), schema("update-result"))
    jsonschema.validate(json.loads((GOLDEN / "update_a2.json").read_text()), schema("update-result"))


def test_validate_output_matches_schema(capsys, tmp_path):
    jsonschema.validate(structured(["validate"], capsys, tmp_path), schema("validate-result"))


def test_compat_output_matches_schema(capsys, tmp_path):
    b1 = ["compat", "--system", COMPAT / "b1" / "subscriber.amidl", "--component", COMPAT / "b1" / "publisher.amidl"]
    jsonschema.validate(structured(b1, capsys, tmp_path), schema("compat-result"))
    prose = [
        "compat", "--mode", "llm_assisted", "--producer", "system", "--fixtures", B2_PROSE / "replay",
        "--system", B2_PROSE / "system_spec.md", "--component", B2_PROSE / "component_spec.md",
        "--requirement", B2_PROSE / "requirement.txt",
    ]
    jsonschema.validate(structured(prose, capsys, tmp_path), schema("compat-result"))


def test_architect_output_matches_schema(capsys, tmp_path):
    argv = architect_argv(tmp_path / "ignored.md")
    argv = argv[: argv.index("--out")]
    jsonschema.validate(structured(argv, capsys, tmp_path), schema("architect-result"))
