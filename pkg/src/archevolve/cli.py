"""``archevolve`` command line.

Exit codes: 0 success, 2 domain-level rejection (gate closed, incompatible
interfaces, failing invariants), 1 operational error (bad input, provider,
fixture miss, usage).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from archevolve import data
from archevolve.architect import ArchitectInput, AssistantPaths, run_assistant
from archevolve.compat import CheckerInputs, FieldMapping, run_checker
from archevolve.errors import ArchEvolveError
from archevolve.llm import (
    LiveConfig,
    LiveProvider,
    LLMClient,
    Provider,
    ReplayProvider,
    ScriptedProvider,
    load_fixtures,
)
from archevolve.llm.core import DEFAULT_MODEL
from archevolve.metamodel import check_conformance
from archevolve.modelio import load_instance, load_metamodel
from archevolve.ocl import evaluate, parse_rules
from archevolve.update import DeviceSpec, run_pipeline

EXIT_OK, EXIT_ERROR, EXIT_REJECTED = 0, 1, 2
PROVIDER_MODES = ("live", "replay", "scripted")
FORMATS = ("text", "structured")


class UsageError(ArchEvolveError):
    pass


@dataclass(frozen=True)
class RunConfig:
    provider_mode: str = "replay"
    model_name: str = DEFAULT_MODEL
    fixtures_dir: Path | None = None
    output_format: str = "text"
    verbosity: int = 0
    scripts: tuple[Path, ...] = ()
    record_to: Path | None = None

    def __post_init__(self) -> None:
        if self.provider_mode not in PROVIDER_MODES:
            raise UsageError(f"unknown provider mode {self.provider_mode!r}")
        if self.output_format not in FORMATS:
            raise UsageError(f"unknown output format {self.output_format!r}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        return cls(
            provider_mode=args.provider,
            model_name=args.model,
            fixtures_dir=args.fixtures,
            output_format=args.format,
            verbosity=args.verbose,
            scripts=tuple(args.script or ()),
            record_to=args.record,
        )

    def provider(self) -> Provider:
        if self.provider_mode == "live":
            return LiveProvider(LiveConfig.from_env())
        if self.provider_mode == "replay":
            if self.fixtures_dir is None:
                raise UsageError("--provider replay needs --fixtures DIR")
            return ReplayProvider(load_fixtures(self.fixtures_dir))
        return ScriptedProvider(_read(p) for p in self.scripts)

    def client(self) -> LLMClient:
        return LLMClient(self.provider(), model=self.model_name, record_to=self.record_to)


class _Parser(argparse.ArgumentParser):
    # usage errors are operational, never a domain rejection
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _read(path: Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _require(*paths: Path | None) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise UsageError(f"no such file: {p}")


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------


def cmd_update(args: argparse.Namespace, config: RunConfig) -> int:
    _require(args.device, args.requirements, args.current, args.metamodel, args.catalog,
             args.reference_requirements, args.rules)
    result = run_pipeline(
        args.current,
        args.metamodel,
        DeviceSpec.load(args.device),
        _read(args.requirements),
        _read(args.reference_requirements),
        args.catalog,
        config.client(),
        rules_path=args.rules,
    )
    _emit(args, result.to_json() if config.output_format == "structured" else result.render())
    if result.decision.proceed:
        return EXIT_OK
    if result.report is not None:
        for r in result.report.failed:
            print(f"rejected: invariant {r.name} violated: {r.message}", file=sys.stderr)
    else:
        print(f"rejected ({result.decision.stage}): {result.decision.reason}", file=sys.stderr)
    return EXIT_REJECTED


def cmd_validate(args: argparse.Namespace, config: RunConfig) -> int:
    _require(args.instance, args.metamodel, args.rules)
    meta = load_metamodel(args.metamodel)
    instance = load_instance(args.instance, meta)
    conformance = check_conformance(instance, meta)
    rules = parse_rules(_read(args.rules))
    report = evaluate(rules, instance, meta)
    if config.output_format == "structured":
        doc = {
            "conformant": conformance.conformant,
            "violations": [
                {"object": v.object_id, "kind": v.kind.value, "reason": v.reason}
                for v in conformance.violations
            ],
            "report": report.to_dict(),
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"conformant: {'yes' if conformance.conformant else 'no'}\n"]
        lines += [f"  {v.object_id}: {v.kind.value}: {v.reason}\n" for v in conformance.violations]
        for r in report.results:
            if r.holds:
                lines.append(f"PASS {r.name}\n")
            else:
                lines.append(f"FAIL {r.name}: {r.message} [{', '.join(r.failing_objects)}]\n")
            lines += [f"     error: {e}\n" for e in r.errors]
        text = "".join(lines)
    _emit(args, text)
    for r in report.failed:
        print(f"invariant {r.name} violated: {r.message}", file=sys.stderr)
    return EXIT_OK if conformance.conformant and report.passed else EXIT_REJECTED


def cmd_compat(args: argparse.Namespace, config: RunConfig) -> int:
    _require(args.system, args.component, args.mapping, args.requirement,
             args.system_code, args.component_code)
    inputs = CheckerInputs(
        system_spec=_read(args.system),
        component_spec=_read(args.component),
        system_code=_read(args.system_code) if args.system_code else "",
        component_code=_read(args.component_code) if args.component_code else "",
        requirement=_read(args.requirement) if args.requirement else "",
        producer=args.producer,
    )
    mapping = FieldMapping.parse(_read(args.mapping)) if args.mapping else None
    llm = config.client() if args.mode == "llm_assisted" else None
    report = run_checker(inputs, args.mode, llm, mapping, args.rate_tolerance)
    _emit(args, report.to_json() if config.output_format == "structured" else report.render())
    return EXIT_OK if report.compatible else EXIT_REJECTED


def cmd_architect(args: argparse.Namespace, config: RunConfig) -> int:
    _require(args.system_root, args.system_spec, args.component_root, args.component_spec,
             args.requirement)
    report = run_assistant(
        AssistantPaths(args.system_root, args.system_spec, args.component_root, args.component_spec),
        _read(args.requirement),
        ArchitectInput.load(args.architect_input),
        config.client(),
        max_workers=args.workers,
    )
    _emit(args, report.to_json() if config.output_format == "structured" else report.to_markdown())
    return EXIT_OK


def cmd_fixtures(args: argparse.Namespace, config: RunConfig) -> int:
    store = load_fixtures(args.directory)
    if args.action == "list":
        for fx in sorted(store, key=lambda f: (f.template_id, f.digest)):
            print(f"{fx.digest}  {fx.template_id}")
    print(f"{len(store)} fixture(s) valid in {args.directory}", file=sys.stderr)
    return EXIT_OK


# -- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--provider", choices=PROVIDER_MODES, default="replay")
    common.add_argument("--model", default=DEFAULT_MODEL, help="model name sent to the provider")
    common.add_argument("--fixtures", type=Path, help="replay fixture directory")
    common.add_argument("--script", type=Path, action="append",
                        help="scripted completion file; repeat in call order")
    common.add_argument("--record", type=Path, help="write every completion as a fixture here")
    common.add_argument("--format", choices=FORMATS, default="text")
    common.add_argument("--out", type=Path, help="write the report here instead of stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="archevolve", description="LLM-assisted software evolution workflows")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("update", parents=[common], help="update the model for a new device")
    p.add_argument("--device", type=Path, required=True, help="device spec JSON")
    p.add_argument("--requirements", type=Path, required=True, help="new requirement text")
    p.add_argument("--current", type=Path, default=data.path(data.CURRENT_MODEL))
    p.add_argument("--metamodel", type=Path, default=data.path(data.METAMODEL))
    p.add_argument("--catalog", type=Path, default=data.path(data.CATALOG))
    p.add_argument("--reference-requirements", type=Path,
                   default=data.path(data.REFERENCE_REQUIREMENTS))
    p.add_argument("--rules", type=Path, help="use these rules instead of generating them")
    p.set_defaults(handler=cmd_update)

    p = sub.add_parser("validate", parents=[common], help="check a model against rules")
    p.add_argument("--instance", type=Path, default=data.path(data.CURRENT_MODEL))
    p.add_argument("--metamodel", type=Path, default=data.path(data.METAMODEL))
    p.add_argument("--rules", type=Path, default=data.path(data.RULES))
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("compat", parents=[common], help="check interface compatibility")
    p.add_argument("--system", type=Path, required=True)
    p.add_argument("--component", type=Path, required=True)
    p.add_argument("--producer", choices=("system", "component"), default="component")
    p.add_argument("--mode", choices=("deterministic", "llm_assisted"), default="deterministic")
    p.add_argument("--mapping", type=Path, help="field mapping file (producer -> consumer)")
    p.add_argument("--requirement", type=Path)
    p.add_argument("--system-code", type=Path)
    p.add_argument("--component-code", type=Path)
    p.add_argument("--rate-tolerance", type=float, default=0.0)
    p.set_defaults(handler=cmd_compat)

    p = sub.add_parser("architect", parents=[common], help="suggest architecture modifications")
    p.add_argument("--system-root", type=Path, required=True)
    p.add_argument("--system-spec", type=Path, required=True)
    p.add_argument("--component-root", type=Path, required=True)
    p.add_argument("--component-spec", type=Path, required=True)
    p.add_argument("--requirement", type=Path, required=True)
    p.add_argument("--architect-input", type=Path, help="guidelines; missing file means none")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_architect)

    p = sub.add_parser("fixtures", parents=[common], help="inspect replay fixtures")
    p.add_argument("action", choices=("list", "verify"))
    p.add_argument("directory", type=Path)
    p.set_defaults(handler=cmd_fixtures)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.from_args(args)
        return args.handler(args, config)
    except (ArchEvolveError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
