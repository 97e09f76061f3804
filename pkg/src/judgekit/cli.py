"""Command-line pipeline: ingest -> judge -> filter -> audit -> report.

Stages communicate only through persisted record files in the output
directory, so any stage can be re-run in isolation and reruns are idempotent.
Exit codes: 0 success, 1 validation failure, 2 infrastructure failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import audit as audit_mod
from . import corpus as corpus_mod
from . import figures as figures_mod
from . import filtering as filtering_mod
from . import metrics as metrics_mod
from . import report as report_mod
from .client import HttpBackend, MockBackend, ModelEndpoint, complete, request_hash
from .errors import (AugmentationEmpty, AuthError, JudgekitError, MalformedRecord,
                     ProtocolError, SandboxSpawnError, TransportError,
                     UnscriptedRequest)
from .parsing import (JudgementRecord, Verdict, parse_response, read_judgements,
                      write_judgements)
from .prompting import PromptMode, render_prompt
from .sandbox import SandboxConfig
from .util import map_bounded, read_jsonl

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFRASTRUCTURE = 2


@dataclass
class RunConfig:
    corpus_paths: dict = field(default_factory=dict)
    endpoints: dict[str, ModelEndpoint] = field(default_factory=dict)
    judges: list[str] = field(default_factory=list)
    modes: list[PromptMode] = field(default_factory=lambda: list(PromptMode))
    augmentation_endpoint: str | None = None
    augmentation_cache: str | None = None
    evaluator_endpoint: str | None = None
    filter_max_rounds: int = 2
    per_test_timeout: float = 5.0
    float_tolerance: float = 1e-6
    sandbox_shim: str | None = None
    sandbox_workers: int = 4
    completion_cache: str | None = None
    request_concurrency: int = 4
    strict: bool = False
    seed: int | None = None
    label_map: str | None = None

    @classmethod
    def load(cls, path: str | None, base_dir: Path | None = None) -> "RunConfig":
        config = cls()
        if path is None:
            return config
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        root = Path(path).parent if base_dir is None else base_dir

        def resolve(p):
            return str((root / p) if not Path(p).is_absolute() else Path(p))

        config.corpus_paths = {k: resolve(v) for k, v in data.get("corpus", {}).items()}
        for spec in data.get("endpoints", []):
            endpoint = ModelEndpoint(
                name=spec["name"], base_url=spec.get("base_url", ""),
                auth_env=spec.get("auth_env", ""),
                temperature=spec.get("temperature", 0.0),
                timeout=spec.get("timeout", 60.0),
                max_retries=spec.get("max_retries", 3),
                max_concurrency=spec.get("max_concurrency", 4))
            config.endpoints[endpoint.name] = endpoint
        config.judges = data.get("judges", list(config.endpoints))
        if "modes" in data:
            config.modes = [PromptMode(m) for m in data["modes"]]
        aug = data.get("augmentation", {})
        config.augmentation_endpoint = aug.get("endpoint")
        config.augmentation_cache = resolve(aug["cache_dir"]) if aug.get("cache_dir") else None
        config.evaluator_endpoint = data.get("evaluator", {}).get("endpoint")
        filt = data.get("filter", {})
        config.filter_max_rounds = filt.get("max_rounds", 2)
        config.float_tolerance = filt.get("float_tolerance", 1e-6)
        sandbox = data.get("sandbox", {})
        config.per_test_timeout = sandbox.get("per_test_timeout",
                                              filt.get("per_test_timeout", 5.0))
        config.sandbox_shim = resolve(sandbox["shim_path"]) if sandbox.get("shim_path") else None
        config.sandbox_workers = sandbox.get("max_workers", 4)
        config.completion_cache = resolve(data["completion_cache"]) \
            if data.get("completion_cache") else None
        config.request_concurrency = data.get("concurrency", 4)
        if data.get("label_map"):
            config.label_map = resolve(data["label_map"])
        if not config.modes:
            raise ValueError("config selects no prompt modes")
        return config

    def sandbox_config(self) -> SandboxConfig:
        return SandboxConfig(
            shim_path=Path(self.sandbox_shim) if self.sandbox_shim else None,
            per_test_timeout=self.per_test_timeout,
            float_tolerance=self.float_tolerance,
            max_workers=self.sandbox_workers)

    def filter_config(self) -> filtering_mod.FilterConfig:
        return filtering_mod.FilterConfig(
            max_rounds=self.filter_max_rounds,
            per_test_timeout=self.per_test_timeout,
            float_tolerance=self.float_tolerance,
            augmentation_cache=self.augmentation_cache)


class MockScript:
    """One JSON file scripting every backend role for offline runs."""

    ROLES = ("judge", "rejudge", "augment", "a1", "a2", "fn_reason")

    def __init__(self, sections: dict[str, dict[str, str]]):
        self.sections = sections

    @classmethod
    def load(cls, path: str) -> "MockScript":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls({role: data.get(role, {}) for role in cls.ROLES})

    def backend(self, role: str, name: str) -> MockBackend:
        return MockBackend(name, self.sections.get(role, {}))


def _backend_for(config: RunConfig, name: str, mock: MockScript | None, role: str):
    if mock is not None:
        return mock.backend(role, name)
    endpoint = config.endpoints.get(name)
    if endpoint is None:
        raise AuthError(f"endpoint {name!r} is not configured")
    backend = HttpBackend(endpoint)
    backend._resolve_auth()  # fail fast, before any work
    return backend


def _load_label_map(config: RunConfig) -> corpus_mod.LabelMap:
    if config.label_map:
        return corpus_mod.LabelMap.load(config.label_map)
    return corpus_mod.LabelMap.default()


def _read_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _read_records(path: str) -> list[dict]:
    if path.endswith(".jsonl"):
        return [record for _, record in read_jsonl(path)]
    data = _read_json(path)
    if not isinstance(data, list):
        raise MalformedRecord(1, f"{path}: expected a JSON array")
    return data


def cmd_ingest(args, config: RunConfig) -> int:
    paths = config.corpus_paths
    label_map = _load_label_map(config)
    pairs: list[corpus_mod.PairedTask] = []
    strict = args.strict or config.strict
    if "humaneval" in paths:
        pairs += corpus_mod.ingest_humaneval_pack(
            _read_records(paths["humaneval"]), label_map, strict_symptoms=strict)
    if "mbpp_canonical" in paths and "mbpp_buggy" in paths:
        pairs += corpus_mod.ingest_mbpp_pairs(
            _read_records(paths["mbpp_canonical"]), _read_records(paths["mbpp_buggy"]),
            label_map, strict_symptoms=strict)
    if "quixbugs_correct" in paths:
        pairs += corpus_mod.ingest_quixbugs(
            _read_records(paths["quixbugs_correct"]),
            _read_records(paths["quixbugs_defective"]),
            _read_json(paths["quixbugs_annotations"]),
            label_map, strict_symptoms=strict)
    if not pairs:
        print("no corpus sources configured", file=sys.stderr)
        return EXIT_INFRASTRUCTURE

    pairs.sort(key=lambda p: (p.benchmark.value, p.task_id))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_mod.write_corpus(pairs, out / "corpus.jsonl")
    report = corpus_mod.validate_corpus(pairs)
    (out / "validation.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"ingested {report.task_count} tasks ({report.instance_count} instances), "
          f"{len(report.issues)} validation issue(s)")
    for issue in report.issues:
        print(f"  {issue.kind}: {issue.task_id}: {issue.message}")
    if strict and not report.ok:
        return EXIT_VALIDATION
    return EXIT_OK


def _instances(pairs) -> list[corpus_mod.TaskInstance]:
    out = []
    for pair in pairs:
        out.extend(pair.instances())
    return out


def cmd_judge(args, config: RunConfig) -> int:
    out = Path(args.out)
    pairs = corpus_mod.read_corpus(args.corpus or out / "corpus.jsonl")
    mock = MockScript.load(args.mock) if args.mock else None
    existing_path = out / "judgements.jsonl"
    existing: dict[str, JudgementRecord] = {}
    if existing_path.exists():
        existing = {r.key: r for r in read_judgements(existing_path)}

    jobs = []
    for instance in sorted(_instances(pairs), key=lambda i: i.key):
        for model in config.judges:
            for mode in config.modes:
                jobs.append((instance, model, mode))

    backends = {name: _backend_for(config, name, mock, "judge") for name in config.judges}

    def run(job):
        instance, model, mode = job
        key = "|".join([instance.benchmark.value, instance.task_id,
                        instance.variant.value, model, mode.value])
        prompt = render_prompt(mode, instance)
        expected_hash = request_hash(model, prompt)
        if key in existing and existing[key].request_hash == expected_hash:
            return existing[key]
        completion = complete(
            backends[model], prompt, cache_dir=config.completion_cache,
            script_keys=[
                f"{instance.task_id}|{instance.variant.value}|{mode.value}",
                f"{instance.task_id}|{instance.variant.value}",
                f"{instance.task_id}",
            ])
        return parse_response(instance, model, mode, completion.raw_text,
                              prompt.template_version, completion.request_hash)

    records = map_bounded(run, jobs, config.request_concurrency)
    records.sort(key=lambda r: r.key)
    write_judgements(records, existing_path)
    unparseable = sum(1 for r in records if not r.verdict.is_binary)
    print(f"judged {len(records)} records ({unparseable} unparseable)")
    return EXIT_OK


def cmd_filter(args, config: RunConfig) -> int:
    out = Path(args.out)
    pairs = corpus_mod.read_corpus(args.corpus or out / "corpus.jsonl")
    instances = {i.key: i for i in _instances(pairs)}
    records = read_judgements(args.judgements or out / "judgements.jsonl")
    mock = MockScript.load(args.mock) if args.mock else None

    filter_config = config.filter_config()
    sandbox_config = config.sandbox_config()

    judge_backends: dict[str, object] = {}
    augment_backend = None
    if config.augmentation_endpoint or mock is not None:
        augment_name = config.augmentation_endpoint or "augmenter"
        augment_backend = _backend_for(config, augment_name, mock, "augment")

    def run(record: JudgementRecord) -> filtering_mod.FilterOutcome:
        instance_key = "|".join([record.benchmark.value, record.task_id,
                                 record.variant.value])
        instance = instances.get(instance_key)
        if instance is None:
            raise MalformedRecord(0, f"judgement {record.key} has no corpus instance")
        if record.model not in judge_backends:
            judge_backends[record.model] = _backend_for(config, record.model, mock, "rejudge")
        return filtering_mod.apply_filter(
            record, instance, filter_config, sandbox_config,
            judge_backend=judge_backends[record.model],
            augment_backend=augment_backend)

    outcomes = map_bounded(run, records, config.sandbox_workers)
    outcomes.sort(key=lambda o: o.key)
    filtering_mod.write_outcomes(outcomes, out / "filter_outcomes.jsonl")
    triggered = sum(1 for o in outcomes if o.triggered)
    flipped = sum(1 for o in outcomes if o.triggered and o.final_verdict is Verdict.YES)
    print(f"filtered {len(outcomes)} records: {triggered} triggered, {flipped} flipped to YES")
    return EXIT_OK


def cmd_audit(args, config: RunConfig) -> int:
    out = Path(args.out)
    pairs = corpus_mod.read_corpus(args.corpus or out / "corpus.jsonl")
    instances = {i.key: i for i in _instances(pairs)}
    records = read_judgements(args.judgements or out / "judgements.jsonl")
    mock = MockScript.load(args.mock) if args.mock else None
    evaluator_name = config.evaluator_endpoint or "evaluator"

    rationale_records = [r for r in records if r.mode.wants_rationale and r.rationale]
    if not rationale_records:
        print("note: no rationale-bearing records; A1/A2/taxonomy outputs are empty")

    def a1_run(record):
        backend = _backend_for(config, evaluator_name, mock, "a1")
        return audit_mod.audit_self_consistency(record, backend)

    a1_records = map_bounded(a1_run, rationale_records, config.request_concurrency)

    a2_inputs = []
    for record in rationale_records:
        instance = instances.get("|".join([record.benchmark.value, record.task_id,
                                           record.variant.value]))
        if instance is not None and instance.variant is corpus_mod.Variant.BUGGY \
                and instance.bug_type is not None and instance.failure_symptoms is not None:
            a2_inputs.append((record, instance))

    def a2_run(pair):
        record, instance = pair
        backend = _backend_for(config, evaluator_name, mock, "a2")
        return audit_mod.audit_fault_awareness(record, instance, backend)

    a2_records = map_bounded(a2_run, a2_inputs, config.request_concurrency)

    fn_inputs = [r for r in rationale_records
                 if r.label == 1 and r.verdict is Verdict.NO]

    def fn_run(record):
        backend = _backend_for(config, evaluator_name, mock, "fn_reason")
        return audit_mod.classify_fn_reason(record, backend)

    fn_records = map_bounded(fn_run, fn_inputs, config.request_concurrency)

    audit_mod.write_a1(sorted(a1_records, key=lambda r: (r.benchmark, r.task_id, r.variant, r.model, r.mode)),
                       out / "audit_a1.jsonl")
    audit_mod.write_a2(sorted(a2_records, key=lambda r: (r.benchmark, r.task_id, r.variant, r.model, r.mode)),
                       out / "audit_a2.jsonl")
    audit_mod.write_fn_reasons(sorted(fn_records, key=lambda r: (r.benchmark, r.task_id, r.variant, r.model, r.mode)),
                               out / "fn_reasons.jsonl")
    print(f"audited: {len(a1_records)} A1, {len(a2_records)} A2, {len(fn_records)} taxonomy")
    return EXIT_OK


def cmd_report(args, config: RunConfig) -> int:
    out = Path(args.out)
    judgement_path = out / "judgements.jsonl"
    summaries: list[metrics_mod.RateSummary] = []
    flips = None
    if judgement_path.exists():
        records = read_judgements(judgement_path)
        summaries += metrics_mod.summarize(records, metrics_mod.STAGE_PRE)
        flips = metrics_mod.flip_analysis(records)
        outcome_path = out / "filter_outcomes.jsonl"
        if outcome_path.exists():
            outcomes = filtering_mod.read_outcomes(outcome_path)
            overlaid = metrics_mod.apply_overlay(records, outcomes)
            summaries += metrics_mod.summarize(overlaid, metrics_mod.STAGE_POST)

    audit_summary = None
    a1_path, a2_path, fn_path = (out / "audit_a1.jsonl", out / "audit_a2.jsonl",
                                 out / "fn_reasons.jsonl")
    if a1_path.exists() or a2_path.exists() or fn_path.exists():
        audit_summary = audit_mod.aggregate_audits(
            audit_mod.read_a1(a1_path) if a1_path.exists() else [],
            audit_mod.read_a2(a2_path) if a2_path.exists() else [],
            audit_mod.read_fn_reasons(fn_path) if fn_path.exists() else [])

    markdown = report_mod.build_report(
        out, summaries=summaries, flips=flips, audit_summary=audit_summary,
        timestamp=not args.no_timestamp, emit_long_csv=args.long_csv)
    written = [markdown]
    if not args.no_figures:
        written += figures_mod.render_figures(out, summaries=summaries,
                                              audit_summary=audit_summary)
    print(f"report written: {markdown}")
    for path in written[1:]:
        print(f"  figure: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="judgekit",
        description="Requirement-conformance judging pipeline with execution-backed "
                    "verification filtering and rationale audits")
    parser.add_argument("--config", help="run configuration JSON")
    parser.add_argument("--out", default="out", help="output directory for stage files")
    parser.add_argument("--mock", help="mock script JSON for offline runs")
    parser.add_argument("--strict", action="store_true",
                        help="fail (exit 1) on corpus validation issues")
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed for any sampling steps")
    parser.add_argument("--no-timestamp", action="store_true",
                        help="omit the generated-at header line (golden tests)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="build the unified corpus from raw benchmark files")

    judge = sub.add_parser("judge", help="render prompts and collect model verdicts")
    judge.add_argument("--corpus", help="corpus record file (default <out>/corpus.jsonl)")

    filt = sub.add_parser("filter", help="run the fix-guided verification filter")
    filt.add_argument("--corpus")
    filt.add_argument("--judgements")

    audit = sub.add_parser("audit", help="run rationale reliability audits")
    audit.add_argument("--corpus")
    audit.add_argument("--judgements")

    report = sub.add_parser("report", help="emit the CSV/markdown/figure bundle")
    report.add_argument("--long-csv", action="store_true",
                        help="also emit plot-ready long-format CSV")
    report.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")
    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "judge": cmd_judge,
    "filter": cmd_filter,
    "audit": cmd_audit,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.load(args.config)
        config.strict = args.strict or config.strict
        config.seed = args.seed
        return _COMMANDS[args.command](args, config)
    except (AuthError, TransportError, UnscriptedRequest, SandboxSpawnError,
            ProtocolError, AugmentationEmpty) as exc:
        print(f"infrastructure failure: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    except (MalformedRecord, JudgekitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE


if __name__ == "__main__":
    sys.exit(main())
