"""Fix-guided verification filter.

A NO verdict that ships a fix is an executable counterfactual: run the
original and the fix against the benchmark tests and a spec-constrained
augmented suite, classify the runtime evidence into four cases, and decide
whether the rejection stands. Inconclusive evidence falls back to the
benchmark tests with up to K re-judge rounds conditioned on the concrete
failing tests; if still unresolved, the original verdict is kept.

Only NO verdicts can flip, and only to YES: post-filter false-rejection can
never exceed the pre-filter value on a fixed record set.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

from .client import complete
from .corpus import ORIGIN_AUGMENTED, TaskInstance, TestCase
from .errors import AugmentationEmpty, TransportError, UnscriptedRequest
from .parsing import JudgementRecord, Verdict, parse_fix, parse_verdict
from .prompting import (PromptMode, RenderedPrompt, load_template,
                        render_rejudge_prompt, template_version, _fill)
from .sandbox import (BehaviorComparison, ExecutionResult, SandboxConfig,
                      VERDICT_EQUIVALENT, assertion_names_ok, check_syntax,
                      compare_behavior, extract_probe_inputs, run_tests)
from .util import atomic_write_text, canonical_json, digest, read_jsonl, write_jsonl

import json

AUGMENT_TEMPLATE = "augment.txt"


class FilterCase(str, Enum):
    EQUIVALENT = "equivalent"
    BOTH_FAIL = "both_fail"
    OVER_REPAIR = "over_repair"
    REPAIR_SUCCESS = "repair_success"
    NOT_TRIGGERED = "not_triggered"


@dataclass
class FilterConfig:
    max_rounds: int = 2
    per_test_timeout: float = 5.0
    float_tolerance: float = 1e-6
    augmentation_cache: Path | str | None = None
    generator_name: str = "augmenter"

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass(frozen=True)
class AugmentedSuite:
    task_id: str
    tests: tuple[TestCase, ...]
    generator: str
    content_digest: str

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "tests": [t.to_dict() for t in self.tests],
            "generator": self.generator,
            "content_digest": self.content_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentedSuite":
        return cls(task_id=d["task_id"],
                   tests=tuple(TestCase.from_dict(t) for t in d["tests"]),
                   generator=d["generator"], content_digest=d["content_digest"])


@dataclass(frozen=True)
class FilterEvidence:
    orig_on_benchmark: ExecutionResult | None = None
    orig_on_augmented: ExecutionResult | None = None
    fix_on_benchmark: ExecutionResult | None = None
    fix_on_augmented: ExecutionResult | None = None
    behavior: BehaviorComparison | None = None
    probe_count: int = 0

    def to_dict(self) -> dict:
        def enc(x):
            return x.to_dict() if x is not None else None
        return {
            "orig_on_benchmark": enc(self.orig_on_benchmark),
            "orig_on_augmented": enc(self.orig_on_augmented),
            "fix_on_benchmark": enc(self.fix_on_benchmark),
            "fix_on_augmented": enc(self.fix_on_augmented),
            "behavior": enc(self.behavior),
            "probe_count": self.probe_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterEvidence":
        return cls(
            orig_on_benchmark=ExecutionResult.from_dict(d["orig_on_benchmark"])
            if d.get("orig_on_benchmark") else None,
            orig_on_augmented=ExecutionResult.from_dict(d["orig_on_augmented"])
            if d.get("orig_on_augmented") else None,
            fix_on_benchmark=ExecutionResult.from_dict(d["fix_on_benchmark"])
            if d.get("fix_on_benchmark") else None,
            fix_on_augmented=ExecutionResult.from_dict(d["fix_on_augmented"])
            if d.get("fix_on_augmented") else None,
            behavior=BehaviorComparison.from_dict(d["behavior"]) if d.get("behavior") else None,
            probe_count=d.get("probe_count", 0),
        )


@dataclass(frozen=True)
class FilterOutcome:
    task_id: str
    benchmark: str
    variant: str
    model: str
    mode: str
    triggered: bool
    case: FilterCase
    final_verdict: Verdict
    rounds_used: int
    evidence: FilterEvidence = field(default_factory=FilterEvidence)
    degraded: bool = False

    @property
    def key(self) -> str:
        return "|".join([self.benchmark, self.task_id, self.variant, self.model, self.mode])

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "benchmark": self.benchmark,
            "variant": self.variant,
            "model": self.model,
            "mode": self.mode,
            "triggered": self.triggered,
            "case": self.case.value,
            "final_verdict": self.final_verdict.value,
            "rounds_used": self.rounds_used,
            "evidence": self.evidence.to_dict(),
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterOutcome":
        return cls(
            task_id=d["task_id"], benchmark=d["benchmark"], variant=d["variant"],
            model=d["model"], mode=d["mode"], triggered=d["triggered"],
            case=FilterCase(d["case"]), final_verdict=Verdict(d["final_verdict"]),
            rounds_used=d["rounds_used"],
            evidence=FilterEvidence.from_dict(d.get("evidence", {})),
            degraded=d.get("degraded", False),
        )


def should_trigger(record: JudgementRecord) -> bool:
    """The filter runs only when the judge said NO and supplied a fix."""
    return record.verdict is Verdict.NO and bool(record.fix_code and record.fix_code.strip())


def suite_digest(instance: TaskInstance, generator: str) -> str:
    return digest({
        "task_id": instance.task_id,
        "requirement_digest": digest(instance.requirement),
        "generator": generator,
        "template_version": template_version(AUGMENT_TEMPLATE),
    })


def _extract_assertions(raw_text: str) -> list[str]:
    fenced = re.findall(r"```[a-zA-Z0-9_+\-]*[ \t]*\n(.*?)```", raw_text, re.DOTALL)
    source = "\n".join(fenced) if fenced else raw_text
    return [line.strip() for line in source.splitlines() if line.strip().startswith("assert")]


def _equality_claims(tests: Sequence[TestCase], entry_point: str) -> dict[str, str]:
    """Map argument-tuple reprs to expected-value reprs for simple equality assertions."""
    import ast
    claims: dict[str, str] = {}
    for test in tests:
        if test.kind == "io_pair" and test.input is not None:
            claims[test.input] = str(test.expected)
            continue
        if not test.body:
            continue
        try:
            tree = ast.parse(test.body)
        except SyntaxError:
            continue
        for node in ast.walk(tree):
            if not (isinstance(node, ast.Assert) and isinstance(node.test, ast.Compare)):
                continue
            cmp = node.test
            if len(cmp.ops) != 1 or not isinstance(cmp.ops[0], ast.Eq):
                continue
            call, expected = cmp.left, cmp.comparators[0]
            if not (isinstance(call, ast.Call) and isinstance(call.func, ast.Name)
                    and call.func.id == entry_point and not call.keywords):
                continue
            try:
                args = repr(tuple(ast.literal_eval(a) for a in call.args))
                value = repr(ast.literal_eval(expected))
            except (ValueError, SyntaxError):
                continue
            claims[args] = value
    return claims


def screen_assertions(assertions: Sequence[str], instance: TaskInstance) -> list[str]:
    """Keep assertions that are syntactically valid, name-clean, and do not
    contradict the benchmark tests on shared inputs."""
    benchmark_claims = _equality_claims(instance.tests, instance.entry_point)
    kept = []
    for body in assertions:
        if not check_syntax(body):
            continue
        if not assertion_names_ok(body, instance.entry_point):
            continue
        candidate = TestCase.assertion("aug", body, origin=ORIGIN_AUGMENTED)
        claims = _equality_claims([candidate], instance.entry_point)
        if any(benchmark_claims.get(args, value) != value for args, value in claims.items()):
            continue
        kept.append(body)
    return kept


def generate_augmented_tests(instance: TaskInstance, config: FilterConfig,
                             backend) -> AugmentedSuite:
    """Produce (or fetch from cache) the spec-constrained augmented assertion suite."""
    generator = getattr(backend, "name", config.generator_name)
    content = suite_digest(instance, generator)
    cache_path = None
    if config.augmentation_cache:
        cache_path = Path(config.augmentation_cache) / f"{content}.json"
        if cache_path.exists():
            return AugmentedSuite.from_dict(json.loads(cache_path.read_text("utf-8")))

    example_tests = "\n".join(
        t.body if t.kind == "assertion" else f"{instance.entry_point}(*{t.input}) == {t.expected}"
        for t in instance.tests)
    text = _fill(load_template(AUGMENT_TEMPLATE), {
        "requirement": instance.requirement,
        "entry_point": instance.entry_point,
        "example_tests": example_tests,
    })
    prompt = RenderedPrompt(mode=PromptMode.FULL, text=text,
                            content_hash=content,
                            template_version=template_version(AUGMENT_TEMPLATE),
                            task_id=instance.task_id)
    completion = complete(backend, prompt,
                          script_keys=[f"augment|{instance.task_id}", instance.task_id])
    assertions = screen_assertions(_extract_assertions(completion.raw_text), instance)
    if not assertions:
        raise AugmentationEmpty(
            f"no valid augmented assertions for {instance.task_id}")
    tests = tuple(TestCase.assertion(f"aug{i}", body, origin=ORIGIN_AUGMENTED)
                  for i, body in enumerate(assertions))
    suite = AugmentedSuite(task_id=instance.task_id, tests=tests,
                           generator=generator, content_digest=content)
    if cache_path is not None:
        atomic_write_text(cache_path, canonical_json(suite.to_dict()))
    return suite


def _union_pass(on_benchmark: ExecutionResult, on_augmented: ExecutionResult | None) -> bool:
    return on_benchmark.all_pass and (on_augmented is None or on_augmented.all_pass)


def classify_case(orig_on_benchmark: ExecutionResult,
                  orig_on_augmented: ExecutionResult | None,
                  fix_on_benchmark: ExecutionResult,
                  fix_on_augmented: ExecutionResult | None,
                  behavior: BehaviorComparison | None) -> FilterCase:
    """Deterministic case classification, precedence over-repair > repair-success >
    equivalent > both-fail; evidence is the benchmark+augmented union except for
    both-fail, which is the residual/inconclusive bucket."""
    orig_pass = _union_pass(orig_on_benchmark, orig_on_augmented)
    fix_pass = _union_pass(fix_on_benchmark, fix_on_augmented)
    if orig_pass and not fix_pass:
        return FilterCase.OVER_REPAIR
    if not orig_pass and fix_pass:
        return FilterCase.REPAIR_SUCCESS
    if orig_pass and fix_pass and behavior is not None and behavior.equivalent:
        return FilterCase.EQUIVALENT
    return FilterCase.BOTH_FAIL


_CASE_VERDICT = {
    FilterCase.EQUIVALENT: Verdict.YES,
    FilterCase.OVER_REPAIR: Verdict.YES,
    FilterCase.REPAIR_SUCCESS: Verdict.NO,
}


def _failed_tests(instance: TaskInstance, suite: Sequence[TestCase],
                  fix_on_benchmark: ExecutionResult,
                  orig_on_benchmark: ExecutionResult,
                  fix_on_augmented: ExecutionResult | None,
                  orig_on_augmented: ExecutionResult | None) -> list[TestCase]:
    """Concrete failing tests to condition the re-judge on, benchmark first."""
    by_id = {t.id: t for t in (*instance.tests, *suite)}
    for result in (fix_on_benchmark, orig_on_benchmark, fix_on_augmented, orig_on_augmented):
        if result is None:
            continue
        failing = [by_id[i] for i in result.failing_ids() if i in by_id]
        if failing:
            return failing
    return []


def apply_filter(record: JudgementRecord, instance: TaskInstance,
                 config: FilterConfig, sandbox_config: SandboxConfig,
                 judge_backend=None, augment_backend=None) -> FilterOutcome:
    """Run the verification filter for one judgement record."""
    meta = dict(task_id=record.task_id, benchmark=record.benchmark.value,
                variant=record.variant.value, model=record.model, mode=record.mode.value)
    if not should_trigger(record):
        return FilterOutcome(**meta, triggered=False, case=FilterCase.NOT_TRIGGERED,
                             final_verdict=record.verdict, rounds_used=0)

    degraded = False
    augmented: tuple[TestCase, ...] = ()
    if augment_backend is not None:
        try:
            augmented = generate_augmented_tests(instance, config, augment_backend).tests
        except (AugmentationEmpty, TransportError, UnscriptedRequest):
            degraded = True
    else:
        degraded = True

    def execute(code: str, tests: Sequence[TestCase]) -> ExecutionResult | None:
        if not tests:
            return None
        result = run_tests(code, instance.entry_point, tests,
                           timeout=config.per_test_timeout, config=sandbox_config)
        # evidence records are replay artifacts: drop the nondeterministic timing
        return dataclasses.replace(result, wall_time_ms=0.0)

    probe_inputs = extract_probe_inputs(augmented, instance.entry_point) \
        or extract_probe_inputs(instance.tests, instance.entry_point)

    orig_on_benchmark = execute(instance.code, instance.tests)
    orig_on_augmented = execute(instance.code, augmented)

    fix_code = record.fix_code or ""
    rounds_used = 0
    while True:
        fix_on_benchmark = execute(fix_code, instance.tests)
        fix_on_augmented = execute(fix_code, augmented)
        behavior = None
        if _union_pass(orig_on_benchmark, orig_on_augmented) \
                and _union_pass(fix_on_benchmark, fix_on_augmented):
            if probe_inputs:
                behavior = compare_behavior(instance.code, fix_code, instance.entry_point,
                                            probe_inputs, timeout=config.per_test_timeout,
                                            config=sandbox_config)
            else:
                # nothing probeable: treat as vacuously consistent, probe_count 0
                behavior = BehaviorComparison(verdict=VERDICT_EQUIVALENT)
        case = classify_case(orig_on_benchmark, orig_on_augmented,
                             fix_on_benchmark, fix_on_augmented, behavior)
        evidence = FilterEvidence(
            orig_on_benchmark=orig_on_benchmark, orig_on_augmented=orig_on_augmented,
            fix_on_benchmark=fix_on_benchmark, fix_on_augmented=fix_on_augmented,
            behavior=behavior, probe_count=len(probe_inputs) if behavior is not None else 0)

        if case is not FilterCase.BOTH_FAIL:
            return FilterOutcome(**meta, triggered=True, case=case,
                                 final_verdict=_CASE_VERDICT[case],
                                 rounds_used=rounds_used, evidence=evidence,
                                 degraded=degraded)

        # inconclusive: fall back to the benchmark tests alone
        if orig_on_benchmark.all_pass and not fix_on_benchmark.all_pass:
            return FilterOutcome(**meta, triggered=True, case=FilterCase.OVER_REPAIR,
                                 final_verdict=Verdict.YES, rounds_used=rounds_used,
                                 evidence=evidence, degraded=degraded)
        if not orig_on_benchmark.all_pass and fix_on_benchmark.all_pass:
            return FilterOutcome(**meta, triggered=True, case=FilterCase.REPAIR_SUCCESS,
                                 final_verdict=Verdict.NO, rounds_used=rounds_used,
                                 evidence=evidence, degraded=degraded)

        if judge_backend is None:
            # degraded mode: no live judge, keep the original verdict immediately
            return FilterOutcome(**meta, triggered=True, case=FilterCase.BOTH_FAIL,
                                 final_verdict=record.verdict, rounds_used=rounds_used,
                                 evidence=evidence, degraded=True)
        if rounds_used >= config.max_rounds:
            return FilterOutcome(**meta, triggered=True, case=FilterCase.BOTH_FAIL,
                                 final_verdict=record.verdict, rounds_used=rounds_used,
                                 evidence=evidence, degraded=degraded)

        failed = _failed_tests(instance, augmented, fix_on_benchmark, orig_on_benchmark,
                               fix_on_augmented, orig_on_augmented)
        if not failed:
            return FilterOutcome(**meta, triggered=True, case=FilterCase.BOTH_FAIL,
                                 final_verdict=record.verdict, rounds_used=rounds_used,
                                 evidence=evidence, degraded=degraded)
        rounds_used += 1
        prompt = render_rejudge_prompt(instance, fix_code, failed)
        try:
            completion = complete(
                judge_backend, prompt,
                script_keys=[
                    f"rejudge|{record.task_id}|{record.variant.value}|round{rounds_used}",
                    f"rejudge|{record.task_id}|{record.variant.value}",
                    f"{record.task_id}|{record.variant.value}|round{rounds_used}",
                ])
        except (TransportError, UnscriptedRequest):
            return FilterOutcome(**meta, triggered=True, case=FilterCase.BOTH_FAIL,
                                 final_verdict=record.verdict, rounds_used=rounds_used,
                                 evidence=evidence, degraded=True)
        verdict = parse_verdict(completion.raw_text, PromptMode.FULL)
        new_fix, _ = parse_fix(completion.raw_text, PromptMode.FULL)
        if verdict is Verdict.YES:
            # the judge withdrew the rejection in light of the runtime evidence
            return FilterOutcome(**meta, triggered=True, case=FilterCase.BOTH_FAIL,
                                 final_verdict=Verdict.YES, rounds_used=rounds_used,
                                 evidence=evidence, degraded=degraded)
        if verdict is Verdict.NO and new_fix and new_fix.strip():
            fix_code = new_fix
        # an unparseable or fixless re-judge consumed its round; loop re-evaluates
        # the previous fix and exits via the round bound


def write_outcomes(outcomes: Sequence[FilterOutcome], path: Path | str) -> None:
    write_jsonl(path, (o.to_dict() for o in outcomes))


def read_outcomes(path: Path | str) -> list[FilterOutcome]:
    return [FilterOutcome.from_dict(d) for _, d in read_jsonl(path)]
