from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
RUNNER_SRC = REPO_ROOT / "runner" / "src"
if str(RUNNER_SRC) not in sys.path:
    sys.path.insert(0, str(RUNNER_SRC))

from judgekit.corpus import (Benchmark, TaskInstance, TestCase, Variant,  # noqa: E402
                             ingest_humaneval_pack, ingest_mbpp_pairs, ingest_quixbugs)
from judgekit.parsing import JudgementRecord, Verdict  # noqa: E402
from judgekit.prompting import PromptMode  # noqa: E402
from judgekit.sandbox import SandboxConfig  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def load_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def humaneval_records() -> list[dict]:
    return load_jsonl(FIXTURES / "humaneval.jsonl")


@pytest.fixture(scope="session")
def mbpp_sources() -> tuple[list[dict], list[dict]]:
    return (load_jsonl(FIXTURES / "mbpp_canonical.jsonl"),
            load_jsonl(FIXTURES / "mbpp_buggy.jsonl"))


@pytest.fixture(scope="session")
def quixbugs_sources() -> tuple[list[dict], list[dict], dict]:
    return (json.loads((FIXTURES / "quixbugs_correct.json").read_text()),
            json.loads((FIXTURES / "quixbugs_defective.json").read_text()),
            json.loads((FIXTURES / "quixbugs_annotations.json").read_text()))


@pytest.fixture(scope="session")
def corpus20(humaneval_records, mbpp_sources, quixbugs_sources):
    """The full 20-pair desk-scale corpus."""
    pairs = ingest_humaneval_pack(humaneval_records)
    pairs += ingest_mbpp_pairs(*mbpp_sources)
    pairs += ingest_quixbugs(*quixbugs_sources)
    return pairs


@pytest.fixture(scope="session")
def sandbox_config() -> SandboxConfig:
    return SandboxConfig(per_test_timeout=1.0, teardown_margin=2.0)


def make_instance(task_id: str = "T1", variant: Variant = Variant.CANONICAL,
                  requirement: str = "Return the square of x.",
                  code: str = "def square(x):\n    return x * x\n",
                  entry_point: str = "square",
                  tests: tuple = (),
                  benchmark: Benchmark = Benchmark.HUMANEVAL,
                  bug_type=None, failure_symptoms=None) -> TaskInstance:
    tests = tests or (TestCase.assertion("t0", f"assert {entry_point}(2) == 4"),
                      TestCase.assertion("t1", f"assert {entry_point}(3) == 9"))
    return TaskInstance(
        task_id=task_id, benchmark=benchmark, requirement=requirement,
        variant=variant, label=1 if variant is Variant.CANONICAL else 0,
        code=code, entry_point=entry_point, tests=tuple(tests),
        bug_type=bug_type, failure_symptoms=failure_symptoms)


def make_record(instance: TaskInstance, verdict: Verdict = Verdict.NO,
                model: str = "judge-a", mode: PromptMode = PromptMode.FULL,
                rationale: str | None = "The loop bound looks wrong.",
                fix_code: str | None = None,
                raw_text: str = "No") -> JudgementRecord:
    return JudgementRecord(
        task_id=instance.task_id, benchmark=instance.benchmark,
        variant=instance.variant, label=instance.label, model=model, mode=mode,
        verdict=verdict, rationale=rationale, fix_code=fix_code,
        raw_text=raw_text, template_version="v1-test", request_hash="rh-test")


def full_no_response(fix_code: str,
                     explanation: str = "The implementation deviates from the "
                                        "stated requirement.") -> str:
    return ("1. Judgment: No\n"
            f"2. Explanation: {explanation}\n"
            "3. Fix:\n```python\n" + fix_code.rstrip("\n") + "\n```\n")


FULL_YES_RESPONSE = ("1. Judgment: Yes\n"
                     "2. Explanation: The code implements exactly the stated behavior.\n"
                     "3. Fix: not needed.\n")


def regressive_fix(entry_point: str) -> str:
    return (f"def {entry_point}(*args, **kwargs):\n"
            "    raise RuntimeError('regressive fix')\n")


def assertion_sources(instance: TaskInstance, limit: int = 2) -> list[str]:
    out = []
    for test in instance.tests[:limit]:
        if test.kind == "assertion":
            out.append(test.body)
        else:
            out.append(f"assert {instance.entry_point}(*{test.input}) == ({test.expected})")
    return out


def build_mock_script(pairs, case1=(), case2=(), case3=()) -> dict:
    """Script every backend role for an offline pipeline run over `pairs`.

    case1: canonical tasks judged NO with a behaviorally identical fix.
    case2: buggy tasks judged NO with a persistently broken fix (re-judged K times).
    case3: canonical tasks judged NO with a regressive fix.
    Everything else: canonical YES, buggy NO with the correct fix.
    """
    judge: dict[str, str] = {}
    rejudge: dict[str, str] = {}
    augment: dict[str, str] = {}
    for pair in pairs:
        task = pair.task_id
        entry = pair.canonical.entry_point
        judge[f"{task}|canonical|direct"] = "Yes"
        judge[f"{task}|buggy|direct"] = "No"
        judge[f"{task}|canonical|direct_explain"] = \
            "Yes\nThe code follows the requirement as written."
        judge[f"{task}|buggy|direct_explain"] = \
            "No\nThe implementation produces results the requirement rules out."
        if task in case1:
            judge[f"{task}|canonical|full"] = full_no_response(
                pair.canonical.code + "\n# reviewed, unchanged behavior\n",
                "A subtle boundary issue seems present, corrected below.")
        elif task in case3:
            judge[f"{task}|canonical|full"] = full_no_response(
                regressive_fix(entry), "The whole approach must be rewritten.")
        else:
            judge[f"{task}|canonical|full"] = FULL_YES_RESPONSE
        if task in case2:
            broken = regressive_fix(entry)
            judge[f"{task}|buggy|full"] = full_no_response(
                broken, "The code is wrong and so is any small patch.")
            rejudge[f"rejudge|{task}|buggy|round1"] = full_no_response(
                broken, "Still wrong after seeing the failures.")
            rejudge[f"rejudge|{task}|buggy|round2"] = full_no_response(
                broken, "Remains wrong after two looks.")
        else:
            judge[f"{task}|buggy|full"] = full_no_response(pair.canonical.code)
        augment[f"augment|{task}"] = \
            "```python\n" + "\n".join(assertion_sources(pair.buggy)) + "\n```\n"
    return {
        "judge": judge,
        "rejudge": rejudge,
        "augment": augment,
        "a1": {"*": "label: consistent\ncontradiction_type: none\n"
                    "confidence: 0.9\nevidence: \"argues in the verdict's direction\""},
        "a2": {"*": "bug_type_alignment: match\nsymptom_alignment: match\n"
                    "evidence: \"names the defect\""},
        "fn_reason": {"*": "category: LogicError"},
    }
