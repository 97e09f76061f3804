"""Paired canonical/buggy task corpus: ingestion, normalization, validation, JSONL IO.

Three benchmark adapters feed one unified schema. Every task contributes two
instances sharing the same requirement text: a canonical implementation
(label 1) and a buggy one (label 0) annotated with a normalized bug type and
failure symptom.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    MalformedRecord,
    MissingAnnotation,
    MissingField,
    OrphanBuggy,
    ReconstructionFailure,
    UnknownBugType,
)
from .util import canonical_json


class Benchmark(str, Enum):
    HUMANEVAL = "HumanEval"
    MBPP = "MBPP"
    QUIXBUGS = "QuixBugs"


class Variant(str, Enum):
    CANONICAL = "canonical"
    BUGGY = "buggy"


class BugType(str, Enum):
    MISSING_LOGIC = "missing_logic"
    EXCESS_LOGIC = "excess_logic"
    OPERATOR_MISUSE = "operator_misuse"
    VARIABLE_MISUSE = "variable_misuse"
    VALUE_MISUSE = "value_misuse"
    FUNCTION_MISUSE = "function_misuse"


SYMPTOM_INCORRECT_OUTPUT = "incorrect_output"
SYMPTOM_RUNTIME_ERROR = "runtime_error"
SYMPTOM_NON_TERMINATION = "non_termination"
SYMPTOM_OTHER = "other"
_SYMPTOM_KINDS = (
    SYMPTOM_INCORRECT_OUTPUT,
    SYMPTOM_RUNTIME_ERROR,
    SYMPTOM_NON_TERMINATION,
    SYMPTOM_OTHER,
)


@dataclass(frozen=True)
class FailureSymptom:
    """Observable consequence of a defect. `other` keeps its raw source label."""

    kind: str
    raw: str | None = None

    def __post_init__(self):
        if self.kind not in _SYMPTOM_KINDS:
            raise ValueError(f"unknown symptom kind: {self.kind!r}")
        if (self.kind == SYMPTOM_OTHER) != (self.raw is not None):
            raise ValueError("raw label is carried exactly when kind is 'other'")

    def encode(self) -> str:
        if self.kind == SYMPTOM_OTHER:
            return f"other:{self.raw}"
        return self.kind

    @classmethod
    def decode(cls, text: str) -> "FailureSymptom":
        if text.startswith("other:"):
            return cls(SYMPTOM_OTHER, text[len("other:"):])
        return cls(text)

    @classmethod
    def incorrect_output(cls) -> "FailureSymptom":
        return cls(SYMPTOM_INCORRECT_OUTPUT)

    @classmethod
    def runtime_error(cls) -> "FailureSymptom":
        return cls(SYMPTOM_RUNTIME_ERROR)

    @classmethod
    def non_termination(cls) -> "FailureSymptom":
        return cls(SYMPTOM_NON_TERMINATION)

    @classmethod
    def other(cls, raw: str) -> "FailureSymptom":
        return cls(SYMPTOM_OTHER, raw)


TEST_KIND_ASSERTION = "assertion"
TEST_KIND_IO_PAIR = "io_pair"
ORIGIN_BENCHMARK = "benchmark"
ORIGIN_AUGMENTED = "augmented"


@dataclass(frozen=True)
class TestCase:
    """One behavioral check: an assertion source, or an (input, expected) literal pair."""

    __test__ = False  # not a pytest class

    id: str
    kind: str
    body: str | None = None
    input: str | None = None
    expected: str | None = None
    origin: str = ORIGIN_BENCHMARK

    def __post_init__(self):
        if self.kind == TEST_KIND_ASSERTION:
            if not self.body:
                raise ValueError("assertion test requires a body")
        elif self.kind == TEST_KIND_IO_PAIR:
            if self.input is None or self.expected is None:
                raise ValueError("io_pair test requires input and expected literals")
        else:
            raise ValueError(f"unknown test kind: {self.kind!r}")

    @classmethod
    def assertion(cls, test_id: str, body: str, origin: str = ORIGIN_BENCHMARK) -> "TestCase":
        return cls(id=test_id, kind=TEST_KIND_ASSERTION, body=body, origin=origin)

    @classmethod
    def io_pair(cls, test_id: str, input_literal: str, expected: str,
                origin: str = ORIGIN_BENCHMARK) -> "TestCase":
        return cls(id=test_id, kind=TEST_KIND_IO_PAIR, input=input_literal,
                   expected=expected, origin=origin)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"id": self.id, "kind": self.kind, "origin": self.origin}
        if self.kind == TEST_KIND_ASSERTION:
            out["body"] = self.body
        else:
            out["input"] = self.input
            out["expected"] = self.expected
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestCase":
        return cls(
            id=d["id"],
            kind=d["kind"],
            body=d.get("body"),
            input=d.get("input"),
            expected=d.get("expected"),
            origin=d.get("origin", ORIGIN_BENCHMARK),
        )


@dataclass(frozen=True)
class TaskInstance:
    """One (requirement, code variant) pair; the unit of judgement."""

    task_id: str
    benchmark: Benchmark
    requirement: str
    variant: Variant
    label: int
    code: str
    entry_point: str
    tests: tuple[TestCase, ...]
    bug_type: BugType | None = None
    failure_symptoms: FailureSymptom | None = None

    @classmethod
    def canonical(cls, task_id: str, benchmark: Benchmark, requirement: str,
                  code: str, entry_point: str, tests: Sequence[TestCase]) -> "TaskInstance":
        return cls(task_id=task_id, benchmark=benchmark, requirement=requirement,
                   variant=Variant.CANONICAL, label=1, code=code,
                   entry_point=entry_point, tests=tuple(tests))

    @classmethod
    def buggy(cls, task_id: str, benchmark: Benchmark, requirement: str,
              code: str, entry_point: str, tests: Sequence[TestCase],
              bug_type: BugType | None, failure_symptoms: FailureSymptom | None) -> "TaskInstance":
        return cls(task_id=task_id, benchmark=benchmark, requirement=requirement,
                   variant=Variant.BUGGY, label=0, code=code,
                   entry_point=entry_point, tests=tuple(tests),
                   bug_type=bug_type, failure_symptoms=failure_symptoms)

    @property
    def key(self) -> str:
        return f"{self.benchmark.value}|{self.task_id}|{self.variant.value}"

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "task_id": self.task_id,
            "benchmark": self.benchmark.value,
            "requirement": self.requirement,
            "variant": self.variant.value,
            "label": self.label,
            "code": self.code,
            "entry_point": self.entry_point,
            "tests": [t.to_dict() for t in self.tests],
        }
        # absent optional fields are omitted, never emitted as empty strings
        if self.bug_type is not None:
            out["bug_type"] = self.bug_type.value
        if self.failure_symptoms is not None:
            out["failure_symptoms"] = self.failure_symptoms.encode()
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskInstance":
        return cls(
            task_id=d["task_id"],
            benchmark=Benchmark(d["benchmark"]),
            requirement=d["requirement"],
            variant=Variant(d["variant"]),
            label=int(d["label"]),
            code=d["code"],
            entry_point=d["entry_point"],
            tests=tuple(TestCase.from_dict(t) for t in d["tests"]),
            bug_type=BugType(d["bug_type"]) if "bug_type" in d and d["bug_type"] is not None else None,
            failure_symptoms=FailureSymptom.decode(d["failure_symptoms"])
            if "failure_symptoms" in d and d["failure_symptoms"] is not None else None,
        )


@dataclass(frozen=True)
class PairedTask:
    task_id: str
    requirement: str
    canonical: TaskInstance
    buggy: TaskInstance

    @property
    def benchmark(self) -> Benchmark:
        return self.canonical.benchmark

    def instances(self) -> tuple[TaskInstance, TaskInstance]:
        return (self.canonical, self.buggy)


def normalize_whitespace(text: str) -> str:
    """Collapse runs of spaces/tabs and normalize line endings for requirement equality."""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return re.sub(r"[ \t]+", " ", text).strip()


def defines_entry_point(code: str, entry_point: str) -> bool:
    try:
        tree = ast.parse(code)
    except SyntaxError:
        return False
    return any(
        isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name == entry_point
        for node in ast.walk(tree)
    )


def _normalize_label_key(raw: str) -> str:
    return re.sub(r"[\s_\-]+", " ", raw.strip().lower())


class LabelMap:
    """Editable normalization table for raw bug-type and symptom labels."""

    def __init__(self, bug_types: Mapping[str, str], symptoms: Mapping[str, str]):
        self._bug_types = {_normalize_label_key(k): BugType(v) for k, v in bug_types.items()}
        self._symptoms = {_normalize_label_key(k): v for k, v in symptoms.items()}
        for v in self._symptoms.values():
            if v not in (SYMPTOM_INCORRECT_OUTPUT, SYMPTOM_RUNTIME_ERROR, SYMPTOM_NON_TERMINATION):
                raise ValueError(f"symptom table may only target the closed kinds, got {v!r}")

    @classmethod
    def load(cls, path: Path | str) -> "LabelMap":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(data.get("bug_types", {}), data.get("symptoms", {}))

    @classmethod
    def default(cls) -> "LabelMap":
        text = resources.files(__package__).joinpath("data/label_map.json").read_text("utf-8")
        data = json.loads(text)
        return cls(data["bug_types"], data["symptoms"])

    def bug_type(self, raw: str) -> BugType:
        key = _normalize_label_key(raw)
        if key not in self._bug_types:
            raise UnknownBugType(f"bug label {raw!r} not in normalization table")
        return self._bug_types[key]

    def symptom(self, raw: str, strict: bool = False) -> FailureSymptom:
        key = _normalize_label_key(raw)
        if key in self._symptoms:
            return FailureSymptom(self._symptoms[key])
        if strict:
            raise UnknownBugType(f"symptom label {raw!r} not in normalization table")
        return FailureSymptom.other(raw)


def _require(record: Mapping, key: str, context: str) -> Any:
    value = record.get(key)
    if value is None or (isinstance(value, str) and not value.strip()):
        raise MissingField(f"{context}: missing required field {key!r}")
    return value


def _first_present(record: Mapping, keys: Sequence[str]) -> Any | None:
    for key in keys:
        value = record.get(key)
        if value is not None and (not isinstance(value, str) or value.strip()):
            return value
    return None


def _tests_from_record(record: Mapping, context: str) -> list[TestCase]:
    """Accept a `tests` list (assertions or io-pair dicts) or a `test` blob of assert lines."""
    raw = record.get("tests") or record.get("test_list")
    cases: list[TestCase] = []
    if raw:
        for i, item in enumerate(raw):
            if isinstance(item, str):
                cases.append(TestCase.assertion(f"t{i}", item))
            elif isinstance(item, Mapping):
                if item.get("kind") == TEST_KIND_IO_PAIR or ("input" in item and "expected" in item):
                    cases.append(TestCase.io_pair(item.get("id", f"t{i}"),
                                                  str(item["input"]), str(item["expected"])))
                else:
                    cases.append(TestCase.assertion(item.get("id", f"t{i}"), item["body"]))
            else:
                raise MissingField(f"{context}: unreadable test entry #{i}")
    else:
        blob = _first_present(record, ("test", "example_test"))
        if blob:
            for i, line in enumerate(l for l in blob.splitlines() if l.strip().startswith("assert")):
                cases.append(TestCase.assertion(f"t{i}", line.strip()))
    if not cases:
        raise MissingField(f"{context}: no test cases")
    return cases


def ingest_humaneval_pack(raw_records: Iterable[Mapping],
                          label_map: LabelMap | None = None,
                          strict_symptoms: bool = False) -> list[PairedTask]:
    """Build paired tasks from records carrying canonical and buggy function bodies.

    Each record supplies the task description, a shared declaration, both
    solution bodies, the entry point, fault labels, and test assertions.
    """
    label_map = label_map or LabelMap.default()
    pairs = []
    for n, record in enumerate(raw_records):
        task_id = record.get("task_id") or f"record#{n}"
        ctx = f"record {task_id}"
        requirement = _first_present(record, ("description", "docstring", "instruction", "prompt"))
        if requirement is None:
            raise MissingField(f"{ctx}: missing required field 'description'")
        declaration = _require(record, "declaration", ctx)
        canonical_body = _require(record, "canonical_solution", ctx)
        buggy_body = _require(record, "buggy_solution", ctx)
        entry_point = _require(record, "entry_point", ctx)
        raw_bug = _require(record, "bug_type", ctx)
        raw_symptom = _require(record, "failure_symptoms", ctx)
        tests = _tests_from_record(record, ctx)

        decl = declaration.rstrip("\n")
        canonical_code = f"{decl}\n{canonical_body.rstrip()}\n"
        buggy_code = f"{decl}\n{buggy_body.rstrip()}\n"
        pairs.append(PairedTask(
            task_id=task_id,
            requirement=requirement,
            canonical=TaskInstance.canonical(task_id, Benchmark.HUMANEVAL, requirement,
                                             canonical_code, entry_point, tests),
            buggy=TaskInstance.buggy(task_id, Benchmark.HUMANEVAL, requirement,
                                     buggy_code, entry_point, tests,
                                     label_map.bug_type(raw_bug),
                                     label_map.symptom(raw_symptom, strict_symptoms)),
        ))
    return pairs


def _entry_point_of(code: str) -> str | None:
    try:
        tree = ast.parse(code)
    except SyntaxError:
        return None
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return node.name
    return None


def ingest_mbpp_pairs(canonical_records: Iterable[Mapping],
                      buggy_corpus: Iterable[Mapping],
                      label_map: LabelMap | None = None,
                      strict_symptoms: bool = False) -> list[PairedTask]:
    """Join a buggy corpus onto canonical task records, reconstructing partial bodies.

    A buggy entry either ships complete `code`, or a `prefix` that replaces the
    first lines of the canonical solution; the remainder of the canonical code
    is appended so the result stays syntactically complete with the same
    signature.
    """
    label_map = label_map or LabelMap.default()
    canon_by_id = {str(r["task_id"]): r for r in canonical_records}
    pairs = []
    for entry in buggy_corpus:
        task_id = str(_require(entry, "task_id", "buggy entry"))
        ctx = f"task {task_id}"
        if task_id not in canon_by_id:
            raise OrphanBuggy(f"{ctx}: no canonical counterpart")
        canon = canon_by_id[task_id]
        requirement = _first_present(canon, ("text", "description", "prompt"))
        if requirement is None:
            raise MissingField(f"{ctx}: canonical record missing 'text'")
        canonical_code = _require(canon, "code", ctx)
        entry_point = canon.get("entry_point") or _entry_point_of(canonical_code)
        if not entry_point:
            raise MissingField(f"{ctx}: cannot determine entry point")
        tests = _tests_from_record(canon, ctx)

        if entry.get("code"):
            buggy_code = entry["code"]
        elif entry.get("prefix"):
            prefix = entry["prefix"].rstrip("\n")
            canon_lines = canonical_code.splitlines()
            resume = int(entry.get("resume_line", len(prefix.splitlines())))
            buggy_code = "\n".join([prefix, *canon_lines[resume:]]).rstrip() + "\n"
        else:
            raise MissingField(f"{ctx}: buggy entry carries neither code nor prefix")
        if not defines_entry_point(buggy_code, entry_point):
            raise ReconstructionFailure(f"{ctx}: reconstructed code does not define {entry_point!r}")

        raw_bug = _require(entry, "bug_type", ctx)
        raw_symptom = _require(entry, "failure_symptoms", ctx)
        pairs.append(PairedTask(
            task_id=task_id,
            requirement=requirement,
            canonical=TaskInstance.canonical(task_id, Benchmark.MBPP, requirement,
                                             canonical_code, entry_point, tests),
            buggy=TaskInstance.buggy(task_id, Benchmark.MBPP, requirement,
                                     buggy_code, entry_point, tests,
                                     label_map.bug_type(raw_bug),
                                     label_map.symptom(raw_symptom, strict_symptoms)),
        ))
    return pairs


def ingest_quixbugs(correct_programs: Iterable[Mapping],
                    defective_programs: Iterable[Mapping],
                    annotations: Mapping[str, Mapping],
                    label_map: LabelMap | None = None,
                    strict_symptoms: bool = False) -> list[PairedTask]:
    """Pair corrected and defective algorithm programs under one requirement.

    Annotations are consumed from a sidecar mapping; every defective program
    must have a pre-annotated bug type and failure symptom.
    """
    label_map = label_map or LabelMap.default()
    defective_by_id = {str(_require(r, "task_id", "defective entry")): r for r in defective_programs}
    pairs = []
    for record in correct_programs:
        task_id = str(_require(record, "task_id", "correct entry"))
        ctx = f"program {task_id}"
        if task_id not in defective_by_id:
            raise MissingField(f"{ctx}: no defective counterpart")
        correct_code = _require(record, "code", ctx)
        defect_code = _require(defective_by_id[task_id], "code", ctx)
        entry_point = record.get("entry_point") or _entry_point_of(correct_code)
        if not entry_point:
            raise MissingField(f"{ctx}: cannot determine entry point")
        requirement = record.get("requirement")
        if not requirement:
            try:
                fn = next(n for n in ast.walk(ast.parse(correct_code))
                          if isinstance(n, ast.FunctionDef) and n.name == entry_point)
                requirement = ast.get_docstring(fn)
            except (SyntaxError, StopIteration):
                requirement = None
        if not requirement:
            raise MissingField(f"{ctx}: no requirement text or docstring")
        tests = _tests_from_record(record, ctx)

        if task_id not in annotations:
            raise MissingAnnotation(f"{ctx}: no annotation entry")
        ann = annotations[task_id]
        raw_bug = _require(ann, "bug_type", f"{ctx} annotation")
        raw_symptom = _require(ann, "failure_symptoms", f"{ctx} annotation")
        pairs.append(PairedTask(
            task_id=task_id,
            requirement=requirement,
            canonical=TaskInstance.canonical(task_id, Benchmark.QUIXBUGS, requirement,
                                             correct_code, entry_point, tests),
            buggy=TaskInstance.buggy(task_id, Benchmark.QUIXBUGS, requirement,
                                     defect_code, entry_point, tests,
                                     label_map.bug_type(raw_bug),
                                     label_map.symptom(raw_symptom, strict_symptoms)),
        ))
    return pairs


@dataclass(frozen=True)
class ValidationIssue:
    kind: str
    task_id: str
    message: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "task_id": self.task_id, "message": self.message}


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)
    task_count: int = 0
    instance_count: int = 0

    @property
    def ok(self) -> bool:
        return not self.issues

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "task_count": self.task_count,
            "instance_count": self.instance_count,
            "issues": [i.to_dict() for i in self.issues],
        }


def validate_corpus(pairs: Sequence[PairedTask]) -> ValidationReport:
    """Report every violated pairing invariant; an empty report means well-formed."""
    report = ValidationReport(task_count=len(pairs), instance_count=2 * len(pairs))
    seen: set[tuple[str, str]] = set()
    for pair in pairs:
        tid = pair.task_id
        key = (pair.benchmark.value, tid)
        if key in seen:
            report.issues.append(ValidationIssue("DuplicateTaskId", tid, "task id appears twice"))
        seen.add(key)
        if normalize_whitespace(pair.canonical.requirement) != normalize_whitespace(pair.buggy.requirement):
            report.issues.append(ValidationIssue(
                "RequirementMismatch", tid, "variants differ in requirement text"))
        if pair.canonical.entry_point != pair.buggy.entry_point:
            report.issues.append(ValidationIssue(
                "EntryPointMismatch", tid,
                f"{pair.canonical.entry_point!r} != {pair.buggy.entry_point!r}"))
        for inst in pair.instances():
            where = f"{tid}/{inst.variant.value}"
            expected_label = 1 if inst.variant is Variant.CANONICAL else 0
            if inst.label != expected_label:
                report.issues.append(ValidationIssue(
                    "LabelVariantMismatch", tid, f"{where}: label {inst.label}"))
            if not inst.code.strip():
                report.issues.append(ValidationIssue("EmptyCode", tid, where))
            elif not defines_entry_point(inst.code, inst.entry_point):
                report.issues.append(ValidationIssue(
                    "MissingEntryPoint", tid, f"{where}: no def {inst.entry_point}"))
            if not inst.tests:
                report.issues.append(ValidationIssue("EmptyTests", tid, where))
            has_labels = inst.bug_type is not None and inst.failure_symptoms is not None
            if inst.variant is Variant.BUGGY and not has_labels:
                report.issues.append(ValidationIssue("MissingFaultLabels", tid, where))
            if inst.variant is Variant.CANONICAL and (
                    inst.bug_type is not None or inst.failure_symptoms is not None):
                report.issues.append(ValidationIssue("UnexpectedFaultLabels", tid, where))
    return report


def write_corpus(pairs: Sequence[PairedTask], path: Path | str) -> None:
    """One instance per line, canonical before buggy, in the given pair order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            for inst in pair.instances():
                fh.write(canonical_json(inst.to_dict()))
                fh.write("\n")


def read_corpus(path: Path | str) -> list[PairedTask]:
    """Rebuild pairs from an instance-per-line file; order follows first appearance."""
    groups: dict[tuple[str, str], dict[str, TaskInstance]] = {}
    first_line: dict[tuple[str, str], int] = {}
    order: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                inst = TaskInstance.from_dict(json.loads(stripped))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise MalformedRecord(line_no, f"unreadable instance ({exc})") from exc
            key = (inst.benchmark.value, inst.task_id)
            if key not in groups:
                groups[key] = {}
                first_line[key] = line_no
                order.append(key)
            if inst.variant.value in groups[key]:
                raise MalformedRecord(line_no, f"duplicate {inst.variant.value} instance for {inst.task_id}")
            groups[key][inst.variant.value] = inst
    pairs = []
    for key in order:
        group = groups[key]
        if set(group) != {"canonical", "buggy"}:
            raise MalformedRecord(first_line[key], f"unpaired instance for task {key[1]}")
        canonical = group["canonical"]
        pairs.append(PairedTask(task_id=canonical.task_id, requirement=canonical.requirement,
                                canonical=canonical, buggy=group["buggy"]))
    return pairs
