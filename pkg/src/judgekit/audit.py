"""Rationale reliability audits driven by an external evaluator model.

Three audits run over persisted judgement records, never live alongside
judging: self-consistency of verdict vs. rationale (with directional
contradictions), fault-awareness of rationales on buggy instances against
ground-truth labels, and a twelve-category taxonomy of claimed rejection
reasons for false negatives. Evaluator outputs use a constrained line format;
parse failures degrade to `unclear` with a flag, never get dropped.
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

from .client import complete
from .corpus import TaskInstance, Variant
from .errors import EmptyField
from .parsing import JudgementRecord, Verdict
from .prompting import PromptMode, RenderedPrompt, load_template, template_version, _fill
from .util import digest, read_jsonl, write_jsonl

A1_TEMPLATE = "a1.txt"
A2_TEMPLATE = "a2.txt"
FN_REASON_TEMPLATE = "fn_reason.txt"


class ConsistencyLabel(str, Enum):
    CONSISTENT = "consistent"
    CONTRADICTION = "contradiction"
    UNCLEAR = "unclear"


class ContradictionType(str, Enum):
    NO_BUT_POSITIVE = "NO_but_positive"
    YES_BUT_NEGATIVE = "YES_but_negative"


class Alignment(str, Enum):
    MATCH = "match"
    MISMATCH = "mismatch"
    NOT_MENTIONED = "not_mentioned"
    UNCLEAR = "unclear"


class FNReason(str, Enum):
    MISREAD_SPEC = "MisreadSpec"
    ADDED_REQUIREMENT = "AddedRequirement"
    OVERTHINK_EDGE = "OverthinkEdge"
    ASSUMED_TYPE = "AssumedType"
    IMAGINED_RUNTIME = "ImaginedRuntime"
    PERFORMANCE_NITPICK = "PerformanceNitpick"
    READABILITY_NITPICK = "ReadabilityNitpick"
    PRECISION_ERROR = "PrecisionError"
    BOUNDARY_ERROR = "BoundaryError"
    LOGIC_ERROR = "LogicError"
    VAGUE_DESCRIPTION = "VagueDescription"
    OTHER = "Other"


def _record_meta(record: JudgementRecord) -> dict:
    return {
        "task_id": record.task_id,
        "benchmark": record.benchmark.value,
        "variant": record.variant.value,
        "model": record.model,
        "mode": record.mode.value,
    }


@dataclass(frozen=True)
class A1Record:
    task_id: str
    benchmark: str
    variant: str
    model: str
    mode: str
    label: ConsistencyLabel
    contradiction_type: ContradictionType | None
    confidence: float
    evidence: str
    flag: str | None = None  # e.g. parse_failure, refusal

    def to_dict(self) -> dict:
        out = {
            "task_id": self.task_id, "benchmark": self.benchmark,
            "variant": self.variant, "model": self.model, "mode": self.mode,
            "label": self.label.value,
            "confidence": self.confidence, "evidence": self.evidence,
        }
        if self.contradiction_type is not None:
            out["contradiction_type"] = self.contradiction_type.value
        if self.flag is not None:
            out["flag"] = self.flag
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "A1Record":
        return cls(task_id=d["task_id"], benchmark=d["benchmark"], variant=d["variant"],
                   model=d["model"], mode=d["mode"], label=ConsistencyLabel(d["label"]),
                   contradiction_type=ContradictionType(d["contradiction_type"])
                   if d.get("contradiction_type") else None,
                   confidence=d["confidence"], evidence=d["evidence"], flag=d.get("flag"))


@dataclass(frozen=True)
class A2Record:
    task_id: str
    benchmark: str
    variant: str
    model: str
    mode: str
    verdict: str  # judge verdict, to restrict aggregation to correct rejections
    bug_type: str
    failure_symptoms: str
    bug_type_alignment: Alignment
    symptom_alignment: Alignment
    evidence: str
    flag: str | None = None

    def to_dict(self) -> dict:
        out = {
            "task_id": self.task_id, "benchmark": self.benchmark,
            "variant": self.variant, "model": self.model, "mode": self.mode,
            "verdict": self.verdict, "bug_type": self.bug_type,
            "failure_symptoms": self.failure_symptoms,
            "bug_type_alignment": self.bug_type_alignment.value,
            "symptom_alignment": self.symptom_alignment.value,
            "evidence": self.evidence,
        }
        if self.flag is not None:
            out["flag"] = self.flag
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "A2Record":
        return cls(task_id=d["task_id"], benchmark=d["benchmark"], variant=d["variant"],
                   model=d["model"], mode=d["mode"], verdict=d["verdict"],
                   bug_type=d["bug_type"], failure_symptoms=d["failure_symptoms"],
                   bug_type_alignment=Alignment(d["bug_type_alignment"]),
                   symptom_alignment=Alignment(d["symptom_alignment"]),
                   evidence=d["evidence"], flag=d.get("flag"))


@dataclass(frozen=True)
class FNReasonRecord:
    task_id: str
    benchmark: str
    variant: str
    model: str
    mode: str
    category: FNReason
    raw_label: str | None = None  # retained when the evaluator spoke off-vocabulary

    def to_dict(self) -> dict:
        out = {
            "task_id": self.task_id, "benchmark": self.benchmark,
            "variant": self.variant, "model": self.model, "mode": self.mode,
            "category": self.category.value,
        }
        if self.raw_label is not None:
            out["raw_label"] = self.raw_label
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FNReasonRecord":
        return cls(task_id=d["task_id"], benchmark=d["benchmark"], variant=d["variant"],
                   model=d["model"], mode=d["mode"], category=FNReason(d["category"]),
                   raw_label=d.get("raw_label"))


def _evaluator_prompt(template: str, values: dict, key: str) -> RenderedPrompt:
    text = _fill(load_template(template), values)
    return RenderedPrompt(
        mode=PromptMode.FULL, text=text,
        content_hash=digest({"template": template,
                             "template_version": template_version(template),
                             "values": values}),
        template_version=template_version(template), task_id=key)


_LINE_RE = re.compile(r"^\s*(?P<key>[a-z_]+)\s*:\s*(?P<value>.*)$", re.IGNORECASE)


def _parse_block(raw_text: str) -> dict[str, str]:
    out = {}
    for line in raw_text.splitlines():
        match = _LINE_RE.match(line)
        if match:
            out.setdefault(match.group("key").lower(), match.group("value").strip())
    return out


def audit_self_consistency(record: JudgementRecord, backend) -> A1Record:
    """Check whether the rationale internally supports the stated verdict."""
    if not record.mode.wants_rationale:
        raise ValueError("A1 applies only to rationale-bearing modes")
    if not record.rationale:
        raise EmptyField(f"record {record.task_id} has no rationale")
    prompt = _evaluator_prompt(A1_TEMPLATE, {
        "verdict": record.verdict.value,
        "rationale": record.rationale,
    }, record.key)
    completion = complete(backend, prompt,
                          script_keys=[f"a1|{record.task_id}|{record.variant.value}|{record.mode.value}",
                                       f"a1|{record.task_id}|{record.variant.value}"])
    fields = _parse_block(completion.raw_text)
    meta = _record_meta(record)
    raw_label = fields.get("label", "").strip().lower()
    try:
        label = ConsistencyLabel(raw_label)
    except ValueError:
        return A1Record(**meta, label=ConsistencyLabel.UNCLEAR, contradiction_type=None,
                        confidence=0.0, evidence=completion.raw_text.strip()[:200],
                        flag="parse_failure")
    ctype = None
    if label is ConsistencyLabel.CONTRADICTION:
        raw_type = fields.get("contradiction_type", "").strip()
        normalized = {t.value.lower(): t for t in ContradictionType}.get(raw_type.lower())
        if normalized is None:
            # directional type is required for contradictions; fall back on the verdict
            normalized = (ContradictionType.NO_BUT_POSITIVE
                          if record.verdict is Verdict.NO
                          else ContradictionType.YES_BUT_NEGATIVE)
        ctype = normalized
    try:
        confidence = min(max(float(fields.get("confidence", "0")), 0.0), 1.0)
    except ValueError:
        confidence = 0.0
    return A1Record(**meta, label=label, contradiction_type=ctype,
                    confidence=confidence, evidence=fields.get("evidence", ""))


def audit_fault_awareness(record: JudgementRecord, instance: TaskInstance,
                          backend) -> A2Record:
    """Compare the rationale against ground-truth bug type and failure symptom."""
    if instance.variant is not Variant.BUGGY or instance.bug_type is None \
            or instance.failure_symptoms is None:
        raise ValueError("A2 applies only to buggy instances with both fault labels")
    if not record.rationale:
        raise EmptyField(f"record {record.task_id} has no rationale")
    prompt = _evaluator_prompt(A2_TEMPLATE, {
        "verdict": record.verdict.value,
        "rationale": record.rationale,
        "bug_type": instance.bug_type.value,
        "failure_symptoms": instance.failure_symptoms.encode(),
    }, record.key)
    completion = complete(backend, prompt,
                          script_keys=[f"a2|{record.task_id}|{record.variant.value}|{record.mode.value}",
                                       f"a2|{record.task_id}|{record.variant.value}"])
    fields = _parse_block(completion.raw_text)
    meta = _record_meta(record)

    def alignment(key: str) -> tuple[Alignment, bool]:
        raw = fields.get(key, "").strip().lower()
        try:
            return Alignment(raw), True
        except ValueError:
            return Alignment.UNCLEAR, False

    bug_alignment, ok_a = alignment("bug_type_alignment")
    sym_alignment, ok_b = alignment("symptom_alignment")
    return A2Record(**meta, verdict=record.verdict.value,
                    bug_type=instance.bug_type.value,
                    failure_symptoms=instance.failure_symptoms.encode(),
                    bug_type_alignment=bug_alignment, symptom_alignment=sym_alignment,
                    evidence=fields.get("evidence", ""),
                    flag=None if ok_a and ok_b else "parse_failure")


_CATEGORY_LOOKUP = {
    re.sub(r"[\s_\-]+", "", c.value.lower()): c for c in FNReason
}


def classify_fn_reason(record: JudgementRecord, backend) -> FNReasonRecord:
    """Map one false-negative rationale to exactly one taxonomy category."""
    if not (record.label == 1 and record.verdict is Verdict.NO):
        raise ValueError("taxonomy classification applies only to false negatives")
    if not record.rationale:
        raise EmptyField(f"record {record.task_id} has no rationale")
    # the requirement is not re-supplied here; the rationale carries the claim
    prompt = _evaluator_prompt(FN_REASON_TEMPLATE, {
        "requirement": "(not shown; classify the rationale on its own terms)",
        "rationale": record.rationale,
    }, record.key)
    completion = complete(backend, prompt,
                          script_keys=[f"fn_reason|{record.task_id}|{record.variant.value}|{record.mode.value}",
                                       f"fn_reason|{record.task_id}|{record.variant.value}"])
    fields = _parse_block(completion.raw_text)
    raw = fields.get("category", completion.raw_text.strip().splitlines()[0] if completion.raw_text.strip() else "")
    normalized = _CATEGORY_LOOKUP.get(re.sub(r"[\s_\-]+", "", raw.strip().lower()))
    meta = _record_meta(record)
    if normalized is None:
        return FNReasonRecord(**meta, category=FNReason.OTHER, raw_label=raw.strip() or None)
    return FNReasonRecord(**meta, category=normalized)


@dataclass
class A1Group:
    model: str
    benchmark: str
    mode: str
    n: int = 0
    consistent: int = 0
    contradiction: int = 0
    unclear: int = 0

    @property
    def inconsistent(self) -> int:
        # contradiction and unclear both count as unreliable explanations
        return self.contradiction + self.unclear


@dataclass
class DirectionShare:
    model: str
    contradictions: int
    no_but_positive: int
    yes_but_negative: int

    @property
    def no_share_pct(self) -> int:
        return round(100 * self.no_but_positive / self.contradictions) \
            if self.contradictions else 0

    @property
    def yes_share_pct(self) -> int:
        return round(100 * self.yes_but_negative / self.contradictions) \
            if self.contradictions else 0


@dataclass
class A2Group:
    model: str
    benchmark: str
    n: int = 0
    bug_match: int = 0
    sym_match: int = 0

    @property
    def bug_match_pct(self) -> float | None:
        return 100.0 * self.bug_match / self.n if self.n else None

    @property
    def sym_match_pct(self) -> float | None:
        return 100.0 * self.sym_match / self.n if self.n else None


@dataclass
class AuditSummary:
    a1_groups: list[A1Group] = field(default_factory=list)
    directions: list[DirectionShare] = field(default_factory=list)
    a2_groups: list[A2Group] = field(default_factory=list)
    alignment_by_bug_type: dict[str, Counter] = field(default_factory=dict)
    taxonomy: Counter = field(default_factory=Counter)
    taxonomy_by_model: dict[str, Counter] = field(default_factory=dict)
    taxonomy_total: int = 0

    def taxonomy_pct(self, category: str) -> float | None:
        if not self.taxonomy_total:
            return None
        return 100.0 * self.taxonomy[category] / self.taxonomy_total


def aggregate_audits(a1_records: Sequence[A1Record],
                     a2_records: Sequence[A2Record],
                     fn_records: Sequence[FNReasonRecord]) -> AuditSummary:
    """Distribution report: inconsistency counts, contradiction directions,
    match rates on correctly rejected buggy instances, and the FN taxonomy."""
    summary = AuditSummary()

    a1_by_group: dict[tuple[str, str, str], A1Group] = {}
    directions: dict[str, DirectionShare] = {}
    for rec in a1_records:
        if rec.mode == PromptMode.DIRECT.value:
            continue  # Direct never elicits a rationale; keep it out of A1 aggregates
        group = a1_by_group.setdefault(
            (rec.model, rec.benchmark, rec.mode),
            A1Group(model=rec.model, benchmark=rec.benchmark, mode=rec.mode))
        group.n += 1
        if rec.label is ConsistencyLabel.CONSISTENT:
            group.consistent += 1
        elif rec.label is ConsistencyLabel.CONTRADICTION:
            group.contradiction += 1
            share = directions.setdefault(rec.model, DirectionShare(rec.model, 0, 0, 0))
            share.contradictions += 1
            if rec.contradiction_type is ContradictionType.NO_BUT_POSITIVE:
                share.no_but_positive += 1
            elif rec.contradiction_type is ContradictionType.YES_BUT_NEGATIVE:
                share.yes_but_negative += 1
        else:
            group.unclear += 1
    summary.a1_groups = [a1_by_group[k] for k in sorted(a1_by_group)]
    summary.directions = [directions[k] for k in sorted(directions)]

    a2_by_group: dict[tuple[str, str], A2Group] = {}
    alignment_by_bug: dict[str, Counter] = defaultdict(Counter)
    for rec in a2_records:
        if rec.verdict != Verdict.NO.value:
            continue  # match rates are defined where the buggy code was correctly rejected
        group = a2_by_group.setdefault(
            (rec.model, rec.benchmark), A2Group(model=rec.model, benchmark=rec.benchmark))
        group.n += 1
        if rec.bug_type_alignment is Alignment.MATCH:
            group.bug_match += 1
        if rec.symptom_alignment is Alignment.MATCH:
            group.sym_match += 1
        alignment_by_bug[rec.bug_type][rec.bug_type_alignment.value] += 1
    summary.a2_groups = [a2_by_group[k] for k in sorted(a2_by_group)]
    summary.alignment_by_bug_type = dict(sorted(alignment_by_bug.items()))

    taxonomy_by_model: dict[str, Counter] = defaultdict(Counter)
    for rec in fn_records:
        summary.taxonomy[rec.category.value] += 1
        taxonomy_by_model[rec.model][rec.category.value] += 1
    summary.taxonomy_by_model = dict(sorted(taxonomy_by_model.items()))
    summary.taxonomy_total = len(fn_records)
    return summary


def write_a1(records: Sequence[A1Record], path: Path | str) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def read_a1(path: Path | str) -> list[A1Record]:
    return [A1Record.from_dict(d) for _, d in read_jsonl(path)]


def write_a2(records: Sequence[A2Record], path: Path | str) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def read_a2(path: Path | str) -> list[A2Record]:
    return [A2Record.from_dict(d) for _, d in read_jsonl(path)]


def write_fn_reasons(records: Sequence[FNReasonRecord], path: Path | str) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def read_fn_reasons(path: Path | str) -> list[FNReasonRecord]:
    return [FNReasonRecord.from_dict(d) for _, d in read_jsonl(path)]
