"""Confusion outcomes, FNR/FPR, decision-flip statistics, and filter deltas.

FNR (false rejection of correct code) and FPR (false acceptance of buggy code)
are computed over binary verdicts only; unparseable records are tallied
separately and excluded from both denominators, never silently dropped.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import GroupMismatch, LabelMissing
from .filtering import FilterOutcome
from .parsing import JudgementRecord, Verdict
from .prompting import MODE_ORDER, PromptMode

STAGE_PRE = "pre_filter"
STAGE_POST = "post_filter"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0
    unparseable: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn + self.unparseable

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn,
                "unparseable": self.unparseable}


def score(records: Sequence[JudgementRecord]) -> ConfusionCounts:
    """Exact confusion cells; permutation-invariant over the input records."""
    tp = fn = fp = tn = unparseable = 0
    for record in records:
        if record.label not in (0, 1):
            raise LabelMissing(f"record {record.task_id} has label {record.label!r}")
        if not record.verdict.is_binary:
            unparseable += 1
        elif record.label == 1:
            if record.verdict is Verdict.YES:
                tp += 1
            else:
                fn += 1
        else:
            if record.verdict is Verdict.YES:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fn=fn, fp=fp, tn=tn, unparseable=unparseable)


def rates(counts: ConfusionCounts) -> tuple[float | None, float | None]:
    """(FNR, FPR) as full-precision percentages; None when a denominator is zero."""
    fnr = 100.0 * counts.fn / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    fpr = 100.0 * counts.fp / (counts.fp + counts.tn) if counts.fp + counts.tn else None
    return fnr, fpr


@dataclass(frozen=True)
class RateSummary:
    model: str
    benchmark: str
    mode: str
    stage: str
    counts: ConfusionCounts

    @property
    def group(self) -> tuple[str, str, str]:
        return (self.model, self.benchmark, self.mode)

    @property
    def fnr(self) -> float | None:
        return rates(self.counts)[0]

    @property
    def fpr(self) -> float | None:
        return rates(self.counts)[1]

    @property
    def unparseable_rate(self) -> float | None:
        total = self.counts.total
        return 100.0 * self.counts.unparseable / total if total else None

    def to_dict(self) -> dict:
        return {
            "model": self.model, "benchmark": self.benchmark,
            "mode": self.mode, "stage": self.stage,
            **self.counts.to_dict(),
            "fnr": self.fnr, "fpr": self.fpr,
            "unparseable_rate": self.unparseable_rate,
        }


def summarize(records: Sequence[JudgementRecord], stage: str = STAGE_PRE) -> list[RateSummary]:
    """One RateSummary per (model, benchmark, mode) group, sorted."""
    groups: dict[tuple[str, str, str], list[JudgementRecord]] = defaultdict(list)
    for record in records:
        groups[(record.model, record.benchmark.value, record.mode.value)].append(record)
    return [RateSummary(model=m, benchmark=b, mode=md, stage=stage, counts=score(rs))
            for (m, b, md), rs in sorted(groups.items())]


def apply_overlay(records: Sequence[JudgementRecord],
                  outcomes: Iterable[FilterOutcome]) -> list[JudgementRecord]:
    """Replace verdicts with the filter's final verdicts, keyed per record.

    Only records whose outcome actually flipped the verdict change; everything
    else passes through untouched.
    """
    finals = {o.key: o.final_verdict for o in outcomes}
    overlaid = []
    for record in records:
        final = finals.get(record.key)
        if final is not None and final is not record.verdict:
            overlaid.append(replace(record, verdict=final))
        else:
            overlaid.append(record)
    return overlaid


@dataclass(frozen=True)
class Flip:
    from_mode: str
    to_mode: str
    from_verdict: str
    to_verdict: str

    @property
    def label(self) -> str:
        return f"{self.from_verdict}@{self.from_mode} -> {self.to_verdict}@{self.to_mode}"


@dataclass(frozen=True)
class TaskFlips:
    task_id: str
    benchmark: str
    variant: str
    model: str
    verdicts: tuple[tuple[str, str], ...]  # (mode, verdict) in mode order
    flips: tuple[Flip, ...]

    @property
    def flip_count(self) -> int:
        return len(self.flips)


@dataclass
class FlipAnalysis:
    per_task: list[TaskFlips] = field(default_factory=list)
    histogram: Counter = field(default_factory=Counter)

    @property
    def total_flips(self) -> int:
        return sum(t.flip_count for t in self.per_task)

    @property
    def tasks_with_flips(self) -> int:
        return sum(1 for t in self.per_task if t.flip_count)


def flip_analysis(records: Sequence[JudgementRecord]) -> FlipAnalysis:
    """Verdict vectors across prompt modes and the flip-direction histogram.

    Groups with fewer than two modes are skipped; a flip is counted between
    adjacent modes whose verdicts are both binary and differ.
    """
    groups: dict[tuple[str, str, str, str], dict[PromptMode, JudgementRecord]] = defaultdict(dict)
    for record in records:
        key = (record.benchmark.value, record.task_id, record.variant.value, record.model)
        groups[key][record.mode] = record
    analysis = FlipAnalysis()
    for (benchmark, task_id, variant, model), by_mode in sorted(
            groups.items(), key=lambda kv: kv[0]):
        modes = [m for m in MODE_ORDER if m in by_mode]
        if len(modes) < 2:
            continue
        verdicts = tuple((m.value, by_mode[m].verdict.value) for m in modes)
        flips = []
        for earlier, later in zip(modes, modes[1:]):
            v1, v2 = by_mode[earlier].verdict, by_mode[later].verdict
            if v1.is_binary and v2.is_binary and v1 is not v2:
                flips.append(Flip(from_mode=earlier.value, to_mode=later.value,
                                  from_verdict=v1.value, to_verdict=v2.value))
        task_flips = TaskFlips(task_id=task_id, benchmark=benchmark, variant=variant,
                               model=model, verdicts=verdicts, flips=tuple(flips))
        analysis.per_task.append(task_flips)
        for flip in flips:
            analysis.histogram[flip.label] += 1
    return analysis


@dataclass(frozen=True)
class FilterDelta:
    model: str
    benchmark: str
    mode: str
    pre: RateSummary
    post: RateSummary

    @property
    def fnr_reduction(self) -> float | None:
        if self.pre.fnr is None or self.post.fnr is None:
            return None
        return self.pre.fnr - self.post.fnr

    @property
    def fpr_increase(self) -> float | None:
        if self.pre.fpr is None or self.post.fpr is None:
            return None
        return self.post.fpr - self.pre.fpr


def filter_delta(pre: RateSummary, post: RateSummary) -> FilterDelta:
    """Pair a pre-filter summary with its post-filter counterpart."""
    if pre.group != post.group:
        raise GroupMismatch(f"{pre.group} vs {post.group}")
    if pre.stage != STAGE_PRE or post.stage != STAGE_POST:
        raise GroupMismatch(f"stage order must be {STAGE_PRE} -> {STAGE_POST}, "
                            f"got {pre.stage} -> {post.stage}")
    return FilterDelta(model=pre.model, benchmark=pre.benchmark, mode=pre.mode,
                       pre=pre, post=post)
