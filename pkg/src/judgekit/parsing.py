"""Extract a normalized verdict, rationale, and candidate fix from raw model output.

Parsing is deterministic and total: any raw text yields exactly one record.
A labeled judgment line wins over incidental Yes/No words later in the text;
outputs with no recognizable verdict token become UNPARSEABLE, which is a
value, not an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .corpus import Benchmark, TaskInstance, Variant
from .prompting import PromptMode
from .util import read_jsonl, write_jsonl


class Verdict(str, Enum):
    YES = "YES"
    NO = "NO"
    UNPARSEABLE = "UNPARSEABLE"

    @property
    def is_binary(self) -> bool:
        return self is not Verdict.UNPARSEABLE


# labeled verdict line, e.g. "Judgment: No", "1. **Verdict:** Yes"
_LABEL_RE = re.compile(
    r"^[\s>*#\-\d.)]*\**\s*(?:judgment|judgement|verdict|answer|decision)\s*\**\s*[:\-–]\s*(?P<rest>.*)$",
    re.IGNORECASE | re.MULTILINE,
)
_TOKEN_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+\-]*[ \t]*\n(.*?)```", re.DOTALL)
_EXPLANATION_LABEL_RE = re.compile(
    r"^[\s>*#\-\d.)]*\**\s*(?:explanation|rationale|reasoning)\s*\**\s*[:\-–]\s*",
    re.IGNORECASE | re.MULTILINE,
)
_FIX_LABEL_RE = re.compile(
    r"^[\s>*#\-\d.)]*\**\s*(?:fix|corrected code|correction)\s*\**\s*[:\-–]?\s*",
    re.IGNORECASE | re.MULTILINE,
)


def _strip_markup(line: str) -> str:
    return line.strip().strip("*_`").strip()


def _judgment_region(raw_text: str) -> tuple[str, int]:
    """Return (region text, end offset of the region within raw_text)."""
    match = _LABEL_RE.search(raw_text)
    if match:
        rest = match.group("rest").strip()
        if rest:
            return rest, match.end()
        # label alone on its line; the verdict token sits on the next non-empty line
        tail = raw_text[match.end():]
        for line in tail.splitlines():
            if line.strip():
                return line, match.end() + tail.find(line) + len(line)
        return "", match.end()
    for line in raw_text.splitlines():
        if line.strip():
            offset = raw_text.find(line) + len(line)
            return line, offset
    return "", 0


def parse_verdict(raw_text: str, mode: PromptMode) -> Verdict:
    """First standalone Yes/No token in the judgment region; conflicts are UNPARSEABLE."""
    region, _ = _judgment_region(raw_text)
    tokens = {t.lower() for t in _TOKEN_RE.findall(region)}
    if tokens == {"yes"}:
        return Verdict.YES
    if tokens == {"no"}:
        return Verdict.NO
    return Verdict.UNPARSEABLE


def _without_fences(text: str) -> str:
    return _FENCE_RE.sub("", text)


def parse_rationale(raw_text: str, mode: PromptMode) -> str | None:
    """The explanation region: between the verdict and the fix, trimmed but verbatim."""
    if not mode.wants_rationale:
        return None
    label = _EXPLANATION_LABEL_RE.search(raw_text)
    if label:
        region = raw_text[label.end():]
    else:
        _, end = _judgment_region(raw_text)
        region = raw_text[end:]
    fix_label = _FIX_LABEL_RE.search(region)
    if fix_label:
        region = region[:fix_label.start()]
    else:
        fence = _FENCE_RE.search(region)
        if fence and mode.wants_fix:
            region = region[:fence.start()]
    region = region.strip()
    return region or None


def parse_fix(raw_text: str, mode: PromptMode) -> tuple[str | None, list[str]]:
    """First fenced code block in the fix region, plus any anomaly flags.

    A malformed (unclosed) fence means no executable candidate: treated as absent.
    """
    if not mode.wants_fix:
        return None, []
    anomalies: list[str] = []
    fix_label = _FIX_LABEL_RE.search(raw_text)
    if fix_label:
        region = raw_text[fix_label.end():]
    else:
        _, end = _judgment_region(raw_text)
        region = raw_text[end:]
    blocks = _FENCE_RE.findall(region)
    if not blocks:
        if region.count("```") >= 1:
            anomalies.append("malformed_fix_block")
        return None, anomalies
    if len(blocks) > 1:
        anomalies.append("multiple_fix_blocks")
    body = blocks[0].strip("\n")
    if not body.strip():
        return None, anomalies
    return body, anomalies


@dataclass(frozen=True)
class JudgementRecord:
    """One model response for one instance under one prompt mode."""

    task_id: str
    benchmark: Benchmark
    variant: Variant
    label: int
    model: str
    mode: PromptMode
    verdict: Verdict
    rationale: str | None
    fix_code: str | None
    raw_text: str
    template_version: str
    request_hash: str
    anomalies: tuple[str, ...] = ()

    @property
    def key(self) -> str:
        return "|".join([self.benchmark.value, self.task_id, self.variant.value,
                         self.model, self.mode.value])

    def to_dict(self) -> dict:
        out = {
            "task_id": self.task_id,
            "benchmark": self.benchmark.value,
            "variant": self.variant.value,
            "label": self.label,
            "model": self.model,
            "mode": self.mode.value,
            "verdict": self.verdict.value,
            "raw_text": self.raw_text,
            "template_version": self.template_version,
            "request_hash": self.request_hash,
        }
        if self.rationale is not None:
            out["rationale"] = self.rationale
        if self.fix_code is not None:
            out["fix_code"] = self.fix_code
        if self.anomalies:
            out["anomalies"] = list(self.anomalies)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "JudgementRecord":
        return cls(
            task_id=d["task_id"],
            benchmark=Benchmark(d["benchmark"]),
            variant=Variant(d["variant"]),
            label=int(d["label"]),
            model=d["model"],
            mode=PromptMode(d["mode"]),
            verdict=Verdict(d["verdict"]),
            rationale=d.get("rationale"),
            fix_code=d.get("fix_code"),
            raw_text=d["raw_text"],
            template_version=d["template_version"],
            request_hash=d["request_hash"],
            anomalies=tuple(d.get("anomalies", ())),
        )


def parse_response(instance: TaskInstance, model: str, mode: PromptMode,
                   raw_text: str, template_version: str,
                   request_hash: str) -> JudgementRecord:
    """Assemble the full judgement record for one raw model output."""
    verdict = parse_verdict(raw_text, mode)
    rationale = parse_rationale(raw_text, mode)
    fix_code, anomalies = parse_fix(raw_text, mode)
    if fix_code is not None and verdict is Verdict.YES:
        anomalies = [*anomalies, "fix_with_yes"]
    return JudgementRecord(
        task_id=instance.task_id,
        benchmark=instance.benchmark,
        variant=instance.variant,
        label=instance.label,
        model=model,
        mode=mode,
        verdict=verdict,
        rationale=rationale,
        fix_code=fix_code,
        raw_text=raw_text,
        template_version=template_version,
        request_hash=request_hash,
        anomalies=tuple(anomalies),
    )


def write_judgements(records: Sequence[JudgementRecord], path: Path | str) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def read_judgements(path: Path | str) -> list[JudgementRecord]:
    return [JudgementRecord.from_dict(d) for _, d in read_jsonl(path)]
