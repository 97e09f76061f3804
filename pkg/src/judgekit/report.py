"""Report bundle: CSV tables plus a markdown summary of rates, deltas, flips, and audits.

Display values round to one decimal (half away from zero) to stay comparable
with published result tables; CSVs keep full precision. Missing inputs yield
sections marked absent, never errors.
"""

from __future__ import annotations

import csv
import io
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .audit import AuditSummary
from .metrics import (FilterDelta, FlipAnalysis, RateSummary, STAGE_POST,
                      STAGE_PRE, filter_delta)
from .prompting import MODE_ORDER
from .util import fmt1

BENCHMARK_ORDER = ("HumanEval", "MBPP", "QuixBugs")

MODE_TITLES = {
    "direct": "Direct",
    "direct_explain": "Direct + Explain",
    "full": "Full",
}


def delta_cell(delta: FilterDelta) -> str:
    """FNR cell for a post-filter row: value plus the absolute reduction in points."""
    if delta.post.fnr is None:
        return "-"
    if delta.fnr_reduction is None:
        return fmt1(delta.post.fnr)
    return f"{fmt1(delta.post.fnr)} ↓({fmt1(delta.fnr_reduction)})"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def rates_csv(summaries: Sequence[RateSummary]) -> str:
    header = ["model", "benchmark", "mode", "stage", "tp", "fn", "fp", "tn",
              "unparseable", "fnr", "fpr", "unparseable_rate"]
    rows = []
    for s in sorted(summaries, key=lambda s: (s.model, s.benchmark, s.mode, s.stage)):
        c = s.counts
        rows.append([s.model, s.benchmark, s.mode, s.stage, c.tp, c.fn, c.fp, c.tn,
                     c.unparseable,
                     "" if s.fnr is None else repr(s.fnr),
                     "" if s.fpr is None else repr(s.fpr),
                     "" if s.unparseable_rate is None else repr(s.unparseable_rate)])
    return _csv_text(header, rows)


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(x) for x in row) + " |")
    return "\n".join(lines)


def rates_markdown(summaries: Sequence[RateSummary], stage: str = STAGE_PRE) -> str:
    """Model x mode rows, benchmark-paired FPR/FNR columns."""
    staged = [s for s in summaries if s.stage == stage]
    if not staged:
        return "_No judgement records provided._"
    benchmarks = [b for b in BENCHMARK_ORDER if any(s.benchmark == b for s in staged)]
    benchmarks += sorted({s.benchmark for s in staged} - set(benchmarks))
    by_key = {(s.model, s.benchmark, s.mode): s for s in staged}
    models = sorted({s.model for s in staged})
    modes = [m.value for m in MODE_ORDER if any(s.mode == m.value for s in staged)]
    modes += sorted({s.mode for s in staged} - set(modes))

    header = ["Model", "Approach"]
    for benchmark in benchmarks:
        header += [f"{benchmark} FPR", f"{benchmark} FNR"]
    rows = []
    for model in models:
        for i, mode in enumerate(modes):
            row = [model if i == 0 else "", MODE_TITLES.get(mode, mode)]
            for benchmark in benchmarks:
                summary = by_key.get((model, benchmark, mode))
                row += ["-" if summary is None else fmt1(summary.fpr),
                        "-" if summary is None else fmt1(summary.fnr)]
            rows.append(row)
    return _md_table(header, rows)


def deltas_csv(deltas: Sequence[FilterDelta]) -> str:
    header = ["model", "benchmark", "mode", "fnr_pre", "fnr_post", "fnr_reduction",
              "fpr_pre", "fpr_post", "fpr_increase"]
    rows = []
    for d in sorted(deltas, key=lambda d: (d.model, d.benchmark, d.mode)):
        rows.append([d.model, d.benchmark, d.mode,
                     "" if d.pre.fnr is None else repr(d.pre.fnr),
                     "" if d.post.fnr is None else repr(d.post.fnr),
                     "" if d.fnr_reduction is None else repr(d.fnr_reduction),
                     "" if d.pre.fpr is None else repr(d.pre.fpr),
                     "" if d.post.fpr is None else repr(d.post.fpr),
                     "" if d.fpr_increase is None else repr(d.fpr_increase)])
    return _csv_text(header, rows)


def deltas_markdown(deltas: Sequence[FilterDelta]) -> str:
    """Before/after rows per model; the after-FNR cell carries the reduction."""
    if not deltas:
        return "_No filter outcomes provided._"
    benchmarks = [b for b in BENCHMARK_ORDER if any(d.benchmark == b for d in deltas)]
    benchmarks += sorted({d.benchmark for d in deltas} - set(benchmarks))
    models = sorted({d.model for d in deltas})
    by_key = {(d.model, d.benchmark): d for d in deltas}
    header = ["Model", "Setting"]
    for benchmark in benchmarks:
        header += [f"{benchmark} FPR", f"{benchmark} FNR"]
    rows = []
    for model in models:
        before = [model, "Full (Before)"]
        after = ["", "Full+Filter (After)"]
        for benchmark in benchmarks:
            delta = by_key.get((model, benchmark))
            if delta is None:
                before += ["-", "-"]
                after += ["-", "-"]
                continue
            before += [fmt1(delta.pre.fpr), fmt1(delta.pre.fnr)]
            after += [fmt1(delta.post.fpr), delta_cell(delta)]
        rows.append(before)
        rows.append(after)
    return _md_table(header, rows)


def pair_deltas(summaries: Sequence[RateSummary]) -> list[FilterDelta]:
    pre = {s.group: s for s in summaries if s.stage == STAGE_PRE}
    post = {s.group: s for s in summaries if s.stage == STAGE_POST}
    return [filter_delta(pre[g], post[g]) for g in sorted(pre) if g in post]


def flips_csv(analysis: FlipAnalysis) -> str:
    header = ["benchmark", "task_id", "variant", "model", "verdicts", "flip_count",
              "flips"]
    rows = []
    for t in analysis.per_task:
        verdicts = ";".join(f"{m}={v}" for m, v in t.verdicts)
        flips = ";".join(f.label for f in t.flips)
        rows.append([t.benchmark, t.task_id, t.variant, t.model, verdicts,
                     t.flip_count, flips])
    return _csv_text(header, rows)


def flips_markdown(analysis: FlipAnalysis) -> str:
    if not analysis.per_task:
        return "_No multi-mode judgement groups provided._"
    lines = [f"Tasks with at least one flip: {analysis.tasks_with_flips} "
             f"of {len(analysis.per_task)} (total flips: {analysis.total_flips})", ""]
    if analysis.histogram:
        rows = [[label, count] for label, count in sorted(analysis.histogram.items())]
        lines.append(_md_table(["Flip direction", "Count"], rows))
    return "\n".join(lines)


def audits_markdown(summary: AuditSummary) -> list[str]:
    sections = []
    if summary.a1_groups:
        rows = [[g.model, g.benchmark, MODE_TITLES.get(g.mode, g.mode), g.n,
                 g.consistent, g.contradiction, g.unclear, g.inconsistent]
                for g in summary.a1_groups]
        sections.append("### Rationale self-consistency\n\n" + _md_table(
            ["Model", "Benchmark", "Approach", "N", "Consistent", "Contradiction",
             "Unclear", "Inconsistent"], rows))
        if summary.directions:
            rows = [[d.model, d.contradictions,
                     f"{d.no_but_positive} ({d.no_share_pct}%)",
                     f"{d.yes_but_negative} ({d.yes_share_pct}%)"]
                    for d in summary.directions]
            sections.append("### Contradiction directions\n\n" + _md_table(
                ["Model", "n", "NO_but_positive", "YES_but_negative"], rows))
    else:
        sections.append("### Rationale self-consistency\n\n_No A1 audit records provided._")
    if summary.a2_groups:
        rows = [[g.model, g.benchmark, g.n, fmt1(g.bug_match_pct), fmt1(g.sym_match_pct)]
                for g in summary.a2_groups]
        sections.append("### Fault awareness on correctly rejected buggy instances\n\n"
                        + _md_table(["Model", "Benchmark", "N", "BugMatch %", "SymMatch %"],
                                    rows))
        if summary.alignment_by_bug_type:
            rows = []
            for bug_type, counts in summary.alignment_by_bug_type.items():
                total = sum(counts.values())
                rows.append([bug_type, total] + [counts.get(a, 0) for a in
                                                 ("match", "mismatch", "not_mentioned", "unclear")])
            sections.append("### Bug-type alignment by ground-truth category\n\n" + _md_table(
                ["Bug type", "N", "Match", "Mismatch", "Not mentioned", "Unclear"], rows))
    else:
        sections.append("### Fault awareness\n\n_No A2 audit records provided._")
    if summary.taxonomy_total:
        rows = []
        for category, count in summary.taxonomy.most_common():
            rows.append([category, count, fmt1(summary.taxonomy_pct(category))])
        sections.append(f"### Claimed rejection reasons for false negatives "
                        f"(n={summary.taxonomy_total})\n\n"
                        + _md_table(["Category", "Count", "Share %"], rows))
    else:
        sections.append("### Claimed rejection reasons\n\n_No taxonomy records provided._")
    return sections


def audits_csv(summary: AuditSummary) -> dict[str, str]:
    out = {}
    if summary.a1_groups:
        rows = [[g.model, g.benchmark, g.mode, g.n, g.consistent, g.contradiction,
                 g.unclear, g.inconsistent] for g in summary.a1_groups]
        out["audit_a1.csv"] = _csv_text(
            ["model", "benchmark", "mode", "n", "consistent", "contradiction",
             "unclear", "inconsistent"], rows)
        rows = [[d.model, d.contradictions, d.no_but_positive, d.yes_but_negative,
                 d.no_share_pct, d.yes_share_pct] for d in summary.directions]
        out["audit_a1_directions.csv"] = _csv_text(
            ["model", "contradictions", "no_but_positive", "yes_but_negative",
             "no_share_pct", "yes_share_pct"], rows)
    if summary.a2_groups:
        rows = [[g.model, g.benchmark, g.n,
                 "" if g.bug_match_pct is None else repr(g.bug_match_pct),
                 "" if g.sym_match_pct is None else repr(g.sym_match_pct)]
                for g in summary.a2_groups]
        out["audit_a2.csv"] = _csv_text(
            ["model", "benchmark", "n", "bug_match_pct", "sym_match_pct"], rows)
    if summary.taxonomy_total:
        rows = [[category, count,
                 repr(summary.taxonomy_pct(category))]
                for category, count in summary.taxonomy.most_common()]
        out["fn_reasons.csv"] = _csv_text(["category", "count", "share_pct"], rows)
    return out


def long_csv(summaries: Sequence[RateSummary]) -> str:
    """Plot-ready long format: one metric per row."""
    header = ["model", "benchmark", "mode", "stage", "metric", "value"]
    rows = []
    for s in sorted(summaries, key=lambda s: (s.model, s.benchmark, s.mode, s.stage)):
        c = s.counts
        for metric, value in (("tp", c.tp), ("fn", c.fn), ("fp", c.fp), ("tn", c.tn),
                              ("unparseable", c.unparseable)):
            rows.append([s.model, s.benchmark, s.mode, s.stage, metric, value])
        if s.fnr is not None:
            rows.append([s.model, s.benchmark, s.mode, s.stage, "fnr", repr(s.fnr)])
        if s.fpr is not None:
            rows.append([s.model, s.benchmark, s.mode, s.stage, "fpr", repr(s.fpr)])
    return _csv_text(header, rows)


def build_report(out_dir: Path | str,
                 summaries: Sequence[RateSummary] = (),
                 flips: FlipAnalysis | None = None,
                 audit_summary: AuditSummary | None = None,
                 timestamp: bool = True,
                 emit_long_csv: bool = False) -> Path:
    """Write the CSV/markdown bundle under out_dir/report; returns the markdown path."""
    report_dir = Path(out_dir) / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    sections = ["# Conformance judgement report"]
    if timestamp:
        sections.append(f"_Generated: {datetime.now(timezone.utc).isoformat()}_")

    sections.append("## Judgement rates (pre-filter)\n\n" + rates_markdown(summaries, STAGE_PRE))
    post = [s for s in summaries if s.stage == STAGE_POST]
    if post:
        sections.append("## Judgement rates (post-filter)\n\n" + rates_markdown(summaries, STAGE_POST))
        deltas = pair_deltas(summaries)
        sections.append("## Verification filter effect\n\n" + deltas_markdown(deltas))
        (report_dir / "filter_deltas.csv").write_text(deltas_csv(deltas), encoding="utf-8")
    else:
        sections.append("## Verification filter effect\n\n_No filter outcomes provided._")

    if flips is not None and flips.per_task:
        sections.append("## Decision flips across prompting modes\n\n" + flips_markdown(flips))
        (report_dir / "flips.csv").write_text(flips_csv(flips), encoding="utf-8")
    else:
        sections.append("## Decision flips\n\n_No multi-mode judgement records provided._")

    sections.append("## Rationale reliability audits")
    if audit_summary is not None:
        sections.extend(audits_markdown(audit_summary))
        for name, text in audits_csv(audit_summary).items():
            (report_dir / name).write_text(text, encoding="utf-8")
    else:
        sections.append("_No audit records provided._")

    if summaries:
        (report_dir / "rates.csv").write_text(rates_csv(summaries), encoding="utf-8")
        if emit_long_csv:
            (report_dir / "rates_long.csv").write_text(long_csv(summaries), encoding="utf-8")

    markdown_path = report_dir / "report.md"
    markdown_path.write_text("\n\n".join(sections) + "\n", encoding="utf-8")
    return markdown_path
