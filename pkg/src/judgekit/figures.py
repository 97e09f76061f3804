"""Render report figures to PNG files alongside the delimited tables.

Kept out of the core metric/report modules: the CLI's report path calls in
here. Rendering is deterministic (fixed Agg backend, sizes, and ordering) so
report trees can be compared byte-for-byte.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .audit import AuditSummary
from .metrics import RateSummary, STAGE_PRE
from .prompting import MODE_ORDER
from .report import BENCHMARK_ORDER, MODE_TITLES, pair_deltas

_SAVEFIG = {"dpi": 110, "metadata": {"Software": None}}


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in text.lower()).strip("-")


def _ordered_benchmarks(values: set[str]) -> list[str]:
    ordered = [b for b in BENCHMARK_ORDER if b in values]
    return ordered + sorted(values - set(ordered))


def fn_fp_counts(summaries: Sequence[RateSummary], out_dir: Path) -> list[Path]:
    """Absolute FN and FP counts across prompt settings, one figure per model."""
    pre = [s for s in summaries if s.stage == STAGE_PRE]
    by_model: dict[str, list[RateSummary]] = defaultdict(list)
    for s in pre:
        by_model[s.model].append(s)
    paths = []
    for model in sorted(by_model):
        rows = by_model[model]
        benchmarks = _ordered_benchmarks({s.benchmark for s in rows})
        modes = [m.value for m in MODE_ORDER if any(s.mode == m.value for s in rows)]
        if not modes:
            continue
        fig, axes = plt.subplots(1, len(benchmarks), figsize=(3.2 * len(benchmarks), 2.8),
                                 squeeze=False, sharey=False)
        lookup = {(s.benchmark, s.mode): s for s in rows}
        for ax, benchmark in zip(axes[0], benchmarks):
            xs = range(len(modes))
            fn = [lookup[(benchmark, m)].counts.fn if (benchmark, m) in lookup else 0
                  for m in modes]
            fp = [lookup[(benchmark, m)].counts.fp if (benchmark, m) in lookup else 0
                  for m in modes]
            width = 0.38
            ax.bar([x - width / 2 for x in xs], fn, width, label="FN", color="#c44e52")
            ax.bar([x + width / 2 for x in xs], fp, width, label="FP", color="#4c72b0")
            ax.set_xticks(list(xs))
            ax.set_xticklabels([MODE_TITLES.get(m, m) for m in modes],
                               rotation=20, ha="right", fontsize=7)
            ax.set_title(benchmark, fontsize=9)
        axes[0][0].set_ylabel("count")
        axes[0][0].legend(fontsize=7)
        fig.suptitle(f"FN/FP counts: {model}", fontsize=10)
        fig.tight_layout()
        path = out_dir / f"counts_{_slug(model)}.png"
        fig.savefig(path, **_SAVEFIG)
        plt.close(fig)
        paths.append(path)
    return paths


def filter_effect(summaries: Sequence[RateSummary], out_dir: Path) -> list[Path]:
    """Pre- vs post-filter FNR bars per (model, benchmark)."""
    deltas = pair_deltas(summaries)
    deltas = [d for d in deltas if d.pre.fnr is not None and d.post.fnr is not None]
    if not deltas:
        return []
    labels = [f"{d.model}\n{d.benchmark}" for d in deltas]
    xs = range(len(deltas))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(deltas)), 3.2))
    ax.bar([x - width / 2 for x in xs], [d.pre.fnr for d in deltas], width,
           label="before", color="#c44e52")
    ax.bar([x + width / 2 for x in xs], [d.post.fnr for d in deltas], width,
           label="after", color="#55a868")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("FNR (%)")
    ax.set_title("Verification filter: false-rejection before vs. after", fontsize=10)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "filter_effect.png"
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return [path]


def inconsistency_counts(summary: AuditSummary, out_dir: Path) -> list[Path]:
    if not summary.a1_groups:
        return []
    labels = [f"{g.model}\n{g.benchmark}/{g.mode}" for g in summary.a1_groups]
    values = [g.inconsistent for g in summary.a1_groups]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(labels)), 3.0))
    ax.bar(range(len(labels)), values, color="#dd8452")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=6)
    ax.set_ylabel("inconsistent rationales")
    ax.set_title("Contradiction + unclear rationale counts", fontsize=10)
    fig.tight_layout()
    path = out_dir / "a1_inconsistency.png"
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return [path]


def contradiction_directions(summary: AuditSummary, out_dir: Path) -> list[Path]:
    rows = [d for d in summary.directions if d.contradictions]
    if not rows:
        return []
    labels = [d.model for d in rows]
    no_share = [d.no_but_positive for d in rows]
    yes_share = [d.yes_but_negative for d in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.0 * len(rows)), 3.0))
    ax.bar(labels, no_share, label="NO_but_positive", color="#c44e52")
    ax.bar(labels, yes_share, bottom=no_share, label="YES_but_negative", color="#4c72b0")
    for i, d in enumerate(rows):
        ax.text(i, d.contradictions, f"{d.no_share_pct}% / n={d.contradictions}",
                ha="center", va="bottom", fontsize=7)
    ax.set_ylabel("contradictions")
    ax.set_title("Directional breakdown of contradictions", fontsize=10)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "a1_directions.png"
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return [path]


def bug_alignment(summary: AuditSummary, out_dir: Path) -> list[Path]:
    if not summary.alignment_by_bug_type:
        return []
    categories = list(summary.alignment_by_bug_type)
    kinds = ("match", "mismatch", "not_mentioned", "unclear")
    colors = {"match": "#55a868", "mismatch": "#c44e52",
              "not_mentioned": "#8172b3", "unclear": "#ccb974"}
    fig, ax = plt.subplots(figsize=(max(4.5, 1.1 * len(categories)), 3.2))
    bottoms = [0] * len(categories)
    for kind in kinds:
        values = [summary.alignment_by_bug_type[c].get(kind, 0) for c in categories]
        ax.bar(categories, values, bottom=bottoms, label=kind, color=colors[kind])
        bottoms = [b + v for b, v in zip(bottoms, values)]
    ax.set_xticks(range(len(categories)))
    ax.set_xticklabels(categories, rotation=20, ha="right", fontsize=7)
    ax.set_ylabel("rationales")
    ax.set_title("Bug-type alignment by ground-truth category", fontsize=10)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "a2_bug_alignment.png"
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return [path]


def taxonomy_histogram(summary: AuditSummary, out_dir: Path) -> list[Path]:
    if not summary.taxonomy_total:
        return []
    items = summary.taxonomy.most_common()
    labels = [c for c, _ in items]
    values = [n for _, n in items]
    fig, ax = plt.subplots(figsize=(max(4.5, 0.8 * len(labels)), 3.2))
    ax.bar(labels, values, color="#4c72b0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("false negatives")
    ax.set_title(f"Claimed rejection reasons (n={summary.taxonomy_total})", fontsize=10)
    fig.tight_layout()
    path = out_dir / "fn_reasons.png"
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
    return [path]


def render_figures(out_dir: Path | str,
                   summaries: Sequence[RateSummary] = (),
                   audit_summary: AuditSummary | None = None) -> list[Path]:
    """Render every figure that has data; returns the written paths."""
    figures_dir = Path(out_dir) / "report" / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    paths += fn_fp_counts(summaries, figures_dir)
    paths += filter_effect(summaries, figures_dir)
    if audit_summary is not None:
        paths += inconsistency_counts(audit_summary, figures_dir)
        paths += contradiction_directions(audit_summary, figures_dir)
        paths += bug_alignment(audit_summary, figures_dir)
        paths += taxonomy_histogram(audit_summary, figures_dir)
    return paths
