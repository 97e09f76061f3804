"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from pathlib import Path

import pytest

from judgekit.cli import main
from judgekit.client import MockBackend
from judgekit.corpus import write_corpus
from judgekit.filtering import (FilterCase, FilterConfig, FilterEvidence, FilterOutcome,
                                apply_filter)
from judgekit.metrics import (ConfusionCounts, STAGE_POST, STAGE_PRE, apply_overlay,
                              rates, score, summarize)
from judgekit.parsing import Verdict, write_judgements
from judgekit.prompting import PromptMode
from judgekit.sandbox import run_tests
from judgekit.util import round1

from conftest import (FIXTURES, build_mock_script, full_no_response, load_jsonl,
                      make_instance, make_record, regressive_fix)
from test_filtering import (AUGMENT_SCRIPT, REJUDGE_STILL_BROKEN, SQUARE, SQUARE_BAD,
                            SQUARE_POW, SQUARE_REGRESSIVE, SQUARE_STILL_BAD,
                            augment_backend, buggy_instance, canonical_instance)
from test_metrics import brute_force_tally, random_records, record_with


def report_pass(name: str, elapsed: float, budget: float):
    assert elapsed < budget, f"{name}: {elapsed:.2f}s exceeded {budget}s budget"
    print(f"\nACCEPTANCE {name}: PASS ({elapsed:.2f}s < {budget:.0f}s)")


class TestMetricOracleEquivalence:
    def test_score_and_rates_match_brute_force_on_1000_sets(self):
        start = time.monotonic()
        rng = random.Random(42)
        for _ in range(1000):
            records = random_records(rng, rng.randint(0, 50))
            counts = score(records)
            oracle = brute_force_tally(records)
            assert counts == oracle  # counts exact
            fnr, fpr = rates(counts)
            oracle_fnr = (100.0 * oracle.fn / (oracle.tp + oracle.fn)
                          if oracle.tp + oracle.fn else None)
            oracle_fpr = (100.0 * oracle.fp / (oracle.fp + oracle.tn)
                          if oracle.fp + oracle.tn else None)
            for got, expected in ((fnr, oracle_fnr), (fpr, oracle_fpr)):
                if expected is None:
                    assert got is None
                elif expected == 0.0:
                    assert got == 0.0
                else:
                    assert abs(got - expected) / abs(expected) <= 1e-9
        report_pass("metric-oracle-equivalence", time.monotonic() - start, 5.0)


class TestPaperAnchoredRateFixture:
    def test_fnr_26_2_and_73_2_on_164_canonical_instances(self):
        start = time.monotonic()
        fnr_low, _ = rates(ConfusionCounts(tp=164 - 43, fn=43))
        assert abs(float(round1(fnr_low)) - 26.2) <= 0.05
        fnr_high, _ = rates(ConfusionCounts(tp=164 - 120, fn=120))
        assert abs(float(round1(fnr_high)) - 73.2) <= 0.05
        report_pass("paper-anchored-rate-fixture", time.monotonic() - start, 1.0)


class TestFilterCaseCoverage:
    def test_four_scripted_scenarios_hit_all_cases(self, sandbox_config, tmp_path):
        start = time.monotonic()
        config = FilterConfig(max_rounds=2, per_test_timeout=1.0,
                              augmentation_cache=tmp_path / "aug")

        # Case 1: canonical judged NO with a behaviorally identical fix -> YES
        outcome1 = apply_filter(
            make_record(canonical_instance(), Verdict.NO, fix_code=SQUARE_POW),
            canonical_instance(), config, sandbox_config,
            judge_backend=MockBackend("judge-a", {}),
            augment_backend=augment_backend())
        assert outcome1.case is FilterCase.EQUIVALENT
        assert outcome1.final_verdict is Verdict.YES

        # Case 2: persistently broken fix -> exactly K=2 re-judge rounds, verdict kept
        judge = MockBackend("judge-a", {
            "rejudge|T1|buggy|round1": REJUDGE_STILL_BROKEN,
            "rejudge|T1|buggy|round2": REJUDGE_STILL_BROKEN})
        outcome2 = apply_filter(
            make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE_STILL_BAD),
            buggy_instance(), config, sandbox_config,
            judge_backend=judge, augment_backend=augment_backend())
        assert outcome2.case is FilterCase.BOTH_FAIL
        assert outcome2.final_verdict is Verdict.NO
        assert outcome2.rounds_used == 2
        assert judge.calls == 2

        # Case 3: regressive fix -> YES
        outcome3 = apply_filter(
            make_record(canonical_instance(), Verdict.NO, fix_code=SQUARE_REGRESSIVE),
            canonical_instance(), config, sandbox_config,
            judge_backend=MockBackend("judge-a", {}),
            augment_backend=augment_backend())
        assert outcome3.case is FilterCase.OVER_REPAIR
        assert outcome3.final_verdict is Verdict.YES

        # Case 4: correct fix for genuinely buggy code -> NO stands
        outcome4 = apply_filter(
            make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE),
            buggy_instance(), config, sandbox_config,
            judge_backend=MockBackend("judge-a", {}),
            augment_backend=augment_backend())
        assert outcome4.case is FilterCase.REPAIR_SUCCESS
        assert outcome4.final_verdict is Verdict.NO

        report_pass("filter-case-coverage", time.monotonic() - start, 30.0)


def random_pipeline(rng: random.Random):
    """One randomized mock pipeline: records plus filter outcomes honoring the
    filter's contract (triggered only on NO-with-fix; flips only NO->YES)."""
    records = []
    outcomes = []
    for i in range(rng.randint(5, 40)):
        label = rng.randint(0, 1)
        verdict = rng.choice([Verdict.YES, Verdict.NO, Verdict.NO, Verdict.UNPARSEABLE])
        has_fix = verdict is Verdict.NO and rng.random() < 0.7
        record = record_with(label, verdict, task_id=f"T{i}", mode=PromptMode.FULL)
        if has_fix:
            record = type(record)(**{**record.__dict__, "fix_code": "def f():\n    pass\n"})
        records.append(record)
        if has_fix:
            case = rng.choice([FilterCase.EQUIVALENT, FilterCase.OVER_REPAIR,
                               FilterCase.REPAIR_SUCCESS, FilterCase.BOTH_FAIL])
            final = Verdict.YES if case in (FilterCase.EQUIVALENT, FilterCase.OVER_REPAIR) \
                else (Verdict.YES if case is FilterCase.BOTH_FAIL and rng.random() < 0.3
                      else Verdict.NO)
        else:
            case, final = FilterCase.NOT_TRIGGERED, record.verdict
        outcomes.append(FilterOutcome(
            task_id=record.task_id, benchmark=record.benchmark.value,
            variant=record.variant.value, model=record.model, mode=record.mode.value,
            triggered=has_fix, case=case, final_verdict=final,
            rounds_used=0, evidence=FilterEvidence()))
    return records, outcomes


class TestFlipDirectionality:
    def test_post_filter_rates_move_in_one_direction_only(self):
        start = time.monotonic()
        rng = random.Random(2024)
        for _ in range(100):
            records, outcomes = random_pipeline(rng)
            overlaid = apply_overlay(records, outcomes)
            pre, post = score(records), score(overlaid)
            pre_fnr, pre_fpr = rates(pre)
            post_fnr, post_fpr = rates(post)
            if pre_fnr is not None:
                assert post_fnr <= pre_fnr + 1e-12
            if pre_fpr is not None:
                assert post_fpr >= pre_fpr - 1e-12
            for before, after in zip(records, overlaid):
                if before.verdict is not after.verdict:
                    assert before.verdict is Verdict.NO  # only NO records ever change
                    assert after.verdict is Verdict.YES
        report_pass("flip-directionality", time.monotonic() - start, 60.0)


class TestTable5GoldenReport:
    def _records_and_outcomes(self, model, benchmark, canonical_total, fn_pre, fn_post,
                              buggy_total, fp_pre, fp_post):
        records, outcomes = [], []

        def add(i, label, verdict, flip_to=None):
            record = record_with(label, verdict, task_id=f"{benchmark}-{i}",
                                 mode=PromptMode.FULL, model=model)
            records.append(record)
            final = flip_to or verdict
            outcomes.append(FilterOutcome(
                task_id=record.task_id, benchmark=record.benchmark.value,
                variant=record.variant.value, model=model, mode="full",
                triggered=flip_to is not None, case=FilterCase.EQUIVALENT
                if flip_to else FilterCase.NOT_TRIGGERED,
                final_verdict=final, rounds_used=0, evidence=FilterEvidence()))

        flips_needed = fn_pre - fn_post
        for i in range(canonical_total):
            if i < fn_pre:
                add(f"c{i}", 1, Verdict.NO,
                    flip_to=Verdict.YES if i < flips_needed else None)
            else:
                add(f"c{i}", 1, Verdict.YES)
        fp_new = fp_post - fp_pre
        for i in range(buggy_total):
            if i < fp_pre:
                add(f"b{i}", 0, Verdict.YES)
            elif i < fp_pre + fp_new:
                add(f"b{i}", 0, Verdict.NO, flip_to=Verdict.YES)
            else:
                add(f"b{i}", 0, Verdict.NO)
        return records, outcomes

    def test_cmd_report_emits_the_published_delta_cells(self, tmp_path, monkeypatch):
        start = time.monotonic()
        records, outcomes = [], []
        gpt = self._records_and_outcomes("gpt-4o", "HumanEval", 164, 116, 38,
                                         164, 0, 3)
        llama = self._records_and_outcomes("llama-3.1-8b", "MBPP", 1600, 1453, 377,
                                           1600, 24, 27)
        records = gpt[0] + llama[0]
        outcomes = gpt[1] + llama[1]
        # records in the two benchmarks need matching benchmark fields
        from judgekit.corpus import Benchmark
        fixed = []
        for record in records:
            benchmark = Benchmark.HUMANEVAL if record.model == "gpt-4o" else Benchmark.MBPP
            fixed.append(type(record)(**{**record.__dict__, "benchmark": benchmark}))
        fixed_outcomes = []
        for outcome in outcomes:
            benchmark = "HumanEval" if outcome.model == "gpt-4o" else "MBPP"
            fixed_outcomes.append(type(outcome)(**{**outcome.__dict__,
                                                   "benchmark": benchmark}))

        out = tmp_path / "out"
        out.mkdir()
        write_judgements(fixed, out / "judgements.jsonl")
        from judgekit.filtering import write_outcomes
        write_outcomes(fixed_outcomes, out / "filter_outcomes.jsonl")
        assert main(["--out", str(out), "--no-timestamp", "report",
                     "--no-figures"]) == 0
        text = (out / "report" / "report.md").read_text()
        assert "23.2 ↓(47.6)" in text
        assert "23.6 ↓(67.3)" in text
        report_pass("table5-golden-report", time.monotonic() - start, 1.0)


class TestCorpusCalibration:
    def test_canonical_all_pass_and_buggy_some_fail_on_all_20_pairs(
            self, corpus20, sandbox_config):
        start = time.monotonic()
        assert len(corpus20) == 20
        for pair in corpus20:
            canonical = run_tests(pair.canonical.code, pair.canonical.entry_point,
                                  list(pair.canonical.tests), config=sandbox_config)
            assert canonical.all_pass, \
                f"{pair.task_id}: canonical failed {canonical.failing_ids()}"
            buggy = run_tests(pair.buggy.code, pair.buggy.entry_point,
                              list(pair.buggy.tests), config=sandbox_config)
            assert not buggy.all_pass, f"{pair.task_id}: buggy variant passed"
        report_pass("corpus-calibration", time.monotonic() - start, 120.0)


class TestSandboxContainment:
    def test_infinite_loop_and_crash_containment(self, sandbox_config):
        start = time.monotonic()
        from judgekit.corpus import TestCase
        tests = [TestCase.assertion("t0", "assert spin(1) == 1"),
                 TestCase.assertion("t1", "assert spin(0) == 0")]
        loop = "def spin(x):\n    while True:\n        x += 1\n"
        t0 = time.monotonic()
        result = run_tests(loop, "spin", tests[:1], config=sandbox_config)
        elapsed = time.monotonic() - t0
        assert result.per_test[0].status == "timeout"
        assert elapsed < sandbox_config.per_test_timeout + 2.0

        crash = ("def spin(x):\n"
                 "    if x == 1:\n"
                 "        raise MemoryError('synthetic')\n"
                 "    return x\n")
        result = run_tests(crash, "spin", tests, config=sandbox_config)
        assert [o.status for o in result.per_test] == ["error", "pass"]
        report_pass("sandbox-containment", time.monotonic() - start, 30.0)


def _tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestEndToEndDeterminism:
    @pytest.fixture
    def e2e_setup(self, tmp_path, corpus20):
        """A 10-task corpus drawn from all three benchmarks, plus config and mocks."""
        he = load_jsonl(FIXTURES / "humaneval.jsonl")[:6]
        mbpp_canonical = load_jsonl(FIXTURES / "mbpp_canonical.jsonl")[:2]
        mbpp_buggy = load_jsonl(FIXTURES / "mbpp_buggy.jsonl")[:2]
        quix_correct = json.loads((FIXTURES / "quixbugs_correct.json").read_text())[:2]
        quix_defective = json.loads((FIXTURES / "quixbugs_defective.json").read_text())[:2]
        quix_ann = json.loads((FIXTURES / "quixbugs_annotations.json").read_text())

        src = tmp_path / "src"
        src.mkdir()
        (src / "humaneval.jsonl").write_text(
            "\n".join(json.dumps(r) for r in he) + "\n")
        (src / "mbpp_canonical.jsonl").write_text(
            "\n".join(json.dumps(r) for r in mbpp_canonical) + "\n")
        (src / "mbpp_buggy.jsonl").write_text(
            "\n".join(json.dumps(r) for r in mbpp_buggy) + "\n")
        (src / "quixbugs_correct.json").write_text(json.dumps(quix_correct))
        (src / "quixbugs_defective.json").write_text(json.dumps(quix_defective))
        (src / "quixbugs_annotations.json").write_text(json.dumps(
            {k: v for k, v in quix_ann.items()
             if k in {r["task_id"] for r in quix_correct}}))

        aug_cache = tmp_path / "aug-cache"  # shared across runs, outside the out trees
        config = {
            "corpus": {
                "humaneval": str(src / "humaneval.jsonl"),
                "mbpp_canonical": str(src / "mbpp_canonical.jsonl"),
                "mbpp_buggy": str(src / "mbpp_buggy.jsonl"),
                "quixbugs_correct": str(src / "quixbugs_correct.json"),
                "quixbugs_defective": str(src / "quixbugs_defective.json"),
                "quixbugs_annotations": str(src / "quixbugs_annotations.json"),
            },
            "judges": ["judge-a"],
            "modes": ["direct", "direct_explain", "full"],
            "augmentation": {"endpoint": "augmenter", "cache_dir": str(aug_cache)},
            "evaluator": {"endpoint": "evaluator"},
            "filter": {"max_rounds": 2, "per_test_timeout": 1.0},
            "sandbox": {"per_test_timeout": 1.0},
            "concurrency": 2,
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config, indent=2))

        selected = {r["task_id"] for r in he} | {str(r["task_id"]) for r in mbpp_canonical} \
            | {r["task_id"] for r in quix_correct}
        pairs = [p for p in corpus20 if p.task_id in selected]
        assert len(pairs) == 10
        script = build_mock_script(pairs, case1=("HE/0",), case3=("HE/1",),
                                   case2=("sieve",))
        mock_path = tmp_path / "mock.json"
        mock_path.write_text(json.dumps(script, indent=2))
        return config_path, mock_path

    def _run_pipeline(self, config_path, mock_path, out: Path):
        for stage in (["ingest"], ["judge"], ["filter"], ["audit"]):
            code = main(["--config", str(config_path), "--out", str(out),
                         "--mock", str(mock_path), "--no-timestamp", *stage])
            assert code == 0, f"stage {stage} failed"
        assert main(["--config", str(config_path), "--out", str(out),
                     "--no-timestamp", "report", "--long-csv"]) == 0

    def test_two_runs_produce_byte_identical_output_trees(self, e2e_setup, tmp_path):
        start = time.monotonic()
        config_path, mock_path = e2e_setup
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        self._run_pipeline(config_path, mock_path, out1)
        self._run_pipeline(config_path, mock_path, out2)
        digest1, digest2 = _tree_digest(out1), _tree_digest(out2)
        assert digest1.keys() == digest2.keys()
        different = [name for name in digest1 if digest1[name] != digest2[name]]
        assert not different, f"files differ between runs: {different}"
        report_pass("end-to-end-determinism", time.monotonic() - start, 120.0)


class TestAuditAggregationFixture:
    def test_direction_share_and_taxonomy_percentages(self):
        start = time.monotonic()
        from judgekit.audit import (A1Record, ConsistencyLabel, ContradictionType,
                                    FNReason, FNReasonRecord, aggregate_audits)
        contradictions = [
            A1Record(task_id=f"T{i}", benchmark="HumanEval", variant="canonical",
                     model="judge-a", mode="full",
                     label=ConsistencyLabel.CONTRADICTION,
                     contradiction_type=ContradictionType.NO_BUT_POSITIVE
                     if i < 57 else ContradictionType.YES_BUT_NEGATIVE,
                     confidence=0.9, evidence="e")
            for i in range(61)]
        summary = aggregate_audits(contradictions, [], [])
        assert summary.directions[0].contradictions == 61
        assert summary.directions[0].no_share_pct == 93

        reasons = [FNReasonRecord(task_id=f"T{i}", benchmark="MBPP",
                                  variant="canonical", model="judge-a", mode="full",
                                  category=FNReason.LOGIC_ERROR if i < 2018
                                  else FNReason.MISREAD_SPEC)
                   for i in range(4190)]
        summary = aggregate_audits([], [], reasons)
        assert str(round1(summary.taxonomy_pct("LogicError"))) == "48.2"
        report_pass("audit-aggregation-fixture", time.monotonic() - start, 1.0)
