from __future__ import annotations

import pytest

from judgekit.client import MockBackend
from judgekit.corpus import BugType, FailureSymptom, TestCase, Variant
from judgekit.errors import AugmentationEmpty
from judgekit.filtering import (AugmentedSuite, FilterCase, FilterConfig, FilterOutcome,
                                apply_filter, classify_case, generate_augmented_tests,
                                read_outcomes, screen_assertions, should_trigger,
                                write_outcomes)
from judgekit.parsing import Verdict
from judgekit.sandbox import (BehaviorComparison, ExecutionResult, SandboxConfig,
                              TestOutcome, VERDICT_DIVERGENT, VERDICT_EQUIVALENT)

from conftest import make_instance, make_record

SQUARE = "def square(x):\n    return x * x\n"
SQUARE_POW = "def square(x):\n    return x ** 2\n"
SQUARE_BAD = "def square(x):\n    return x + x\n"
SQUARE_STILL_BAD = "def square(x):\n    return x + x + 0\n"
SQUARE_REGRESSIVE = "def square(x):\n    return abs(x)\n"

AUGMENT_SCRIPT = {"*": (
    "Here are additional tests:\n"
    "```python\n"
    "assert square(4) == 16\n"
    "assert square(0) == 0\n"
    "assert square(== 5\n"          # malformed, dropped
    "assert square(2) == 5\n"       # contradicts the benchmark suite, dropped
    "```\n")}

REJUDGE_STILL_BROKEN = ("1. Judgment: No\n"
                        "2. Explanation: the fix still misses the multiplication.\n"
                        "3. Fix:\n```python\n" + SQUARE_STILL_BAD + "```\n")


def canonical_instance():
    return make_instance(task_id="T1", code=SQUARE)


def buggy_instance():
    return make_instance(task_id="T1", variant=Variant.BUGGY, code=SQUARE_BAD,
                         bug_type=BugType.OPERATOR_MISUSE,
                         failure_symptoms=FailureSymptom.incorrect_output())


def augment_backend():
    return MockBackend("augmenter", AUGMENT_SCRIPT)


@pytest.fixture
def filter_config(tmp_path):
    return FilterConfig(max_rounds=2, per_test_timeout=1.0,
                        augmentation_cache=tmp_path / "aug-cache")


class TestShouldTrigger:
    def test_yes_never_triggers(self):
        record = make_record(canonical_instance(), Verdict.YES, fix_code=SQUARE_POW)
        assert not should_trigger(record)

    def test_no_without_fix_does_not_trigger(self):
        assert not should_trigger(make_record(canonical_instance(), Verdict.NO))

    def test_no_with_fix_triggers(self):
        record = make_record(canonical_instance(), Verdict.NO, fix_code=SQUARE_POW)
        assert should_trigger(record)


class TestAugmentation:
    def test_malformed_and_contradicting_assertions_dropped(self, filter_config):
        suite = generate_augmented_tests(canonical_instance(), filter_config,
                                         augment_backend())
        bodies = [t.body for t in suite.tests]
        assert bodies == ["assert square(4) == 16", "assert square(0) == 0"]
        assert all(t.origin == "augmented" for t in suite.tests)

    def test_suite_served_from_cache_without_model_calls(self, filter_config):
        backend = augment_backend()
        first = generate_augmented_tests(canonical_instance(), filter_config, backend)
        assert backend.calls == 1
        second = generate_augmented_tests(canonical_instance(), filter_config, backend)
        assert backend.calls == 1
        assert second == first
        cold_backend = augment_backend()
        third = generate_augmented_tests(canonical_instance(), filter_config, cold_backend)
        assert cold_backend.calls == 0  # warm cache: zero generation calls
        assert third == first

    def test_zero_valid_assertions_is_an_error(self, filter_config):
        backend = MockBackend("augmenter", {"*": "I cannot write tests for this."})
        with pytest.raises(AugmentationEmpty):
            generate_augmented_tests(canonical_instance(), filter_config, backend)

    def test_screening_rejects_foreign_names(self):
        kept = screen_assertions(
            ["assert square(2) == 4",
             "assert os.path.exists('x')",
             "assert square(helper(1)) == 1"],
            canonical_instance())
        assert kept == ["assert square(2) == 4"]


def result(all_pass: bool) -> ExecutionResult:
    status = "pass" if all_pass else "fail"
    return ExecutionResult.collect([TestOutcome("t0", status)], 1.0)


EQUIV = BehaviorComparison(verdict=VERDICT_EQUIVALENT)
DIVER = BehaviorComparison(verdict=VERDICT_DIVERGENT, witness=("(2,)", "4", "5"))


class TestClassifyCase:
    def test_paper_case_table(self):
        assert classify_case(result(True), result(True), result(True), result(True),
                             EQUIV) is FilterCase.EQUIVALENT
        assert classify_case(result(True), result(True), result(False), result(True),
                             None) is FilterCase.OVER_REPAIR
        assert classify_case(result(False), result(True), result(True), result(True),
                             None) is FilterCase.REPAIR_SUCCESS
        assert classify_case(result(False), result(False), result(False), result(False),
                             None) is FilterCase.BOTH_FAIL

    def test_precedence_over_repair_beats_equivalent(self):
        # orig passes everywhere, fix fails only the augmented suite
        assert classify_case(result(True), result(True), result(True), result(False),
                             EQUIV) is FilterCase.OVER_REPAIR

    def test_divergent_behavior_blocks_equivalence(self):
        assert classify_case(result(True), result(True), result(True), result(True),
                             DIVER) is FilterCase.BOTH_FAIL

    def test_empty_augmented_suite_is_vacuously_passing(self):
        assert classify_case(result(True), None, result(True), None,
                             EQUIV) is FilterCase.EQUIVALENT


class TestApplyFilterScenarios:
    """The four executable cases, realized with hand-built code pairs."""

    def test_case1_equivalent_fix_flips_to_yes(self, filter_config, sandbox_config):
        record = make_record(canonical_instance(), Verdict.NO, fix_code=SQUARE_POW)
        outcome = apply_filter(record, canonical_instance(), filter_config,
                               sandbox_config, judge_backend=MockBackend("judge-a", {}),
                               augment_backend=augment_backend())
        assert outcome.triggered
        assert outcome.case is FilterCase.EQUIVALENT
        assert outcome.final_verdict is Verdict.YES
        assert outcome.rounds_used == 0
        assert outcome.evidence.behavior.equivalent
        assert outcome.evidence.probe_count > 0

    def test_case2_persistently_broken_fix_consumes_k_rounds_keeps_no(
            self, filter_config, sandbox_config):
        judge = MockBackend("judge-a", {
            "rejudge|T1|buggy|round1": REJUDGE_STILL_BROKEN,
            "rejudge|T1|buggy|round2": REJUDGE_STILL_BROKEN,
        })
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE_STILL_BAD)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=judge, augment_backend=augment_backend())
        assert outcome.case is FilterCase.BOTH_FAIL
        assert outcome.final_verdict is Verdict.NO  # original verdict kept
        assert outcome.rounds_used == 2
        assert judge.calls == 2  # bounded work: exactly K re-judge calls

    def test_case3_regressive_fix_flips_to_yes(self, filter_config, sandbox_config):
        record = make_record(canonical_instance(), Verdict.NO,
                             fix_code=SQUARE_REGRESSIVE)
        outcome = apply_filter(record, canonical_instance(), filter_config,
                               sandbox_config, judge_backend=MockBackend("judge-a", {}),
                               augment_backend=augment_backend())
        assert outcome.case is FilterCase.OVER_REPAIR
        assert outcome.final_verdict is Verdict.YES
        assert outcome.rounds_used == 0

    def test_case4_correct_fix_keeps_no(self, filter_config, sandbox_config):
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=MockBackend("judge-a", {}),
                               augment_backend=augment_backend())
        assert outcome.case is FilterCase.REPAIR_SUCCESS
        assert outcome.final_verdict is Verdict.NO
        assert outcome.rounds_used == 0


class TestApplyFilterEdges:
    def test_not_triggered_passthrough(self, filter_config, sandbox_config):
        record = make_record(canonical_instance(), Verdict.YES)
        outcome = apply_filter(record, canonical_instance(), filter_config,
                               sandbox_config)
        assert not outcome.triggered
        assert outcome.case is FilterCase.NOT_TRIGGERED
        assert outcome.final_verdict is Verdict.YES

    def test_rejudge_concession_resolves_to_yes(self, filter_config, sandbox_config):
        judge = MockBackend("judge-a", {
            "rejudge|T1|buggy|round1": "1. Judgment: Yes\n2. Explanation: tests show "
                                       "the original meets the requirement.",
        })
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE_STILL_BAD)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=judge, augment_backend=augment_backend())
        assert outcome.final_verdict is Verdict.YES
        assert outcome.rounds_used == 1

    def test_unparseable_rejudge_consumes_rounds(self, filter_config, sandbox_config):
        judge = MockBackend("judge-a", {"*": "mumble mumble"})
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE_STILL_BAD)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=judge, augment_backend=augment_backend())
        assert outcome.final_verdict is Verdict.NO
        assert outcome.rounds_used == 2
        assert judge.calls == 2

    def test_degraded_mode_keeps_original_verdict_immediately(
            self, filter_config, sandbox_config):
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE_STILL_BAD)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=None, augment_backend=augment_backend())
        assert outcome.degraded
        assert outcome.final_verdict is Verdict.NO
        assert outcome.rounds_used == 0

    def test_missing_augmentation_degrades_but_still_decides(
            self, filter_config, sandbox_config):
        backend = MockBackend("augmenter", {"*": "no assertions here"})
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=MockBackend("judge-a", {}),
                               augment_backend=backend)
        assert outcome.degraded
        assert outcome.case is FilterCase.REPAIR_SUCCESS
        assert outcome.final_verdict is Verdict.NO

    def test_fallback_to_benchmark_tests_when_augmentation_over_extends(
            self, filter_config, sandbox_config):
        # augmented suite demands behavior the requirement never stated: both
        # implementations fail it, but the benchmark tests separate them
        backend = MockBackend("augmenter", {"*": "```python\nassert square(-1) == -1\n```"})
        record = make_record(canonical_instance(), Verdict.NO, fix_code=SQUARE_REGRESSIVE)
        outcome = apply_filter(record, canonical_instance(), filter_config,
                               sandbox_config, judge_backend=MockBackend("judge-a", {}),
                               augment_backend=backend)
        # orig passes benchmark, regressive fix fails it: over-repair on fallback
        assert outcome.case is FilterCase.OVER_REPAIR
        assert outcome.final_verdict is Verdict.YES


class TestInvariants:
    def test_no_yes_verdict_is_ever_modified(self, filter_config, sandbox_config):
        for fix in (None, SQUARE_POW):
            record = make_record(canonical_instance(), Verdict.YES, fix_code=fix)
            outcome = apply_filter(record, canonical_instance(), filter_config,
                                   sandbox_config)
            assert outcome.final_verdict is Verdict.YES
            assert not outcome.triggered

    def test_flips_carry_execution_evidence(self, filter_config, sandbox_config):
        record = make_record(canonical_instance(), Verdict.NO, fix_code=SQUARE_POW)
        outcome = apply_filter(record, canonical_instance(), filter_config,
                               sandbox_config, judge_backend=MockBackend("judge-a", {}),
                               augment_backend=augment_backend())
        assert outcome.final_verdict is Verdict.YES
        assert outcome.evidence.orig_on_benchmark is not None
        assert outcome.evidence.fix_on_benchmark is not None

    def test_outcome_round_trip(self, filter_config, sandbox_config, tmp_path):
        record = make_record(buggy_instance(), Verdict.NO, fix_code=SQUARE)
        outcome = apply_filter(record, buggy_instance(), filter_config, sandbox_config,
                               judge_backend=MockBackend("judge-a", {}),
                               augment_backend=augment_backend())
        path = tmp_path / "outcomes.jsonl"
        write_outcomes([outcome], path)
        assert read_outcomes(path) == [outcome]
