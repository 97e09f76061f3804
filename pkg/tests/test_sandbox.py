from __future__ import annotations

import time

import pytest

from judgekit.corpus import FailureSymptom, TestCase, Variant
from judgekit.errors import SandboxSpawnError
from judgekit.sandbox import (SandboxConfig, STATUS_ERROR, STATUS_PASS, STATUS_TIMEOUT,
                              compare_behavior, extract_probe_inputs, lower_test,
                              resolve_shim, run_tests, values_equal)

SQUARE = "def square(x):\n    return x * x\n"
SQUARE_POW = "def square(x):\n    return x ** 2\n"
SQUARE_BAD = "def square(x):\n    return x + x\n"
TESTS = [TestCase.assertion("t0", "assert square(2) == 4"),
         TestCase.assertion("t1", "assert square(3) == 9")]


class TestRunTests:
    def test_canonical_fixture_instances_all_pass(self, corpus20, sandbox_config):
        pair = corpus20[0]
        result = run_tests(pair.canonical.code, pair.canonical.entry_point,
                           list(pair.canonical.tests), config=sandbox_config)
        assert result.all_pass

    def test_non_terminating_buggy_variant_times_out(self, corpus20, sandbox_config):
        pair = next(p for p in corpus20
                    if p.buggy.failure_symptoms == FailureSymptom.non_termination())
        result = run_tests(pair.buggy.code, pair.buggy.entry_point,
                           list(pair.buggy.tests), config=sandbox_config)
        assert not result.all_pass
        assert any(o.status == STATUS_TIMEOUT for o in result.per_test)

    def test_exception_reported_as_error_with_message(self, sandbox_config):
        code = "def square(x):\n    raise ValueError('boom')\n"
        result = run_tests(code, "square", TESTS[:1], config=sandbox_config)
        assert result.per_test[0].status == STATUS_ERROR
        assert "ValueError" in result.per_test[0].message

    def test_statuses_are_deterministic_for_pure_functions(self, sandbox_config):
        first = run_tests(SQUARE_BAD, "square", TESTS, config=sandbox_config)
        second = run_tests(SQUARE_BAD, "square", TESTS, config=sandbox_config)
        assert [o.status for o in first.per_test] == [o.status for o in second.per_test]

    def test_overall_matches_per_test(self, sandbox_config):
        result = run_tests(SQUARE_BAD, "square", TESTS, config=sandbox_config)
        assert result.overall == "SomeFail"
        assert [o.status for o in result.per_test] == [STATUS_PASS, "fail"]

    def test_empty_tests_rejected(self, sandbox_config):
        with pytest.raises(ValueError):
            run_tests(SQUARE, "square", [], config=sandbox_config)

    def test_io_pair_lowering_with_float_tolerance(self, sandbox_config):
        tests = [TestCase.io_pair("t0", "(2.0,)", "4.000000001"),
                 TestCase.io_pair("t1", "(3,)", "9")]
        result = run_tests(SQUARE, "square", tests, config=sandbox_config)
        assert result.all_pass

    def test_syntax_error_contained_as_error_status(self, sandbox_config):
        result = run_tests("def square(x)\n    return x", "square", TESTS,
                           config=sandbox_config)
        assert not result.all_pass
        assert all(o.status == STATUS_ERROR for o in result.per_test)


class TestContainment:
    def test_infinite_loop_reported_within_timeout_plus_margin(self, sandbox_config):
        loop = "def square(x):\n    while True:\n        pass\n"
        start = time.monotonic()
        result = run_tests(loop, "square", TESTS[:1], config=sandbox_config)
        elapsed = time.monotonic() - start
        assert result.per_test[0].status == STATUS_TIMEOUT
        assert elapsed < sandbox_config.per_test_timeout + 2.0

    def test_timeout_in_task_i_does_not_block_later_tasks(self, sandbox_config):
        code = ("def square(x):\n"
                "    if x == 2:\n"
                "        while True:\n"
                "            pass\n"
                "    return x * x\n")
        result = run_tests(code, "square", TESTS, config=sandbox_config)
        assert [o.status for o in result.per_test] == [STATUS_TIMEOUT, STATUS_PASS]

    def test_crash_does_not_abort_the_batch(self, sandbox_config):
        code = ("def square(x):\n"
                "    if x == 2:\n"
                "        raise RuntimeError('dead')\n"
                "    return x * x\n")
        result = run_tests(code, "square", TESTS, config=sandbox_config)
        assert [o.status for o in result.per_test] == [STATUS_ERROR, STATUS_PASS]

    def test_missing_shim_is_a_spawn_error(self, tmp_path):
        config = SandboxConfig(shim_path=tmp_path / "nope.py")
        with pytest.raises(SandboxSpawnError):
            resolve_shim(config)


class TestCompareBehavior:
    def test_textually_identical_code_is_equivalent(self, sandbox_config):
        comparison = compare_behavior(SQUARE, SQUARE, "square", ["(2,)", "(3,)"],
                                      config=sandbox_config)
        assert comparison.equivalent
        assert comparison.witness is None

    def test_implementation_detail_differences_are_equivalent(self, sandbox_config):
        # same outputs despite different iteration order over an unordered intermediate
        code_a = ("def tally(items):\n"
                  "    out = {}\n"
                  "    for item in items:\n"
                  "        out[item] = out.get(item, 0) + 1\n"
                  "    return out\n")
        code_b = ("def tally(items):\n"
                  "    out = {}\n"
                  "    for item in reversed(items):\n"
                  "        out[item] = out.get(item, 0) + 1\n"
                  "    return out\n")
        comparison = compare_behavior(code_a, code_b, "tally",
                                      ["(['a', 'b', 'a'],)"], config=sandbox_config)
        assert comparison.equivalent

    def test_known_divergent_pair_yields_witness(self, sandbox_config):
        # expected outputs 3*3=9 vs 3+3=6 confirmed by direct execution
        assert eval("3 * 3") == 9 and eval("3 + 3") == 6
        comparison = compare_behavior(SQUARE, SQUARE_BAD, "square", ["(3,)"],
                                      config=sandbox_config)
        assert comparison.verdict == "Divergent"
        assert comparison.witness == ("(3,)", "9", "6")

    def test_swapping_sides_flips_only_the_witness_order(self, sandbox_config):
        forward = compare_behavior(SQUARE, SQUARE_BAD, "square", ["(2,)", "(3,)"],
                                   config=sandbox_config)
        backward = compare_behavior(SQUARE_BAD, SQUARE, "square", ["(2,)", "(3,)"],
                                    config=sandbox_config)
        assert forward.verdict == backward.verdict == "Divergent"
        assert forward.witness[0] == backward.witness[0]
        assert forward.witness[1:] == backward.witness[1:][::-1]

    def test_float_results_compare_within_tolerance(self, sandbox_config):
        code_a = "def third(x):\n    return x / 3\n"
        code_b = "def third(x):\n    return x * (1/3)\n"
        comparison = compare_behavior(code_a, code_b, "third", ["(1.0,)", "(2.0,)"],
                                      config=sandbox_config)
        assert comparison.equivalent

    def test_matching_exceptions_compare_equal(self, sandbox_config):
        code = "def f(x):\n    return 1 // x\n"
        comparison = compare_behavior(code, code, "f", ["(0,)"], config=sandbox_config)
        assert comparison.equivalent

    def test_empty_probe_list_rejected(self, sandbox_config):
        with pytest.raises(ValueError):
            compare_behavior(SQUARE, SQUARE, "square", [], config=sandbox_config)


class TestHelpers:
    def test_extract_probe_inputs_from_assertions_and_io_pairs(self):
        tests = [TestCase.assertion("t0", "assert square(2) == 4"),
                 TestCase.assertion("t1", "assert square(2) == 4"),  # duplicate input
                 TestCase.assertion("t2", "assert abs(square(1.5) - 2.25) < 1e-6"),
                 TestCase.io_pair("t3", "(7,)", "49")]
        probes = extract_probe_inputs(tests, "square")
        assert probes == ["(2,)", "(1.5,)", "(7,)"]

    def test_lower_test_float_expected_uses_tolerance(self):
        lowered = lower_test(TestCase.io_pair("t", "(2.0,)", "4.0"), "square", 1e-6)
        assert "abs(" in lowered and "<=" in lowered

    def test_lower_test_exact_for_non_floats(self):
        lowered = lower_test(TestCase.io_pair("t", "(2,)", "[1, 2]"), "f", 1e-6)
        assert lowered == "assert f(*(2,)) == ([1, 2])"

    def test_values_equal_structural(self):
        assert values_equal([1, (2.0, {"a": 3.0000000001})],
                            [1, (2.0, {"a": 3.0})], 1e-6)
        assert not values_equal([1, 2], (1, 2), 1e-6)
        assert not values_equal({"a": 1}, {"b": 1}, 1e-6)
        assert values_equal({1, 2}, {2, 1}, 1e-6)
