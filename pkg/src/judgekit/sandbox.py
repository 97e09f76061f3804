"""Isolated, time-limited execution of candidate implementations via the runner shim.

Each batch spawns one shim process in a scratch directory with a stripped
environment and resource limits. The shim enforces per-test timeouts; this
module additionally enforces a hard wall-clock deadline (budget plus a fixed
teardown margin) so a runaway candidate can never block the harness.
"""

from __future__ import annotations

import ast
import dataclasses
import importlib.util
import os
import re
import resource
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .corpus import TEST_KIND_ASSERTION, TEST_KIND_IO_PAIR, TestCase
from .errors import ProtocolError, SandboxSpawnError
from .util import canonical_json

import json

STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_ERROR = "error"
STATUS_TIMEOUT = "timeout"

OVERALL_ALL_PASS = "AllPass"
OVERALL_SOME_FAIL = "SomeFail"


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class

    test_id: str
    status: str
    message: str | None = None
    value: str | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"test_id": self.test_id, "status": self.status}
        if self.message is not None:
            out["message"] = self.message
        if self.value is not None:
            out["value"] = self.value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TestOutcome":
        return cls(test_id=d["test_id"], status=d["status"],
                   message=d.get("message"), value=d.get("value"))


@dataclass(frozen=True)
class ExecutionResult:
    per_test: tuple[TestOutcome, ...]
    overall: str
    wall_time_ms: float

    @classmethod
    def collect(cls, outcomes: Sequence[TestOutcome], wall_time_ms: float) -> "ExecutionResult":
        overall = OVERALL_ALL_PASS if all(o.status == STATUS_PASS for o in outcomes) \
            else OVERALL_SOME_FAIL
        return cls(per_test=tuple(outcomes), overall=overall, wall_time_ms=wall_time_ms)

    @property
    def all_pass(self) -> bool:
        return self.overall == OVERALL_ALL_PASS

    def failing_ids(self) -> list[str]:
        return [o.test_id for o in self.per_test if o.status != STATUS_PASS]

    def to_dict(self) -> dict:
        return {
            "per_test": [o.to_dict() for o in self.per_test],
            "overall": self.overall,
            "wall_time_ms": self.wall_time_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionResult":
        return cls(per_test=tuple(TestOutcome.from_dict(o) for o in d["per_test"]),
                   overall=d["overall"], wall_time_ms=d["wall_time_ms"])


VERDICT_EQUIVALENT = "Equivalent"
VERDICT_DIVERGENT = "Divergent"


@dataclass(frozen=True)
class BehaviorComparison:
    verdict: str
    witness: tuple[str, str, str] | None = None  # (input, output_a, output_b)

    def __post_init__(self):
        if (self.verdict == VERDICT_DIVERGENT) != (self.witness is not None):
            raise ValueError("witness is present exactly for divergent comparisons")

    @property
    def equivalent(self) -> bool:
        return self.verdict == VERDICT_EQUIVALENT

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"verdict": self.verdict}
        if self.witness is not None:
            out["witness"] = list(self.witness)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BehaviorComparison":
        witness = tuple(d["witness"]) if d.get("witness") else None
        return cls(verdict=d["verdict"], witness=witness)


@dataclass
class SandboxConfig:
    shim_path: Path | None = None
    python: str = sys.executable
    per_test_timeout: float = 5.0
    teardown_margin: float = 2.0
    float_tolerance: float = 1e-6
    max_workers: int = 4
    memory_limit_mb: int = 1024


def resolve_shim(config: SandboxConfig | None = None) -> Path:
    """Locate the runner shim: explicit config, environment, or installed package."""
    if config and config.shim_path:
        path = Path(config.shim_path)
        if not path.exists():
            raise SandboxSpawnError(f"configured shim not found: {path}")
        return path
    env = os.environ.get("JUDGEKIT_SHIM")
    if env:
        path = Path(env)
        if not path.exists():
            raise SandboxSpawnError(f"JUDGEKIT_SHIM points at a missing file: {path}")
        return path
    spec = importlib.util.find_spec("judgekit_runner.shim")
    if spec and spec.origin:
        return Path(spec.origin)
    raise SandboxSpawnError(
        "runner shim unavailable: install judgekit-runner or set JUDGEKIT_SHIM")


def check_syntax(source: str) -> bool:
    try:
        compile(source, "<candidate>", "exec")
        return True
    except SyntaxError:
        return False


def lower_test(test: TestCase, entry_point: str, float_tolerance: float) -> str:
    """Turn a test case into assertion source for the shim's assert mode."""
    if test.kind == TEST_KIND_ASSERTION:
        return test.body or ""
    args = test.input if test.input is not None else "()"
    expected = test.expected
    try:
        expected_value = ast.literal_eval(expected)
    except (ValueError, SyntaxError):
        expected_value = None
    if isinstance(expected_value, float):
        return (f"assert abs({entry_point}(*{args}) - ({expected})) "
                f"<= {float_tolerance!r}")
    return f"assert {entry_point}(*{args}) == ({expected})"


def _limit_resources(memory_mb: int, cpu_seconds: float):
    def apply():
        os.setsid()
        try:
            resource.setrlimit(resource.RLIMIT_AS,
                               (memory_mb * 1024 * 1024, memory_mb * 1024 * 1024))
            resource.setrlimit(resource.RLIMIT_FSIZE, (64 * 1024 * 1024, 64 * 1024 * 1024))
            cpu = max(2, int(cpu_seconds) + 5)
            resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 2))
        except (ValueError, OSError):
            pass
    return apply


def _spawn_shim(payload: dict, config: SandboxConfig, n_tasks: int) -> tuple[list[dict], float, bool]:
    """Run one shim batch; returns (result records, wall ms, killed-at-deadline)."""
    shim = resolve_shim(config)
    deadline = config.per_test_timeout * max(n_tasks, 1) + config.teardown_margin
    scratch = Path(tempfile.mkdtemp(prefix="judgekit-sbx-"))
    killed = False
    try:
        payload_path = scratch / "payload.json"
        payload_path.write_text(canonical_json(payload), encoding="utf-8")
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "HOME": str(scratch),
            "PYTHONIOENCODING": "utf-8",
            "LC_ALL": "C.UTF-8",
        }
        start = time.monotonic()
        try:
            proc = subprocess.Popen(
                [config.python, "-I", str(shim), str(payload_path)],
                stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                cwd=scratch, env=env, text=True, encoding="utf-8",
                preexec_fn=_limit_resources(config.memory_limit_mb, deadline),
            )
        except OSError as exc:
            raise SandboxSpawnError(f"cannot start host runtime: {exc}") from exc
        try:
            stdout, stderr = proc.communicate(timeout=deadline)
        except subprocess.TimeoutExpired:
            killed = True
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                proc.kill()
            stdout, stderr = proc.communicate()
        wall_ms = (time.monotonic() - start) * 1000.0
        if not killed and proc.returncode != 0:
            raise ProtocolError(
                f"shim exited {proc.returncode}: {(stderr or '').strip()[:500]}")
        records = []
        for line in (stdout or "").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed shim output line: {line[:200]}") from exc
            if not isinstance(rec, dict) or "id" not in rec or "status" not in rec:
                raise ProtocolError(f"incomplete shim record: {line[:200]}")
            records.append(rec)
        return records, wall_ms, killed
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _join_results(task_ids: Sequence[str], records: list[dict], killed: bool) -> list[TestOutcome]:
    by_id = {r["id"]: r for r in records}
    outcomes = []
    missing_seen = False
    for task_id in task_ids:
        rec = by_id.get(task_id)
        if rec is not None:
            outcomes.append(TestOutcome(test_id=task_id, status=rec["status"],
                                        message=rec.get("message"), value=rec.get("value")))
        elif killed and not missing_seen:
            # the in-flight task when the deadline hit
            missing_seen = True
            outcomes.append(TestOutcome(test_id=task_id, status=STATUS_TIMEOUT,
                                        message="batch deadline exceeded"))
        elif killed:
            outcomes.append(TestOutcome(test_id=task_id, status=STATUS_ERROR,
                                        message="not executed: batch deadline exceeded"))
        else:
            raise ProtocolError(f"shim emitted no result for task {task_id!r}")
    return outcomes


def run_tests(code: str, entry_point: str, tests: Sequence[TestCase],
              timeout: float | None = None,
              config: SandboxConfig | None = None) -> ExecutionResult:
    """Execute every test against the candidate in one isolated shim process."""
    config = config or SandboxConfig()
    if timeout is not None:
        config = dataclasses.replace(config, per_test_timeout=timeout)
    if not tests:
        raise ValueError("run_tests requires a non-empty test list")
    if config.per_test_timeout <= 0:
        raise ValueError("timeout must be positive")
    tasks = [{"id": t.id, "body": lower_test(t, entry_point, config.float_tolerance)}
             for t in tests]
    payload = {
        "code": code,
        "entry_point": entry_point,
        "mode": "assert",
        "tasks": tasks,
        "per_task_timeout": config.per_test_timeout,
    }
    records, wall_ms, killed = _spawn_shim(payload, config, len(tasks))
    outcomes = _join_results([t["id"] for t in tasks], records, killed)
    return ExecutionResult.collect(outcomes, round(wall_ms, 3))


def _run_probes(code: str, entry_point: str, probe_inputs: Sequence[str],
                config: SandboxConfig) -> list[TestOutcome]:
    tasks = [{"id": f"p{i}", "input": literal} for i, literal in enumerate(probe_inputs)]
    payload = {
        "code": code,
        "entry_point": entry_point,
        "mode": "probe",
        "tasks": tasks,
        "per_task_timeout": config.per_test_timeout,
    }
    records, _, killed = _spawn_shim(payload, config, len(tasks))
    return _join_results([t["id"] for t in tasks], records, killed)


def parse_encoded_value(text: str) -> Any:
    """Decode the shim's canonical value encoding; opaque strings fall through."""
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        return text


def values_equal(a: Any, b: Any, float_tolerance: float) -> bool:
    """Deep value equality with absolute tolerance on numeric leaves."""
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        try:
            return abs(a - b) <= float_tolerance
        except OverflowError:
            return a == b
    if type(a) is not type(b):
        return False
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(
            values_equal(x, y, float_tolerance) for x, y in zip(a, b))
    if isinstance(a, dict):
        if set(a.keys()) != set(b.keys()):
            return False
        return all(values_equal(a[k], b[k], float_tolerance) for k in a)
    if isinstance(a, (set, frozenset)):
        return a == b
    return a == b


def _probe_signature(outcome: TestOutcome) -> tuple[str, Any]:
    if outcome.status == STATUS_PASS:
        return ("value", parse_encoded_value(outcome.value or ""))
    kind = (outcome.message or "").split(":", 1)[0] or outcome.status
    return (outcome.status, kind)


def compare_behavior(code_a: str, code_b: str, entry_point: str,
                     probe_inputs: Sequence[str],
                     timeout: float | None = None,
                     config: SandboxConfig | None = None) -> BehaviorComparison:
    """Evaluate both implementations on every probe input and compare outputs.

    Values compare with deep equality and an absolute tolerance for floats;
    non-value outcomes compare by status and exception kind. The first
    divergence is returned as a witness.
    """
    config = config or SandboxConfig()
    if timeout is not None:
        config = dataclasses.replace(config, per_test_timeout=timeout)
    if not probe_inputs:
        raise ValueError("compare_behavior requires a non-empty probe list")
    outcomes_a = _run_probes(code_a, entry_point, probe_inputs, config)
    outcomes_b = _run_probes(code_b, entry_point, probe_inputs, config)
    for literal, out_a, out_b in zip(probe_inputs, outcomes_a, outcomes_b):
        sig_a, sig_b = _probe_signature(out_a), _probe_signature(out_b)
        if sig_a[0] == "value" and sig_b[0] == "value":
            if values_equal(sig_a[1], sig_b[1], config.float_tolerance):
                continue
        elif sig_a == sig_b:
            continue
        describe = lambda o: o.value if o.status == STATUS_PASS else f"<{o.status}: {o.message}>"
        return BehaviorComparison(verdict=VERDICT_DIVERGENT,
                                  witness=(literal, describe(out_a), describe(out_b)))
    return BehaviorComparison(verdict=VERDICT_EQUIVALENT)


_SAFE_CALL_NAMES = {"abs", "len", "round", "sorted", "set", "list", "tuple", "str",
                    "int", "float", "sum", "min", "max", "isinstance", "all", "any",
                    "range", "zip", "enumerate", "True", "False", "None"}


def extract_probe_inputs(tests: Sequence[TestCase], entry_point: str) -> list[str]:
    """Pull argument-tuple literals for the entry point out of the test cases.

    io_pair inputs are used directly; assertion sources contribute every call
    to the entry point whose arguments are all literals.
    """
    seen: set[str] = set()
    ordered: list[str] = []

    def add(literal: str):
        if literal not in seen:
            seen.add(literal)
            ordered.append(literal)

    for test in tests:
        if test.kind == TEST_KIND_IO_PAIR and test.input is not None:
            add(test.input)
            continue
        if not test.body:
            continue
        try:
            tree = ast.parse(test.body)
        except SyntaxError:
            continue
        for node in ast.walk(tree):
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                    and node.func.id == entry_point and not node.keywords:
                try:
                    values = tuple(ast.literal_eval(arg) for arg in node.args)
                except (ValueError, SyntaxError):
                    continue
                add(repr(values))
    return ordered


def assertion_names_ok(body: str, entry_point: str) -> bool:
    """Check an assertion references only the entry point and safe builtins."""
    try:
        tree = ast.parse(body)
    except SyntaxError:
        return False
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id != entry_point \
                and node.id not in _SAFE_CALL_NAMES:
            return False
        if isinstance(node, (ast.Import, ast.ImportFrom, ast.Attribute)):
            return False
    return True
