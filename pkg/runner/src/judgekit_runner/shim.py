"""In-runtime test shim: load one candidate function, run checks, report line-by-line.

Launched as `python shim.py <payload.json>`. The payload names the candidate
source, its entry point, and either assertion sources or probe input literals.
One JSON result per task is written to stdout, flushed immediately, in payload
order. The process exits 0 even when tests fail; a nonzero exit signals only a
protocol-level fault (unreadable payload). Standard library only.
"""

from __future__ import annotations

import ast
import json
import signal
import sys


class _TaskTimeout(Exception):
    pass


def _on_alarm(signum, frame):
    raise _TaskTimeout()


def encode_value(value):
    """Canonical, sorted, lossless text encoding of a return value.

    The common literal types round-trip through ast.literal_eval on the other
    side of the protocol; anything else degrades to a tagged repr compared as
    opaque text.
    """
    if value is None or isinstance(value, (bool, int, float, bytes)):
        return repr(value)
    if isinstance(value, str):
        return repr(value)
    if isinstance(value, (list, tuple)):
        inner = ", ".join(encode_value(v) for v in value)
        if isinstance(value, tuple):
            return "(" + inner + ",)" if len(value) == 1 else "(" + inner + ")"
        return "[" + inner + "]"
    if isinstance(value, (set, frozenset)):
        if not value:
            return "set()" if isinstance(value, set) else "frozenset()"
        inner = ", ".join(sorted(encode_value(v) for v in value))
        body = "{" + inner + "}"
        return body if isinstance(value, set) else "frozenset(" + body + ")"
    if isinstance(value, dict):
        items = sorted((encode_value(k), encode_value(v)) for k, v in value.items())
        return "{" + ", ".join(f"{k}: {v}" for k, v in items) + "}"
    return f"<{type(value).__name__}> {value!r}"


def _emit(out, task_id, status, value=None, message=None):
    record = {"id": task_id, "status": status}
    if value is not None:
        record["value"] = value
    if message is not None:
        record["message"] = message
    out.write(json.dumps(record, sort_keys=True, ensure_ascii=True))
    out.write("\n")
    out.flush()


def _guarded(seconds, fn):
    """Run fn under a wall-clock alarm; returns (outcome, payload)."""
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        result = fn()
        return "ok", result
    except _TaskTimeout:
        return "timeout", None
    except AssertionError as exc:
        return "fail", str(exc) or None
    except BaseException as exc:  # noqa: BLE001 - candidate code may raise anything
        return "error", f"{type(exc).__name__}: {exc}"
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)


def execute_payload(payload, out):
    mode = payload["mode"]
    if mode not in ("assert", "probe"):
        raise ValueError(f"unknown payload mode: {mode!r}")
    tasks = payload["tasks"]
    entry_point = payload["entry_point"]
    timeout = float(payload.get("per_task_timeout", 5.0))

    namespace = {"__name__": "__candidate__"}
    load_status, load_payload = _guarded(
        timeout, lambda: exec(compile(payload["code"], "<candidate>", "exec"), namespace))
    load_error = None
    if load_status == "timeout":
        load_error = "candidate did not finish loading"
    elif load_status in ("fail", "error"):
        load_error = load_payload or "candidate failed to load"

    for task in tasks:
        task_id = task["id"]
        if load_error is not None:
            status = "timeout" if load_status == "timeout" else "error"
            _emit(out, task_id, status, message=load_error)
            continue
        if mode == "assert":
            status, detail = _guarded(
                timeout, lambda body=task["body"]: exec(compile(body, "<test>", "exec"), namespace))
            if status == "ok":
                _emit(out, task_id, "pass")
            elif status == "timeout":
                _emit(out, task_id, "timeout")
            else:
                _emit(out, task_id, status, message=detail)
        else:
            def probe(literal=task["input"]):
                args = ast.literal_eval(literal)
                if not isinstance(args, tuple):
                    args = (args,)
                fn = namespace.get(entry_point)
                if fn is None:
                    raise NameError(f"entry point {entry_point!r} is not defined")
                return encode_value(fn(*args))

            status, detail = _guarded(timeout, probe)
            if status == "ok":
                _emit(out, task_id, "pass", value=detail)
            elif status == "timeout":
                _emit(out, task_id, "timeout")
            else:
                _emit(out, task_id, "error", message=detail)


def main(argv):
    if len(argv) != 2:
        sys.stderr.write("usage: shim.py <payload.json>\n")
        return 2
    try:
        with open(argv[1], "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        tasks = payload["tasks"]
        if not isinstance(tasks, list):
            raise ValueError("tasks must be a list")
        signal.signal(signal.SIGALRM, _on_alarm)
        execute_payload(payload, sys.stdout)
    except _TaskTimeout:
        return 2
    except (OSError, ValueError, KeyError, TypeError) as exc:
        sys.stderr.write(f"protocol failure: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
