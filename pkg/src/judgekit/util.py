"""Small shared helpers: canonical JSON, digests, JSONL IO, display rounding."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence

from .errors import MalformedRecord


def canonical_json(obj: Any) -> str:
    """Stable, compact encoding used for digests and on-disk records."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest(obj: Any, length: int | None = None) -> str:
    h = sha256_hex(canonical_json(obj))
    return h[:length] if length else h


def round1(value: float | Decimal) -> Decimal:
    """Round to one decimal, half away from zero, for report display.

    Uses the decimal string of the value so that exact .x5 boundaries
    (e.g. 67.25) round up the way published tables do.
    """
    return Decimal(str(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


def fmt1(value: float | None) -> str:
    """One-decimal display string; absent values render as a dash."""
    if value is None:
        return "-"
    return str(round1(value))


def write_jsonl(path: Path | str, rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(canonical_json(row))
            fh.write("\n")


def read_jsonl(path: Path | str) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs; raise MalformedRecord on bad lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(i, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise MalformedRecord(i, "record is not an object")
            yield i, obj


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via temp file + rename so concurrent identical writes are safe."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def map_bounded(fn: Callable, items: Sequence, limit: int) -> list:
    """Apply fn to items with at most `limit` concurrent workers, preserving order."""
    if limit <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=limit) as pool:
        return list(pool.map(fn, items))
