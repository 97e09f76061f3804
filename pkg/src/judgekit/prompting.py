"""Prompt rendering for the three judging modes plus the evidence-conditioned re-judge.

Templates are versioned files shipped with the package; rendered prompts carry a
content hash so completions can be cached and replayed byte-stably.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .corpus import TaskInstance, TestCase
from .errors import EmptyField
from .util import digest, sha256_hex


class PromptMode(str, Enum):
    DIRECT = "direct"
    DIRECT_EXPLAIN = "direct_explain"
    FULL = "full"

    @property
    def rank(self) -> int:
        return _MODE_ORDER.index(self)

    @property
    def wants_rationale(self) -> bool:
        return self is not PromptMode.DIRECT

    @property
    def wants_fix(self) -> bool:
        return self is PromptMode.FULL


_MODE_ORDER = (PromptMode.DIRECT, PromptMode.DIRECT_EXPLAIN, PromptMode.FULL)

MODE_ORDER = _MODE_ORDER

QUESTION = "Does the code meet the requirement?"

# Structural markers each mode's prompt must contain; strictly nested so that
# richer modes demand a superset of the structure of simpler ones.
REQUIRED_MARKERS: dict[PromptMode, tuple[str, ...]] = {
    PromptMode.DIRECT: (QUESTION, '"Yes" or "No"'),
    PromptMode.DIRECT_EXPLAIN: (QUESTION, '"Yes" or "No"', "brief explanation"),
    PromptMode.FULL: (QUESTION, '"Yes" or "No"', "brief explanation",
                      "Judgment:", "Explanation:", "Fix:",
                      "corrected code after the explanation"),
}

_TEMPLATE_FILES = {
    PromptMode.DIRECT: "direct.txt",
    PromptMode.DIRECT_EXPLAIN: "direct_explain.txt",
    PromptMode.FULL: "full.txt",
}

REJUDGE_TEMPLATE = "rejudge.txt"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath(f"templates/{name}").read_text("utf-8")


@lru_cache(maxsize=None)
def template_version(name: str) -> str:
    return "v1-" + sha256_hex(load_template(name))[:8]


def _fill(template: str, values: dict[str, str]) -> str:
    # plain token replacement; str.format would trip on braces inside code
    out = template
    for key, value in values.items():
        out = out.replace("{{" + key + "}}", value)
    return out


@dataclass(frozen=True)
class RenderedPrompt:
    mode: PromptMode
    text: str
    content_hash: str
    template_version: str
    task_id: str | None = None


def render_prompt(mode: PromptMode, instance: TaskInstance) -> RenderedPrompt:
    """Render one judging prompt; identical inputs produce identical text and hash."""
    if not instance.requirement.strip():
        raise EmptyField("instance requirement is empty")
    if not instance.code.strip():
        raise EmptyField("instance code is empty")
    name = _TEMPLATE_FILES[mode]
    version = template_version(name)
    text = _fill(load_template(name), {
        "requirement": instance.requirement,
        "code": instance.code.rstrip("\n"),
    })
    content_hash = digest({
        "mode": mode.value,
        "template_version": version,
        "requirement": instance.requirement,
        "code": instance.code,
    })
    return RenderedPrompt(mode=mode, text=text, content_hash=content_hash,
                          template_version=version, task_id=instance.task_id)


def _test_source(test: TestCase) -> str:
    if test.kind == "assertion":
        return test.body or ""
    return f"{test.input} -> {test.expected}"


def render_rejudge_prompt(instance: TaskInstance, previous_fix: str,
                          failed_tests: Sequence[TestCase]) -> RenderedPrompt:
    """Render the follow-up judgement prompt conditioned on concrete failing tests."""
    if not failed_tests:
        raise EmptyField("re-judge prompt requires at least one failed test")
    if not previous_fix.strip():
        raise EmptyField("re-judge prompt requires the previous fix")
    version = template_version(REJUDGE_TEMPLATE)
    failed_block = "\n".join(_test_source(t) for t in failed_tests)
    text = _fill(load_template(REJUDGE_TEMPLATE), {
        "requirement": instance.requirement,
        "code": instance.code.rstrip("\n"),
        "previous_fix": previous_fix.rstrip("\n"),
        "failed_tests": failed_block,
    })
    content_hash = digest({
        "mode": "rejudge",
        "template_version": version,
        "requirement": instance.requirement,
        "code": instance.code,
        "previous_fix": previous_fix,
        "failed_tests": [_test_source(t) for t in failed_tests],
    })
    return RenderedPrompt(mode=PromptMode.FULL, text=text, content_hash=content_hash,
                          template_version=version, task_id=instance.task_id)
