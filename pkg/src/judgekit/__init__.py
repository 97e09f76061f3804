"""judgekit: judge code against natural-language requirements, measure the two-sided
bias of the judge, audit its rationales, and temper over-rejection with an
execution-backed verification filter."""

from __future__ import annotations

__version__ = "0.1.0"

from .corpus import (Benchmark, BugType, FailureSymptom, PairedTask, TaskInstance,
                     TestCase, Variant, ingest_humaneval_pack, ingest_mbpp_pairs,
                     ingest_quixbugs, read_corpus, validate_corpus, write_corpus)
from .prompting import PromptMode, RenderedPrompt, render_prompt, render_rejudge_prompt
from .client import CompletionRecord, HttpBackend, MockBackend, ModelEndpoint, complete, mock_backend
from .parsing import (JudgementRecord, Verdict, parse_fix, parse_rationale,
                      parse_response, parse_verdict)
from .sandbox import (BehaviorComparison, ExecutionResult, SandboxConfig,
                      compare_behavior, run_tests)
from .filtering import (AugmentedSuite, FilterCase, FilterConfig, FilterOutcome,
                        apply_filter, classify_case, generate_augmented_tests,
                        should_trigger)
from .metrics import (ConfusionCounts, FlipAnalysis, RateSummary, apply_overlay,
                      filter_delta, flip_analysis, rates, score, summarize)
from .audit import (A1Record, A2Record, Alignment, AuditSummary, ConsistencyLabel,
                    ContradictionType, FNReason, FNReasonRecord, aggregate_audits,
                    audit_fault_awareness, audit_self_consistency, classify_fn_reason)
