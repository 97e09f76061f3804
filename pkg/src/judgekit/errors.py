"""Exception types shared across the harness."""

from __future__ import annotations


class JudgekitError(Exception):
    """Base class for all harness errors."""


# --- corpus ingestion ---

class MissingField(JudgekitError):
    """A raw benchmark record lacks a required component."""


class UnknownBugType(JudgekitError):
    """A raw fault label is outside the normalization table."""


class OrphanBuggy(JudgekitError):
    """A buggy corpus entry references a task with no canonical counterpart."""


class ReconstructionFailure(JudgekitError):
    """Reassembled buggy code does not define the entry point."""


class MissingAnnotation(JudgekitError):
    """A defective program has no fault annotation entry."""


class MalformedRecord(JudgekitError):
    """A persisted record line could not be decoded."""

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


# --- prompting ---

class EmptyField(JudgekitError):
    """A prompt input that must be non-empty is empty."""


# --- model client ---

class AuthError(JudgekitError):
    """Credentials could not be resolved before any network attempt."""


class TransportError(JudgekitError):
    """A completion request failed after retries were exhausted."""


class RequestTimeoutError(TransportError):
    """A completion request timed out after retries were exhausted."""


class UnscriptedRequest(JudgekitError):
    """A mock backend received a request its script does not cover."""


# --- execution sandbox ---

class SandboxSpawnError(JudgekitError):
    """The shim process or host runtime could not be started."""


class ProtocolError(JudgekitError):
    """The shim emitted malformed or incomplete result records."""


# --- verification filter ---

class AugmentationEmpty(JudgekitError):
    """Test augmentation produced zero valid assertions."""


# --- metrics ---

class LabelMissing(JudgekitError):
    """A judgement record lacks the ground-truth label needed for scoring."""


class GroupMismatch(JudgekitError):
    """Two rate summaries being compared belong to different groups."""
