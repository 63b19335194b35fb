"""Exception hierarchy shared across mmforge modules."""

from __future__ import annotations


class MMForgeError(Exception):
    """Base class for every error raised by mmforge."""


# --- ingest -----------------------------------------------------------------

class IngestError(MMForgeError):
    pass


class MalformedDocument(IngestError):
    pass


class MissingSection(IngestError):
    pass


class UnknownImage(IngestError, KeyError):
    pass


# --- annotation engine ------------------------------------------------------

class AnnotationError(MMForgeError):
    pass


class UnresolvedPlaceholder(AnnotationError):
    pass


class MismatchedImage(AnnotationError):
    pass


class WrongPairCount(AnnotationError):
    def __init__(self, found: int):
        super().__init__(f"expected exactly 3 question-answer pairs, parsed {found}")
        self.found = found


class MalformedPair(AnnotationError):
    pass


# --- masks ------------------------------------------------------------------

class MaskError(MMForgeError, ValueError):
    pass


class LengthMismatch(MMForgeError, ValueError):
    """Sizes disagree: RLE counts vs. mask area, or prediction vs. ground-truth vectors."""


class DimensionMismatch(MMForgeError, ValueError):
    pass


class NonCanonicalRle(MaskError):
    pass


class EmptyTrack(MaskError):
    pass


# --- backends ---------------------------------------------------------------

class BackendError(MMForgeError):
    pass


class TransientError(BackendError):
    """Failure worth retrying (timeouts, 5xx-class replies)."""


class Timeout(TransientError):
    pass


class RemoteError(BackendError):
    def __init__(self, code: int, message: str):
        super().__init__(f"remote error {code}: {message}")
        self.code = code
        self.message = message

    @property
    def transient(self) -> bool:
        return self.code >= 500


class TransientRemoteError(RemoteError, TransientError):
    pass


class TransientExhausted(BackendError):
    def __init__(self, attempts: int, last: Exception | None = None):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


class BadResponse(BackendError):
    pass


class InvalidRequest(BackendError, ValueError):
    pass


# --- orchestration / storage -------------------------------------------------

class ConfigInvalid(MMForgeError):
    pass


class OutputRootUnwritable(MMForgeError):
    pass


class InvariantViolation(MMForgeError, ValueError):
    pass


class IoFailure(MMForgeError, OSError):
    pass


class SizeExceedsDataset(MMForgeError, ValueError):
    pass


# --- evaluation -------------------------------------------------------------

class EvaluationError(MMForgeError, ValueError):
    pass


class EmptyInput(EvaluationError):
    pass


class UnknownTerm(EvaluationError, KeyError):
    pass


class NotNormalized(EvaluationError):
    pass


class ClassSetMismatch(EvaluationError):
    pass


class TaxonomyError(EvaluationError):
    pass
