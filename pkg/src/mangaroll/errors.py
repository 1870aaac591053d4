"""Exception hierarchy. Every engine failure derives from MangarollError."""


class MangarollError(Exception):
    """Base class for all engine errors."""


# --- media ingest ---------------------------------------------------------

class UnreadableSource(MangarollError):
    pass


class UndecodableStream(MangarollError):
    pass


class RangeOutOfBounds(MangarollError):
    pass


class DecoderCrash(MangarollError):
    def __init__(self, message, exit_status=None):
        super().__init__(message)
        self.exit_status = exit_status


class EmptyShot(MangarollError):
    pass


# --- shot segmentation ----------------------------------------------------

class BinLayoutMismatch(MangarollError):
    pass


class EmptyStream(MangarollError):
    pass


# --- highlight engine -----------------------------------------------------

class NonFiniteInput(MangarollError):
    pass


class EmptyInput(MangarollError):
    pass


class PluginTimeout(MangarollError):
    pass


class PluginProtocolError(MangarollError):
    pass


# --- generative services --------------------------------------------------

class GenAiError(MangarollError):
    """Base for service-facing failures."""


class CaptionServiceError(GenAiError):
    pass


class LlmServiceError(GenAiError):
    pass


class ImageServiceError(GenAiError):
    pass


class OversizePayload(GenAiError):
    pass


class MissingFixture(GenAiError):
    """Replay mode saw a request whose digest has no recorded response."""


class TemplateSlotError(GenAiError):
    """A prompt template still contains an unfilled slot."""


class UnparseableResponse(GenAiError):
    pass


class StageCountMismatch(GenAiError):
    pass


# --- timeline -------------------------------------------------------------

class NoMatchingGap(MangarollError):
    pass


class BudgetTooSmall(MangarollError):
    pass


class AnchorOutsideCoverage(MangarollError):
    pass


class UnknownClip(MangarollError):
    pass


class InvariantViolation(MangarollError):
    """A timeline edit or load would break a project invariant.

    ``which`` is a short machine-readable name (e.g. "overlap") surfaced
    verbatim by the service layer in 422 responses.
    """

    def __init__(self, which, message=None):
        super().__init__(message or which)
        self.which = which


class ValidationFailed(MangarollError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "validation failed")


class SchemaVersionMismatch(MangarollError):
    pass


# --- renderer -------------------------------------------------------------

class DimensionMismatch(MangarollError):
    pass


class MissingAsset(MangarollError):
    pass


class SinkWriteError(MangarollError):
    pass
