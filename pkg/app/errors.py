from __future__ import annotations

from typing import Any, Optional


class DecoderError(RuntimeError):
    """Base class for every failure raised by the decoding stack."""


class ConfigurationError(DecoderError):
    pass


class FormatError(DecoderError):
    pass


class PreconditionError(DecoderError):
    pass


class DeterminizationBudgetError(DecoderError):
    def __init__(self, budget: int):
        super().__init__(
            f"determinization exceeded the state budget ({budget} states); "
            "input is likely not determinizable"
        )
        self.budget = budget


class InfeasibleAlignmentError(DecoderError):
    def __init__(self, frames: int, required: int):
        super().__init__(f"reference needs at least {required} frames, got {frames}")
        self.frames = frames
        self.required = required


class SessionStateError(DecoderError):
    pass


class EmptyResultError(DecoderError):
    """No token reached a final state. `best_partial` holds the cheapest live hypothesis."""

    def __init__(self, message: str, best_partial: Optional[Any] = None):
        super().__init__(message)
        self.best_partial = best_partial


class RescoreError(DecoderError):
    pass


class PipelineError(DecoderError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
