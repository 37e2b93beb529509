from __future__ import annotations

import math
import threading
import time
from typing import Any, Dict, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from app.ctc.char_lm import EOS_INDEX, CharLmScorer
from app.data.models import LabelSequence
from app.errors import ConfigurationError


@runtime_checkable
class SequenceScorer(Protocol):
    """
    Second-pass model seen through teacher forcing.

    `prepare` returns an opaque per-utterance handle (the encoder context).
    `score` returns log p(y_l | y_<l) for every position of `labels` plus
    end-of-sequence, in one call. `next_logprobs` is the autoregressive
    single step: a row over the inventory with end-of-sequence in slot 0.
    """

    def prepare(self, utt_id: str) -> Any:
        ...

    def score(self, handle: Any, labels: Sequence[int]) -> np.ndarray:
        ...

    def next_logprobs(self, handle: Any, prefix: Sequence[int]) -> np.ndarray:
        ...


def teacher_forced(step, labels: Sequence[int]) -> np.ndarray:
    """Per-position log-probabilities from a next-label function, end-of-sequence last."""
    labels = tuple(labels)
    out = np.empty(len(labels) + 1)
    for i, k in enumerate(labels):
        out[i] = step(labels[:i])[k]
    out[-1] = step(labels)[EOS_INDEX]
    return out


class ReferenceTableScorer:
    """
    Fixture scorer built around known references: while a prefix follows
    the reference it puts `peak` mass on the reference continuation and
    spreads the rest evenly; off the reference every token is equally likely.
    """

    def __init__(self, references: Mapping[str, LabelSequence], tokens: int, peak: float = 0.9):
        if not 0.0 < peak < 1.0:
            raise ConfigurationError("peak must lie in (0, 1)")
        if tokens < 2:
            raise ConfigurationError("need at least one unit besides end-of-sequence")
        self.references: Dict[str, LabelSequence] = {k: tuple(v) for k, v in references.items()}
        self.tokens = tokens
        self._on = math.log(peak)
        self._off = math.log((1.0 - peak) / (tokens - 1))
        self._uniform = np.full(tokens, -math.log(tokens))
        self._uniform.setflags(write=False)

    def prepare(self, utt_id: str) -> LabelSequence:
        try:
            return self.references[utt_id]
        except KeyError:
            raise ConfigurationError(f"no reference for utterance {utt_id!r}") from None

    def next_logprobs(self, handle: LabelSequence, prefix: Sequence[int]) -> np.ndarray:
        prefix = tuple(prefix)
        n = len(prefix)
        if n > len(handle) or handle[:n] != prefix:
            return self._uniform
        row = np.full(self.tokens, self._off)
        row[handle[n] if n < len(handle) else EOS_INDEX] = self._on
        return row

    def score(self, handle: LabelSequence, labels: Sequence[int]) -> np.ndarray:
        return teacher_forced(lambda p: self.next_logprobs(handle, p), labels)


class CharLmSequenceScorer:
    """Adapter: an n-gram character LM used as the second-pass model."""

    def __init__(self, lm: CharLmScorer):
        self.lm = lm

    def prepare(self, utt_id: str) -> None:
        return None

    def next_logprobs(self, handle: Any, prefix: Sequence[int]) -> np.ndarray:
        return self.lm.logprobs(tuple(prefix))

    def score(self, handle: Any, labels: Sequence[int]) -> np.ndarray:
        return teacher_forced(self.lm.logprobs, labels)


class InstrumentedScorer:
    """Counts calls and charges a fixed wall-clock cost per call."""

    def __init__(self, inner: SequenceScorer, delay_s: float = 0.0):
        self.inner = inner
        self.delay_s = delay_s
        self._lock = threading.Lock()
        self.score_calls = 0
        self.step_calls = 0

    @property
    def calls(self) -> int:
        return self.score_calls + self.step_calls

    def reset(self) -> None:
        with self._lock:
            self.score_calls = 0
            self.step_calls = 0

    def _charge(self) -> None:
        if self.delay_s > 0:
            time.sleep(self.delay_s)

    def prepare(self, utt_id: str) -> Any:
        return self.inner.prepare(utt_id)

    def score(self, handle: Any, labels: Sequence[int]) -> np.ndarray:
        with self._lock:
            self.score_calls += 1
        self._charge()
        return self.inner.score(handle, labels)

    def next_logprobs(self, handle: Any, prefix: Sequence[int]) -> np.ndarray:
        with self._lock:
            self.step_calls += 1
        self._charge()
        return self.inner.next_logprobs(handle, prefix)
