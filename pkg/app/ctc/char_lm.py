from __future__ import annotations

import math
from typing import Dict, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from app.ctc.posteriors import log_softmax
from app.graph.arpa import BOS, EOS, LN10, ArpaModel
from app.graph.lexicon import TokenInventory

EOS_INDEX = 0


@runtime_checkable
class CharLmScorer(Protocol):
    """Next-label distribution over the token inventory; slot 0 holds end-of-sequence."""

    def logprobs(self, prefix: Sequence[int]) -> np.ndarray:
        ...


class UniformCharLm:
    def __init__(self, tokens: int):
        self.tokens = tokens
        self._row = np.full(tokens, -math.log(tokens))
        self._row.setflags(write=False)

    def logprobs(self, prefix: Sequence[int]) -> np.ndarray:
        return self._row


class NgramCharLm:
    """
    Character-level n-gram over lexicon units, read from an ARPA model
    whose words are unit symbols. Each row is renormalised over the
    inventory plus end-of-sequence.
    """

    def __init__(self, arpa: ArpaModel, inventory: TokenInventory):
        self.arpa = arpa
        self.inventory = inventory
        self._context = max(arpa.max_order - 1, 1)
        self._cache: Dict[Tuple[str, ...], np.ndarray] = {}

    def _history(self, prefix: Sequence[int]) -> Tuple[str, ...]:
        return ((BOS,) + self.inventory.decode(prefix))[-self._context :]

    def logprobs(self, prefix: Sequence[int]) -> np.ndarray:
        history = self._history(prefix)
        row = self._cache.get(history)
        if row is None:
            raw = np.array(
                [self.arpa.score(history, EOS)] + [self.arpa.score(history, u) for u in self.inventory.units]
            ) * LN10
            row = log_softmax(raw) if np.isfinite(raw).any() else np.full(len(raw), -np.inf)
            row.setflags(write=False)
            self._cache[history] = row
        return row


def sequence_logprob(lm: CharLmScorer, labels: Sequence[int]) -> float:
    """Sum of next-label log-probabilities along `labels`, end-of-sequence included."""
    labels = tuple(labels)
    total = 0.0
    for i, k in enumerate(labels):
        total += float(lm.logprobs(labels[:i])[k])
    return total + float(lm.logprobs(labels)[EOS_INDEX])
