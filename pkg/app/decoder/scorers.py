from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from app.ctc.posteriors import PosteriorMatrix
from app.decoder.chunking import Window


@runtime_checkable
class AcousticScorer(Protocol):
    """
    Posterior rows for the center of a window: n_center / subsample rows,
    each a normalised log distribution over the token inventory. Must not
    keep state between windows.
    """

    def score(self, window: Window) -> np.ndarray:
        ...


def _blank_rows(count: int, tokens: int) -> np.ndarray:
    rows = np.full((count, tokens), -np.inf)
    rows[:, 0] = 0.0
    return rows


class UpsampledPosteriorScorer:
    """
    Stand-in acoustic model whose input features are posterior rows repeated
    `subsample` times. It only looks at the window it is given, so one
    instance can serve any number of sessions.
    """

    def __init__(self, subsample: int = 4):
        self.subsample = subsample

    @staticmethod
    def features_for(post: PosteriorMatrix, subsample: int = 4) -> np.ndarray:
        return np.repeat(post.values, subsample, axis=0)

    def score(self, window: Window) -> np.ndarray:
        rows = np.array(window.center[:: self.subsample])
        # zero padding past the end is not a distribution
        real = -(-window.valid_center // self.subsample)
        if real < rows.shape[0]:
            rows[real:] = _blank_rows(rows.shape[0] - real, rows.shape[1])
        return rows
