from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.data.models import ChunkConfig

# Inference chunk configurations swept for the latency study, N_l fixed at 160.
LATENCY_SWEEP: Tuple[ChunkConfig, ...] = tuple(
    ChunkConfig(n_left=160, n_center=c, n_right=r)
    for c in (64, 48, 32)
    for r in (32, 24, 16)
)


def latency_ms(chunks: ChunkConfig) -> int:
    """Left context is history only, so it never adds latency."""
    return (chunks.n_center + chunks.n_right) * chunks.frame_shift_ms


@dataclass(frozen=True, eq=False)
class Window:
    """
    Input frames handed to an acoustic scorer: left context, center, right
    context. Missing frames at either end of the utterance are zeros;
    `valid_center` says how many center frames are real.
    """

    features: np.ndarray
    n_left: int
    n_center: int
    n_right: int
    start_frame: int
    valid_center: int

    @property
    def center(self) -> np.ndarray:
        return self.features[self.n_left : self.n_left + self.n_center]


def cut_window(
    buffer: np.ndarray,
    buffer_offset: int,
    start: int,
    chunks: ChunkConfig,
    valid_center: int,
) -> Window:
    """
    Window whose center begins at absolute input frame `start`. `buffer`
    holds frames from absolute index `buffer_offset` onwards.
    """
    lo = start - chunks.n_left
    hi = start + chunks.n_center + chunks.n_right
    out = np.zeros((chunks.window, buffer.shape[1]), dtype=buffer.dtype)
    src_lo = max(lo, buffer_offset)
    src_hi = min(hi, buffer_offset + buffer.shape[0])
    if src_hi > src_lo:
        out[src_lo - lo : src_hi - lo] = buffer[src_lo - buffer_offset : src_hi - buffer_offset]
    return Window(out, chunks.n_left, chunks.n_center, chunks.n_right, start, valid_center)
