from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Tuple

from app.errors import ConfigurationError

LabelSequence = Tuple[int, ...]


@dataclass(frozen=True)
class ChunkConfig:
    """Chunk geometry in input frames (before subsampling)."""

    n_left: int
    n_center: int
    n_right: int
    frame_shift_ms: int = 10
    subsample: int = 4

    @property
    def window(self) -> int:
        return self.n_left + self.n_center + self.n_right

    @property
    def rows_per_chunk(self) -> int:
        return self.n_center // self.subsample

    def problems(self) -> List[str]:
        errors = []
        if self.subsample < 1:
            errors.append("subsample must be >= 1")
            return errors
        if self.n_center < self.subsample:
            errors.append(f"n_center={self.n_center} must be >= subsample={self.subsample}")
        if self.n_left < 0 or self.n_right < 0:
            errors.append("n_left and n_right must be >= 0")
        for name in ("n_left", "n_center", "n_right"):
            if getattr(self, name) % self.subsample:
                errors.append(f"{name}={getattr(self, name)} is not a multiple of subsample={self.subsample}")
        if self.frame_shift_ms <= 0:
            errors.append("frame_shift_ms must be > 0")
        return errors

    def validate(self) -> "ChunkConfig":
        errors = self.problems()
        if errors:
            raise ConfigurationError("invalid chunk config:\n- " + "\n- ".join(errors))
        return self


@dataclass(frozen=True)
class BeamConfig:
    beam: float = 16.0
    max_active: int = 200
    acoustic_scale: float = 1.0
    word_insertion_penalty: float = 0.0
    # distinct word histories kept per graph state; bounds finalize(n)
    nbest: int = 5

    def problems(self) -> List[str]:
        errors = []
        if not self.beam > 0:
            errors.append("beam must be > 0")
        if self.max_active < 1:
            errors.append("max_active must be >= 1")
        if not self.acoustic_scale > 0:
            errors.append("acoustic_scale must be > 0")
        if self.nbest < 1:
            errors.append("nbest must be >= 1")
        return errors

    def validate(self) -> "BeamConfig":
        errors = self.problems()
        if errors:
            raise ConfigurationError("invalid beam config:\n- " + "\n- ".join(errors))
        return self

    @classmethod
    def unpruned(cls, nbest: int = 5) -> "BeamConfig":
        return cls(beam=math.inf, max_active=10**9, nbest=nbest)


@dataclass(frozen=True)
class Hypothesis:
    words: Tuple[str, ...]
    units: LabelSequence
    graph_score: float
    acoustic_score: float

    @property
    def cost(self) -> float:
        return self.graph_score + self.acoustic_score

    @property
    def text(self) -> str:
        return "".join(self.words)


@dataclass(frozen=True)
class NBestList:
    utt_id: str
    hypotheses: Tuple[Hypothesis, ...] = ()

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __iter__(self) -> Iterator[Hypothesis]:
        return iter(self.hypotheses)

    def __getitem__(self, i: int) -> Hypothesis:
        return self.hypotheses[i]

    @property
    def best(self) -> Optional[Hypothesis]:
        return self.hypotheses[0] if self.hypotheses else None

    def truncate(self, n: int) -> "NBestList":
        return replace(self, hypotheses=self.hypotheses[:n])


@dataclass(frozen=True)
class FusedHypothesis:
    words: Tuple[str, ...]
    units: LabelSequence
    first_pass_score: float
    rescore: float
    final_score: float
    rank_first_pass: int = 0
    graph_score: float = 0.0
    acoustic_score: float = 0.0

    @property
    def text(self) -> str:
        return "".join(self.words)


@dataclass
class UtteranceResult:
    """Per-utterance trace row of a pipeline run."""

    utt_id: str
    reference: str
    first_pass: str
    final: str
    nbest: NBestList
    fused: List[FusedHypothesis] = field(default_factory=list)
    decode_seconds: float = 0.0
    rescore_seconds: float = 0.0
    audio_ms: float = 0.0


# =========================================================
# FEED
# =========================================================
@dataclass(frozen=True)
class FeedStatus:
    ok: bool
    reason: str
    utterances: int = 0
    units: int = 0
    missing: Tuple[str, ...] = ()


@dataclass(frozen=True)
class FeedSnapshot:
    data_dir: str
    utterances: int
    frames: int
    audio_ms: float
    longest_utt: str = ""
