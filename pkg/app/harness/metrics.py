from __future__ import annotations

import time
from dataclasses import dataclass, fields
from typing import Callable, Iterable, List, Sequence

import numpy as np

from app.errors import ConfigurationError


@dataclass
class EvalReport:
    utterances: int = 0
    ref_chars: int = 0
    hyp_chars: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    # utterances whose reference was empty; their insertions still count
    empty_references: int = 0
    processing_s: float = 0.0
    audio_ms: float = 0.0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def cer(self) -> float:
        if self.ref_chars == 0:
            return float(self.errors)
        return self.errors / self.ref_chars

    @property
    def rtf(self) -> float:
        return rtf(self.processing_s, self.audio_ms) if self.audio_ms > 0 else 0.0

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    @classmethod
    def combine(cls, reports: Iterable["EvalReport"]) -> "EvalReport":
        total = cls()
        for r in reports:
            total = total.merge(r)
        return total

    def to_lines(self) -> List[str]:
        """Machine-readable key=value lines."""
        return [
            f"utterances={self.utterances}",
            f"ref_chars={self.ref_chars}",
            f"hyp_chars={self.hyp_chars}",
            f"substitutions={self.substitutions}",
            f"deletions={self.deletions}",
            f"insertions={self.insertions}",
            f"empty_references={self.empty_references}",
            f"cer={self.cer:.6f}",
            f"rtf={self.rtf:.6f}",
        ]

    def summary(self) -> str:
        return (
            f"CER {100 * self.cer:.2f}% [{self.errors} / {self.ref_chars}, "
            f"{self.substitutions} sub, {self.deletions} del, {self.insertions} ins] "
            f"over {self.utterances} utterances, RTF {self.rtf:.4f}"
        )


# =========================================================
# EDIT DISTANCE
# =========================================================
def _distance_table(ref: Sequence[str], hyp: Sequence[str]) -> np.ndarray:
    d = np.zeros((len(ref) + 1, len(hyp) + 1), dtype=np.int64)
    d[:, 0] = np.arange(len(ref) + 1)
    d[0, :] = np.arange(len(hyp) + 1)
    for i in range(1, len(ref) + 1):
        for j in range(1, len(hyp) + 1):
            sub = d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i, j] = min(sub, d[i - 1, j] + 1, d[i, j - 1] + 1)
    return d


def edit_ops(ref: Sequence[str], hyp: Sequence[str]) -> List[str]:
    """
    Minimal edit script as a list of "=", "S", "D", "I", in reference
    order. The backtrace takes the diagonal whenever it is optimal, so a
    substitution is never split into a deletion and an insertion.
    """
    d = _distance_table(ref, hyp)
    ops: List[str] = []
    i, j = len(ref), len(hyp)
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = ref[i - 1] == hyp[j - 1]
            if d[i, j] == d[i - 1, j - 1] + (not same):
                ops.append("=" if same else "S")
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append("D")
            i -= 1
        else:
            ops.append("I")
            j -= 1
    ops.reverse()
    return ops


def cer(ref: Sequence[str], hyp: Sequence[str]) -> EvalReport:
    ops = edit_ops(ref, hyp)
    return EvalReport(
        utterances=1,
        ref_chars=len(ref),
        hyp_chars=len(hyp),
        substitutions=ops.count("S"),
        deletions=ops.count("D"),
        insertions=ops.count("I"),
        empty_references=int(len(ref) == 0),
    )


# =========================================================
# REAL-TIME FACTOR
# =========================================================
def rtf(elapsed_s: float, audio_ms: float) -> float:
    if audio_ms <= 0:
        raise ConfigurationError(f"audio duration must be > 0 ms, got {audio_ms}")
    return 1000.0 * elapsed_s / audio_ms


def measure_rtf(run: Callable[[], object], audio_ms: float, repeats: int = 5) -> float:
    """Median RTF of `repeats` single-threaded runs of `run`."""
    if audio_ms <= 0:
        raise ConfigurationError(f"audio duration must be > 0 ms, got {audio_ms}")
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run()
        times.append(time.perf_counter() - t0)
    return rtf(float(np.median(times)), audio_ms)
