from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from app.data.models import FusedHypothesis, Hypothesis, NBestList
from app.errors import FormatError


# =========================================================
# N-BEST: "utt_id rank graph_score acoustic_score word ..."
# =========================================================
def nbest_lines(nbest: NBestList) -> List[str]:
    return [
        " ".join([nbest.utt_id, str(rank), repr(h.graph_score), repr(h.acoustic_score), *h.words])
        for rank, h in enumerate(nbest, 1)
    ]


def parse_nbest(lines: Iterable[str]) -> List[NBestList]:
    """Utterances keep their first-seen order; rank restarts at 1 per utterance."""
    grouped: Dict[str, List[Hypothesis]] = {}
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 4:
            raise FormatError(f"n-best line {lineno}: expected 'utt_id rank graph_score acoustic_score words...'")
        utt, rank = parts[0], parts[1]
        try:
            graph, acoustic = float(parts[2]), float(parts[3])
            rank_no = int(rank)
        except ValueError as e:
            raise FormatError(f"n-best line {lineno}: {e}") from e
        hyps = grouped.setdefault(utt, [])
        if rank_no != len(hyps) + 1:
            raise FormatError(f"n-best line {lineno}: rank {rank_no} out of order for {utt}")
        hyps.append(Hypothesis(tuple(parts[4:]), (), graph, acoustic))
    return [NBestList(utt, tuple(hyps)) for utt, hyps in grouped.items()]


def write_nbest(nbests: Sequence[NBestList], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [line for nbest in nbests for line in nbest_lines(nbest)]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_nbest(path: Path | str) -> List[NBestList]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"n-best file not found: {path}")
    return parse_nbest(path.read_text(encoding="utf-8").splitlines())


# =========================================================
# RESCORED: n-best columns + "rescore final_score"
# =========================================================
def fused_lines(utt_id: str, fused: Sequence[FusedHypothesis]) -> List[str]:
    return [
        " ".join(
            [
                utt_id,
                str(rank),
                repr(h.graph_score),
                repr(h.acoustic_score),
                *h.words,
                repr(h.rescore),
                repr(h.final_score),
            ]
        )
        for rank, h in enumerate(fused, 1)
    ]


def write_fused(results: Dict[str, Sequence[FusedHypothesis]], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [line for utt, fused in results.items() for line in fused_lines(utt, fused)]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
