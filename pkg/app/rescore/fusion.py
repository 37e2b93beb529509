from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.data.models import FusedHypothesis, Hypothesis, LabelSequence, NBestList
from app.errors import ConfigurationError, RescoreError
from app.rescore.scorers import SequenceScorer

logger = logging.getLogger(__name__)

DEFAULT_NBEST = 5


def choose_nbest_size(n: Optional[int] = None) -> int:
    """Hypotheses handed to the second pass; 5 unless configured."""
    if n is None:
        return DEFAULT_NBEST
    if n < 1:
        raise ConfigurationError(f"n-best size must be >= 1, got {n}")
    return n


def _weighted(weight: float, value: float) -> float:
    # a zero weight switches the term off even when the score is infinite
    return weight * value if weight != 0.0 else 0.0


def rescore_nbest(
    nbest: NBestList,
    scorer: SequenceScorer,
    alpha: float = 1.0,
    beta: float = 1.0,
    graph_only: bool = False,
    handle: Any = None,
    max_workers: int = 1,
    labels_of: Optional[Callable[[Hypothesis], LabelSequence]] = None,
) -> List[FusedHypothesis]:
    """
    Teacher-forced second pass: one scorer call per hypothesis, then
    final = alpha * first_pass + beta * rescore in nats, sorted ascending.
    Equal final scores keep first-pass order. A hypothesis whose scoring
    fails is dropped with a warning.
    """
    if len(nbest) == 0:
        raise RescoreError(f"{nbest.utt_id}: empty n-best list")
    if handle is None:
        handle = scorer.prepare(nbest.utt_id)
    labels_of = labels_of or (lambda h: h.units)

    def one(hyp: Hypothesis) -> Tuple[Optional[float], Optional[BaseException]]:
        try:
            logp = np.asarray(scorer.score(handle, labels_of(hyp)), dtype=np.float64)
            return -float(logp.sum()), None
        except Exception as e:  # noqa: BLE001
            return None, e

    if max_workers > 1 and len(nbest) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, nbest.hypotheses))
    else:
        results = [one(h) for h in nbest.hypotheses]

    fused: List[FusedHypothesis] = []
    for rank, (hyp, (rescore, err)) in enumerate(zip(nbest.hypotheses, results), 1):
        if err is not None:
            logger.warning("[RESCORE] %s: dropping rank %d %r: %s", nbest.utt_id, rank, hyp.text, err)
            continue
        first = hyp.graph_score if graph_only else hyp.cost
        fused.append(
            FusedHypothesis(
                words=hyp.words,
                units=labels_of(hyp),
                first_pass_score=first,
                rescore=rescore,
                final_score=_weighted(alpha, first) + _weighted(beta, rescore),
                rank_first_pass=rank,
                graph_score=hyp.graph_score,
                acoustic_score=hyp.acoustic_score,
            )
        )
    if not fused:
        raise RescoreError(f"{nbest.utt_id}: every hypothesis failed rescoring")
    fused.sort(key=lambda f: f.final_score)
    return fused

