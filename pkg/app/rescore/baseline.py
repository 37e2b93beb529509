from __future__ import annotations

import logging
from typing import Any, List, Optional, Tuple

import numpy as np

from app.ctc.char_lm import EOS_INDEX, CharLmScorer
from app.ctc.loss import NEG_INF, Posteriors, as_array
from app.ctc.search import CtcPrefixScorer
from app.data.models import LabelSequence
from app.errors import ConfigurationError
from app.rescore.scorers import SequenceScorer

logger = logging.getLogger(__name__)


def joint_beam_search_baseline(
    post: Posteriors,
    scorer: Optional[SequenceScorer],
    beam: int = 10,
    ctc_weight: float = 0.5,
    lm: Optional[CharLmScorer] = None,
    lm_weight: float = 0.3,
    handle: Any = None,
    utt_id: str = "",
    max_len: Optional[int] = None,
) -> LabelSequence:
    """
    Autoregressive joint CTC/attention beam search.

    Each live prefix is extended by every label (end-of-sequence in slot 0)
    with score increments
        ctc_weight * (ctc prefix score delta)
      + (1 - ctc_weight) * scorer log-prob
      + lm_weight * LM log-prob,
    calling the scorer once per live prefix per step. Increments are
    never positive, so the search stops as soon as the best finished
    hypothesis is at least as good as the best live one.
    """
    if beam < 1:
        raise ConfigurationError("joint beam search: beam must be >= 1")
    if not 0.0 <= ctc_weight <= 1.0:
        raise ConfigurationError(f"ctc_weight must lie in [0, 1], got {ctc_weight}")
    use_att = ctc_weight < 1.0
    if use_att and scorer is None:
        raise ConfigurationError("joint beam search needs a sequence scorer when ctc_weight < 1")
    if use_att and handle is None:
        handle = scorer.prepare(utt_id)
    use_lm = lm is not None and lm_weight != 0.0

    lp = as_array(post)
    ctc = CtcPrefixScorer(lp)
    max_len = lp.shape[0] if max_len is None else max_len

    # (score, prefix, ctc prefix score)
    live: List[Tuple[float, LabelSequence, float]] = [(0.0, (), 0.0)]
    ended: List[Tuple[float, LabelSequence]] = []
    for step in range(max_len + 1):
        candidates: List[Tuple[float, LabelSequence, int, float]] = []
        for score, prefix, ctc_prev in live:
            ctc_row = ctc.next_scores(prefix)
            total = np.full(ctc_row.shape, score)
            if ctc_weight > 0.0:
                with np.errstate(invalid="ignore"):
                    total += ctc_weight * (ctc_row - ctc_prev)
            if use_att:
                total += (1.0 - ctc_weight) * np.asarray(scorer.next_logprobs(handle, prefix))
            if use_lm:
                total += lm_weight * lm.logprobs(prefix)
            if step == max_len:
                keep = [EOS_INDEX]
            else:
                keep = range(len(total))
            for k in keep:
                if total[k] > NEG_INF:
                    candidates.append((float(total[k]), prefix, k, float(ctc_row[k])))

        candidates.sort(key=lambda c: (-c[0], c[1] + ((c[2],) if c[2] != EOS_INDEX else ())))
        live = []
        for total, prefix, k, ctc_score in candidates[:beam]:
            if k == EOS_INDEX:
                ended.append((total, prefix))
            else:
                live.append((total, prefix + (k,), ctc_score))
        ctc.forget([p for _, p, _ in live])

        if not live:
            break
        if ended and max(s for s, _ in ended) >= live[0][0]:
            break

    if not ended:
        logger.warning("[BASELINE] %s: no hypothesis finished within %d steps", utt_id or "utterance", max_len)
        return ()
    best = min(ended, key=lambda e: (-e[0], e[1]))
    return best[1]
