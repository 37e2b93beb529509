from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.ctc.char_lm import EOS_INDEX, CharLmScorer
from app.ctc.loss import BLANK, NEG_INF, Posteriors, as_array
from app.data.models import Hypothesis, LabelSequence, NBestList
from app.errors import ConfigurationError
from app.graph.lexicon import TokenInventory

logger = logging.getLogger(__name__)


def _words(labels: LabelSequence, inventory: Optional[TokenInventory]) -> Tuple[str, ...]:
    return inventory.decode(labels) if inventory is not None else tuple(str(k) for k in labels)


# =========================================================
# PREFIX BEAM SEARCH (optionally with shallow fusion)
# =========================================================
def prefix_beam_search(
    post: Posteriors,
    beam: int = 10,
    lm: Optional[CharLmScorer] = None,
    lm_weight: float = 0.3,
    inventory: Optional[TokenInventory] = None,
    utt_id: str = "",
) -> NBestList:
    """
    CTC prefix beam search. Each prefix carries (blank-ending,
    label-ending) log-probabilities; an LM adds lm_weight * log p(label)
    once per emitted label, plus end-of-sequence when ranking the result.
    Ranking ties go to the lexicographically smaller label sequence.
    """
    if beam < 1:
        raise ConfigurationError("prefix_beam_search: beam must be >= 1")
    lp = as_array(post)
    fuse = lm is not None and lm_weight != 0.0
    V = lp.shape[1]

    lm_total: Dict[LabelSequence, float] = {(): 0.0}

    def lm_score(prefix: LabelSequence) -> float:
        if not fuse:
            return 0.0
        got = lm_total.get(prefix)
        if got is None:
            got = lm_score(prefix[:-1]) + float(lm.logprobs(prefix[:-1])[prefix[-1]])
            lm_total[prefix] = got
        return got

    live: Dict[LabelSequence, Tuple[float, float]] = {(): (0.0, NEG_INF)}
    for t in range(lp.shape[0]):
        row = lp[t]
        nxt: Dict[LabelSequence, List[float]] = {}

        def add(prefix: LabelSequence, slot: int, value: float) -> None:
            cell = nxt.get(prefix)
            if cell is None:
                cell = nxt[prefix] = [NEG_INF, NEG_INF]
            cell[slot] = np.logaddexp(cell[slot], value)

        for prefix, (pb, pnb) in live.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, 0, total + row[BLANK])
            last = prefix[-1] if prefix else None
            for k in range(1, V):
                ext = prefix + (k,)
                if k == last:
                    add(prefix, 1, pnb + row[k])
                    add(ext, 1, pb + row[k])
                else:
                    add(ext, 1, total + row[k])

        scored = []
        for prefix, (pb, pnb) in nxt.items():
            s = np.logaddexp(pb, pnb) + lm_weight * lm_score(prefix) if fuse else np.logaddexp(pb, pnb)
            if s > NEG_INF:
                scored.append((-s, prefix))
        scored.sort()
        live = {prefix: tuple(nxt[prefix]) for _, prefix in scored[:beam]}

    hyps = []
    for prefix, (pb, pnb) in live.items():
        acoustic = float(np.logaddexp(pb, pnb))
        lm_part = 0.0
        if fuse:
            lm_part = lm_weight * (lm_score(prefix) + float(lm.logprobs(prefix)[EOS_INDEX]))
        if acoustic + lm_part == NEG_INF:
            continue
        hyps.append(Hypothesis(_words(prefix, inventory), prefix, graph_score=-lm_part, acoustic_score=-acoustic))
    hyps.sort(key=lambda h: (h.cost, h.units))
    return NBestList(utt_id, tuple(hyps))


# =========================================================
# INCREMENTAL PREFIX PROBABILITY
# =========================================================
class CtcPrefixScorer:
    """
    Prefix probabilities log P(output starts with g) for one utterance.

    Per prefix it keeps the frame-wise log-probabilities of having emitted
    exactly g ending in a label (r_n) or in blank (r_b). A child table is
    built from its parent's; `next_scores` rates every label at once.
    """

    def __init__(self, post: Posteriors):
        self.lp = as_array(post)
        self.frames, self.tokens = self.lp.shape
        self._blank_cum = np.cumsum(self.lp[:, BLANK])
        self._states: Dict[LabelSequence, Tuple[np.ndarray, np.ndarray]] = {
            (): (np.full(self.frames, NEG_INF), self._blank_cum.copy())
        }

    def _phi(self, prefix: LabelSequence, labels: np.ndarray) -> np.ndarray:
        r_n, r_b = self._state(prefix)
        phi = np.full((self.frames, len(labels)), NEG_INF)
        if self.frames == 0:
            return phi
        phi[0] = 0.0 if not prefix else NEG_INF
        both = np.logaddexp(r_b[:-1], r_n[:-1])
        phi[1:] = both[:, None]
        if prefix:
            same = labels == prefix[-1]
            if same.any():
                phi[1:, same] = r_b[:-1, None]
        return phi

    def _state(self, prefix: LabelSequence) -> Tuple[np.ndarray, np.ndarray]:
        state = self._states.get(prefix)
        if state is not None:
            return state
        phi = self._phi(prefix[:-1], np.array([prefix[-1]]))[:, 0]
        x = self.lp[:, prefix[-1]]
        blank = self.lp[:, BLANK]
        r_n = np.full(self.frames, NEG_INF)
        r_b = np.full(self.frames, NEG_INF)
        if self.frames:
            r_n[0] = phi[0] + x[0]
        # frame by frame, so zero-probability entries only cut the paths through them
        for t in range(1, self.frames):
            r_n[t] = np.logaddexp(r_n[t - 1], phi[t]) + x[t]
            r_b[t] = np.logaddexp(r_n[t - 1], r_b[t - 1]) + blank[t]
        self._states[prefix] = (r_n, r_b)
        return r_n, r_b

    def full_score(self, prefix: Sequence[int]) -> float:
        """log P(output == prefix)."""
        prefix = tuple(prefix)
        if self.frames == 0:
            return 0.0 if not prefix else NEG_INF
        r_n, r_b = self._state(prefix)
        return float(np.logaddexp(r_n[-1], r_b[-1]))

    def next_scores(self, prefix: Sequence[int]) -> np.ndarray:
        """
        Row over the inventory: slot k >= 1 holds log P(starts with prefix + k),
        slot 0 holds log P(output == prefix).
        """
        prefix = tuple(prefix)
        out = np.full(self.tokens, NEG_INF)
        out[EOS_INDEX] = self.full_score(prefix)
        if self.frames == 0:
            return out
        labels = np.arange(1, self.tokens)
        a = self._phi(prefix, labels) + self.lp[:, 1:]
        out[1:] = np.logaddexp.reduce(a, axis=0)
        return out

    def score(self, prefix: Sequence[int]) -> float:
        """log P(output starts with prefix); 0 for the empty prefix."""
        prefix = tuple(prefix)
        if not prefix:
            return 0.0
        return float(self.next_scores(prefix[:-1])[prefix[-1]])

    def forget(self, keep: Sequence[LabelSequence]) -> None:
        """Drop cached tables except those of `keep` and their ancestors."""
        wanted = {()}
        for prefix in keep:
            for i in range(len(prefix) + 1):
                wanted.add(tuple(prefix[:i]))
        self._states = {p: s for p, s in self._states.items() if p in wanted}


def ctc_prefix_score(post: Posteriors, prefix: Sequence[int]) -> Tuple[float, CtcPrefixScorer]:
    """Prefix log-probability plus the scorer holding the incremental tables."""
    scorer = CtcPrefixScorer(post)
    return scorer.score(prefix), scorer
