from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.ctc.posteriors import PosteriorMatrix, log_softmax
from app.data.feed import (
    CHAR_LM_FILE,
    LEXICON_FILE,
    LM_FILE,
    POSTERIOR_DIR,
    REFERENCES_FILE,
    UNIFORM_LM_FILE,
    UNITS_FILE,
    write_references,
)
from app.data.models import LabelSequence
from app.errors import ConfigurationError
from app.graph.arpa import BOS, EOS, ArpaModel, Entry, Ngram
from app.graph.lexicon import Lexicon, TokenInventory

logger = logging.getLogger(__name__)

UNIT_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
# log-odds of the aligned label against the rest of a frame
SHARPNESS = 13.8
SUCCESSOR_PROB = 0.7
DISCOUNT = 0.5
NO_PROB = -99.0
CORPUS_PER_WORD = 30


# =========================================================
# LANGUAGE MODELS
# =========================================================
def train_bigram_arpa(sentences: Sequence[Sequence[str]], vocab: Sequence[str]) -> ArpaModel:
    """
    Bigram with absolute discounting over add-one unigrams. Every history
    seen in training gets the backoff weight that renormalises its row.
    """
    tokens = list(vocab) + [EOS]
    uni_counts: Counter = Counter()
    bi_counts: Dict[str, Counter] = {}
    for sent in sentences:
        chain = [BOS] + list(sent) + [EOS]
        uni_counts.update(chain[1:])
        for h, w in zip(chain, chain[1:]):
            bi_counts.setdefault(h, Counter())[w] += 1

    total = sum(uni_counts.values())
    p_uni = {w: (uni_counts[w] + 1) / (total + len(tokens)) for w in tokens}

    bigrams: Dict[Ngram, Entry] = {}
    bows: Dict[str, float] = {}
    for h in [BOS] + list(vocab):
        seen = bi_counts.get(h)
        if not seen:
            continue
        c_h = sum(seen.values())
        for w in tokens:
            if w in seen:
                bigrams[(h, w)] = (math.log10((seen[w] - DISCOUNT) / c_h), None)
        left = DISCOUNT * len(seen) / c_h
        denom = 1.0 - sum(p_uni[w] for w in seen)
        bows[h] = math.log10(left / denom) if denom > 1e-12 else 0.0

    unigrams: Dict[Ngram, Entry] = {(BOS,): (NO_PROB, bows.get(BOS, 0.0))}
    for w in vocab:
        unigrams[(w,)] = (math.log10(p_uni[w]), bows.get(w))
    unigrams[(EOS,)] = (math.log10(p_uni[EOS]), None)
    return ArpaModel(max_order=2, ngrams={1: unigrams, 2: bigrams})


def uniform_arpa(vocab: Sequence[str]) -> ArpaModel:
    """Unigram model giving every word and end-of-sentence the same probability."""
    logp = -math.log10(len(vocab) + 1)
    unigrams: Dict[Ngram, Entry] = {(BOS,): (NO_PROB, None)}
    for w in list(vocab) + [EOS]:
        unigrams[(w,)] = (logp, None)
    return ArpaModel(max_order=1, ngrams={1: unigrams})


# =========================================================
# TASK
# =========================================================
@dataclass
class SyntheticTask:
    inventory: TokenInventory
    lexicon: Lexicon
    arpa: ArpaModel
    uniform_arpa: ArpaModel
    char_arpa: ArpaModel
    references: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    posteriors: Dict[str, PosteriorMatrix] = field(default_factory=dict)
    subsample: int = 4
    frame_shift_ms: int = 10

    @property
    def utterance_ids(self) -> List[str]:
        return list(self.references)

    def text(self, utt_id: str) -> str:
        return "".join(self.references[utt_id])

    def units(self, utt_id: str) -> LabelSequence:
        return self.inventory.encode(self.lexicon.spell(self.references[utt_id]))

    def audio_ms(self, utt_id: str) -> float:
        return float(self.posteriors[utt_id].frames * self.subsample * self.frame_shift_ms)

    def write(self, out_dir: Path | str) -> Path:
        out = Path(out_dir)
        (out / POSTERIOR_DIR).mkdir(parents=True, exist_ok=True)
        self.inventory.write(out / UNITS_FILE)
        self.lexicon.write(out / LEXICON_FILE)
        self.arpa.write(out / LM_FILE)
        self.uniform_arpa.write(out / UNIFORM_LM_FILE)
        self.char_arpa.write(out / CHAR_LM_FILE)
        write_references({u: self.text(u) for u in self.utterance_ids}, out / REFERENCES_FILE)
        for utt_id, post in self.posteriors.items():
            post.write(out / POSTERIOR_DIR / f"{utt_id}.post")
        logger.info("[FIXTURE] wrote %d utterances to %s", len(self.posteriors), out)
        return out


# =========================================================
# GENERATION
# =========================================================
def _make_words(rng: np.random.Generator, vocab_size: int, units: Sequence[str], word_len: Tuple[int, int]) -> List[str]:
    """Distinct, prefix-free spellings, so a unit string splits into words one way only."""
    lo, hi = word_len
    words: List[str] = []
    for _ in range(1000 * vocab_size):
        if len(words) == vocab_size:
            break
        n = int(rng.integers(lo, hi + 1))
        cand = "".join(units[i] for i in rng.integers(len(units), size=n))
        if any(w.startswith(cand) or cand.startswith(w) for w in words):
            continue
        words.append(cand)
    if len(words) < vocab_size:
        raise ConfigurationError(
            f"cannot spell {vocab_size} prefix-free words of length {lo}-{hi} over {len(units)} units"
        )
    return words


def _sentence(rng: np.random.Generator, words: List[str], successor: Dict[str, str], length: int) -> Tuple[str, ...]:
    w = words[int(rng.integers(len(words)))]
    out = [w]
    while len(out) < length:
        if rng.random() < SUCCESSOR_PROB:
            w = successor[w]
        else:
            w = words[int(rng.integers(len(words)))]
        out.append(w)
    return tuple(out)


def _alignment(rng: np.random.Generator, labels: LabelSequence, min_frames: int) -> Tuple[List[int], List[Tuple[int, int, int]]]:
    """Frame labels plus (start, stop, unit) segments: 2-3 frames per unit, blanks around and between repeats."""
    frames = [0]
    segments = []
    prev = 0
    for u in labels:
        if u == prev:
            frames.append(0)
        start = len(frames)
        frames.extend([u] * int(rng.integers(2, 4)))
        segments.append((start, len(frames), u))
        prev = u
    frames.append(0)
    frames.extend([0] * max(0, min_frames - len(frames)))
    return frames, segments


def synthesize_posteriors(
    rng: np.random.Generator,
    labels: LabelSequence,
    tokens: int,
    noise: float,
    min_frames: int = 0,
) -> PosteriorMatrix:
    """
    Peaky posteriors around a sampled alignment. Each unit segment gets
    one competing unit whose logit grows with `noise`; at noise 0 it stays
    12 below the aligned label.
    """
    frames, segments = _alignment(rng, labels, min_frames)
    logits = np.zeros((len(frames), tokens))
    logits[np.arange(len(frames)), frames] = SHARPNESS
    for start, stop, u in segments:
        others = [k for k in range(1, tokens) if k != u]
        rival = others[int(rng.integers(len(others)))]
        logits[start:stop, rival] = SHARPNESS - 12.0 + 24.0 * noise * rng.random()
    # stored at float32 so the in-memory matrix equals what a reader gets back
    return PosteriorMatrix(log_softmax(logits).astype(np.float32).astype(np.float64))


def generate_fixture(
    seed: int,
    vocab_size: int,
    utterances: int,
    noise: float,
    words_per_utt: Tuple[int, int] = (2, 4),
    word_len: Tuple[int, int] = (2, 3),
    num_units: Optional[int] = None,
    min_frames: int = 0,
    subsample: int = 4,
    frame_shift_ms: int = 10,
) -> SyntheticTask:
    if vocab_size < 2:
        raise ConfigurationError("vocab_size must be >= 2")
    if utterances < 1:
        raise ConfigurationError("utterances must be >= 1")
    if noise < 0:
        raise ConfigurationError("noise must be >= 0")
    if num_units is None:
        num_units = max(4, math.ceil(math.sqrt(2 * vocab_size)) + 2)
    if not 2 <= num_units <= len(UNIT_ALPHABET):
        raise ConfigurationError(f"num_units must lie in [2, {len(UNIT_ALPHABET)}]")

    rng = np.random.default_rng(seed)
    inventory = TokenInventory(tuple(UNIT_ALPHABET[:num_units]))
    words = _make_words(rng, vocab_size, inventory.units, word_len)
    lexicon = Lexicon()
    for w in words:
        lexicon.add(w, tuple(w))

    successor = {}
    for w in words:
        others = [x for x in words if x != w]
        successor[w] = others[int(rng.integers(len(others)))]

    lo, hi = words_per_utt
    corpus = [
        _sentence(rng, words, successor, int(rng.integers(lo, hi + 1)))
        for _ in range(CORPUS_PER_WORD * vocab_size)
    ]
    arpa = train_bigram_arpa(corpus, words)
    char_arpa = train_bigram_arpa([lexicon.spell(s) for s in corpus], inventory.units)

    task = SyntheticTask(
        inventory=inventory,
        lexicon=lexicon,
        arpa=arpa,
        uniform_arpa=uniform_arpa(words),
        char_arpa=char_arpa,
        subsample=subsample,
        frame_shift_ms=frame_shift_ms,
    )
    for i in range(utterances):
        utt_id = f"utt{i:04d}"
        task.references[utt_id] = _sentence(rng, words, successor, int(rng.integers(lo, hi + 1)))
        task.posteriors[utt_id] = synthesize_posteriors(
            rng, task.units(utt_id), inventory.token_count, noise, min_frames
        )
    logger.info(
        "[FIXTURE] seed=%d vocab=%d units=%d utterances=%d noise=%.2f",
        seed, vocab_size, num_units, utterances, noise,
    )
    return task
