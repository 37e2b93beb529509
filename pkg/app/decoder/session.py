from __future__ import annotations

import logging
import weakref
from collections import deque
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from app.ctc.posteriors import PosteriorMatrix
from app.data.models import BeamConfig, ChunkConfig, Hypothesis, NBestList
from app.decoder.chunking import cut_window
from app.decoder.scorers import AcousticScorer
from app.errors import ConfigurationError, EmptyResultError, SessionStateError
from app.fst.wfst import EPSILON, Wfst
from app.fst.weight import INF

logger = logging.getLogger(__name__)

# (ilabel, olabel, weight, nextstate)
FlatArc = Tuple[int, int, float, int]
# (cost, graph cost, acoustic cost, history id, unit chain, last token)
Token = Tuple[float, float, float, int, Optional[tuple], int]


# =========================================================
# GRAPH VIEW
# =========================================================
class DecodingGraph:
    """Read-only arc tables of a search graph, split into emitting and epsilon arcs."""

    _cache: "weakref.WeakKeyDictionary[Wfst, DecodingGraph]" = weakref.WeakKeyDictionary()

    def __init__(self, fst: Wfst):
        if fst.start is None:
            raise ConfigurationError("search graph has no start state")
        self.fst = fst
        self.start = fst.start
        self.emitting: List[List[FlatArc]] = []
        self.epsilon: List[List[FlatArc]] = []
        for s in fst.states():
            emit, eps = [], []
            for arc in fst.arcs(s):
                flat = (arc.ilabel, arc.olabel, arc.weight, arc.nextstate)
                (eps if arc.ilabel == EPSILON else emit).append(flat)
            self.emitting.append(emit)
            self.epsilon.append(eps)
        self.finals = [fst.final(s) for s in fst.states()]
        self.words = fst.osymbols

    @classmethod
    def of(cls, fst: Union[Wfst, "DecodingGraph"]) -> "DecodingGraph":
        if isinstance(fst, DecodingGraph):
            return fst
        graph = cls._cache.get(fst)
        if graph is None:
            graph = cls._cache[fst] = cls(fst)
        return graph

    def word(self, label: int) -> str:
        return self.words.symbol(label) if self.words is not None else str(label)


class _Histories:
    """Interned word histories: id 0 is the empty history."""

    def __init__(self):
        self._parent: List[int] = [-1]
        self._word: List[int] = [EPSILON]
        self._ids: Dict[Tuple[int, int], int] = {}

    def extend(self, hist: int, word: int) -> int:
        key = (hist, word)
        found = self._ids.get(key)
        if found is None:
            found = self._ids[key] = len(self._parent)
            self._parent.append(hist)
            self._word.append(word)
        return found

    def labels(self, hist: int) -> Tuple[int, ...]:
        out = []
        while hist > 0:
            out.append(self._word[hist])
            hist = self._parent[hist]
        return tuple(reversed(out))


def _unroll(chain: Optional[tuple]) -> Tuple[int, ...]:
    out = []
    while chain is not None:
        out.append(chain[0])
        chain = chain[1]
    return tuple(reversed(out))


# =========================================================
# SESSION
# =========================================================
class DecodeSession:
    """
    One utterance of chunked token passing over a shared search graph.

    Every graph state keeps up to `beam.nbest` tokens with distinct word
    histories, so the final n-best list holds exact distinct word
    sequences for n <= beam.nbest.
    """

    def __init__(
        self,
        graph: Union[Wfst, DecodingGraph],
        chunks: ChunkConfig,
        beam: BeamConfig,
        scorer: Optional[AcousticScorer] = None,
        utt_id: str = "",
    ):
        self.graph = DecodingGraph.of(graph)
        self.chunks = chunks.validate()
        self.beam = beam.validate()
        self.scorer = scorer
        self.utt_id = utt_id

        self._hist = _Histories()
        self._tokens: Dict[int, Dict[int, Token]] = {}
        self._buffer: Optional[np.ndarray] = None
        self._buffer_offset = 0
        self._received = 0
        self.watermark = 0
        self.frames_decoded = 0
        self.finalized = False

        start: Token = (0.0, 0.0, 0.0, 0, None, 0)
        tokens = {self.graph.start: {0: start}}
        self._closure(tokens)
        self._tokens = self._prune(tokens)

    # =====================================================
    # INSPECTION
    # =====================================================
    def active_tokens(self) -> Dict[int, float]:
        """Graph state -> best token cost."""
        return {s: min(t[0] for t in entries.values()) for s, entries in self._tokens.items()}

    @property
    def num_active(self) -> int:
        return len(self._tokens)

    # =====================================================
    # INPUT
    # =====================================================
    def push_frames(self, frames: np.ndarray) -> int:
        """Buffer input frames; decode every window whose center and right context are complete."""
        if self.finalized:
            raise SessionStateError("push_frames called after finalize")
        if self.scorer is None:
            raise ConfigurationError("push_frames needs an acoustic scorer")
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ConfigurationError(f"frames must be a 2-d array, got shape {frames.shape}")
        if frames.shape[0] == 0:
            return 0
        self._buffer = frames if self._buffer is None else np.vstack([self._buffer, frames])
        self._received += frames.shape[0]

        c = self.chunks
        consumed = 0
        while self._received >= self.watermark + c.n_center + c.n_right:
            consumed += self._decode_window(c.n_center)
        self._drop_consumed()
        return consumed

    def push_posteriors(self, rows: np.ndarray) -> int:
        """Advance directly over posterior rows, bypassing windows and the scorer."""
        if self.finalized:
            raise SessionStateError("push_posteriors called after finalize")
        rows = rows.values if isinstance(rows, PosteriorMatrix) else np.asarray(rows, dtype=np.float64)
        self._advance(rows)
        return rows.shape[0]

    def _decode_window(self, valid: int) -> int:
        c = self.chunks
        window = cut_window(self._buffer, self._buffer_offset, self.watermark, c, valid)
        rows = np.asarray(self.scorer.score(window), dtype=np.float64)
        if rows.shape[0] != c.rows_per_chunk:
            raise ConfigurationError(
                f"acoustic scorer returned {rows.shape[0]} rows, expected {c.rows_per_chunk}"
            )
        rows = rows[: -(-valid // c.subsample)]
        self._advance(rows)
        self.watermark += c.n_center
        return rows.shape[0]

    def _drop_consumed(self) -> None:
        keep_from = self.watermark - self.chunks.n_left
        if self._buffer is not None and keep_from > self._buffer_offset:
            self._buffer = self._buffer[keep_from - self._buffer_offset :]
            self._buffer_offset = keep_from

    # =====================================================
    # SEARCH
    # =====================================================
    @staticmethod
    def _put(tokens: Dict[int, Dict[int, Token]], state: int, tok: Token) -> bool:
        entries = tokens.get(state)
        if entries is None:
            tokens[state] = {tok[3]: tok}
            return True
        old = entries.get(tok[3])
        if old is not None and old[0] <= tok[0]:
            return False
        entries[tok[3]] = tok
        return True

    def _advance(self, rows: np.ndarray) -> None:
        graph = self.graph
        scale = self.beam.acoustic_scale
        wip = self.beam.word_insertion_penalty
        for row in rows:
            costs = (-scale * row).tolist()
            nxt: Dict[int, Dict[int, Token]] = {}
            for s, entries in self._tokens.items():
                toks = list(entries.values())
                for il, ol, w, dst in graph.emitting[s]:
                    ac = costs[il - 1]
                    if ac == INF:
                        continue
                    g_add = w + wip if ol != EPSILON else w
                    unit = il - 1
                    for cost, g, a, h, units, last in toks:
                        h2 = self._hist.extend(h, ol) if ol != EPSILON else h
                        units2 = (unit, units) if unit != 0 and unit != last else units
                        self._put(nxt, dst, (cost + ac + g_add, g + g_add, a + ac, h2, units2, unit))
            self._closure(nxt)
            self._tokens = self._prune(nxt)
            self.frames_decoded += 1

    def _closure(self, tokens: Dict[int, Dict[int, Token]]) -> None:
        eps = self.graph.epsilon
        wip = self.beam.word_insertion_penalty
        queue = deque(s for s in sorted(tokens) if eps[s])
        queued = set(queue)
        while queue:
            s = queue.popleft()
            queued.discard(s)
            toks = list(tokens[s].values())
            for _, ol, w, dst in eps[s]:
                g_add = w + wip if ol != EPSILON else w
                changed = False
                for cost, g, a, h, units, last in toks:
                    h2 = self._hist.extend(h, ol) if ol != EPSILON else h
                    if self._put(tokens, dst, (cost + g_add, g + g_add, a, h2, units, last)):
                        changed = True
                if changed and eps[dst] and dst not in queued:
                    queued.add(dst)
                    queue.append(dst)

    def _prune(self, tokens: Dict[int, Dict[int, Token]]) -> Dict[int, Dict[int, Token]]:
        if not tokens:
            return {}
        best = min(t[0] for entries in tokens.values() for t in entries.values())
        threshold = best + self.beam.beam
        cap = self.beam.nbest
        kept: List[Tuple[float, int, List[Token]]] = []
        for s, entries in tokens.items():
            survivors = sorted((t for t in entries.values() if t[0] <= threshold), key=lambda t: (t[0], t[3]))
            if survivors:
                kept.append((survivors[0][0], s, survivors[:cap]))
        if len(kept) > self.beam.max_active:
            kept.sort(key=lambda k: (k[0], k[1]))
            kept = kept[: self.beam.max_active]
        kept.sort(key=lambda k: k[1])
        return {s: {t[3]: t for t in toks} for _, s, toks in kept}

    # =====================================================
    # OUTPUT
    # =====================================================
    def _hypothesis(self, tok: Token, final: float = 0.0) -> Hypothesis:
        words = tuple(self.graph.word(label) for label in self._hist.labels(tok[3]))
        return Hypothesis(words, _unroll(tok[4]), graph_score=tok[1] + final, acoustic_score=tok[2])

    def finalize(self, n: Optional[int] = None) -> NBestList:
        """
        Flush the buffered tail chunk by chunk (zero-padded), apply final weights and
        return up to `n` distinct word sequences, cheapest first.
        """
        n = self.beam.nbest if n is None else n
        if n < 1:
            raise ConfigurationError("finalize: n must be >= 1")
        if n > self.beam.nbest:
            raise ConfigurationError(
                f"finalize: n={n} exceeds the per-state history capacity nbest={self.beam.nbest}"
            )
        if self.finalized:
            raise SessionStateError("finalize called twice")
        while self._received > self.watermark:
            self._decode_window(min(self._received - self.watermark, self.chunks.n_center))
        self.finalized = True
        self._buffer = None

        best: Dict[int, Tuple[float, Token, float]] = {}
        for s, entries in self._tokens.items():
            f = self.graph.finals[s]
            if f == INF:
                continue
            for tok in entries.values():
                total = tok[0] + f
                old = best.get(tok[3])
                if old is None or total < old[0]:
                    best[tok[3]] = (total, tok, f)

        if not best:
            partial = None
            live = [t for entries in self._tokens.values() for t in entries.values()]
            if live:
                partial = self._hypothesis(min(live, key=lambda t: (t[0], t[3])))
            raise EmptyResultError(
                f"{self.utt_id or 'utterance'}: no token reached a final state after {self.frames_decoded} frames",
                best_partial=partial,
            )

        scored = sorted((self._hypothesis(tok, f) for _, tok, f in best.values()), key=lambda h: (h.cost, h.words))
        ranked = tuple(scored[:n])
        logger.debug("[DECODE] %s: %d frames, %d hypotheses", self.utt_id, self.frames_decoded, len(ranked))
        return NBestList(self.utt_id, ranked)


def session_start(
    graph: Union[Wfst, DecodingGraph],
    chunks: ChunkConfig,
    beam: BeamConfig,
    scorer: Optional[AcousticScorer] = None,
    utt_id: str = "",
) -> DecodeSession:
    return DecodeSession(graph, chunks, beam, scorer, utt_id)


def decode_posteriors(
    graph: Union[Wfst, DecodingGraph],
    post: PosteriorMatrix,
    beam: BeamConfig,
    n: Optional[int] = None,
    utt_id: str = "",
) -> NBestList:
    """Single-shot decode of a whole posterior matrix."""
    session = DecodeSession(graph, ChunkConfig(0, 4, 0), beam, None, utt_id)
    session.push_posteriors(post)
    return session.finalize(n)


def decode_streaming(
    graph: Union[Wfst, DecodingGraph],
    features: np.ndarray,
    chunks: ChunkConfig,
    beam: BeamConfig,
    scorer: AcousticScorer,
    n: Optional[int] = None,
    utt_id: str = "",
    push_size: Optional[int] = None,
) -> NBestList:
    """Feed `features` in pieces of `push_size` frames (one window's worth by default)."""
    session = DecodeSession(graph, chunks, beam, scorer, utt_id)
    step = push_size or chunks.window
    for lo in range(0, features.shape[0], step):
        session.push_frames(features[lo : lo + step])
    return session.finalize(n)
