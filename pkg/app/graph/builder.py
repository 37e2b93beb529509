from __future__ import annotations

import copy
import logging
from collections import Counter
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from app.errors import FormatError
from app.fst.ops import DEFAULT_DET_BUDGET, arcsort, compose, determinize, minimize, relabel, trim
from app.fst.symbols import SymbolTable
from app.fst.weight import INF
from app.fst.wfst import EPSILON, Wfst
from app.graph.arpa import BOS, EOS, UNK, ArpaModel, Ngram, to_cost
from app.graph.lexicon import Lexicon, TokenInventory

logger = logging.getLogger(__name__)

BACKOFF_SYMBOL = "#0"


def aux_symbol(k: int) -> str:
    return f"#{k}"


# =========================================================
# SYMBOL TABLES
# =========================================================
def word_table(arpa: ArpaModel, lexicon: Optional[Lexicon] = None, with_backoff: bool = False) -> SymbolTable:
    """
    Output vocabulary shared by L and G. With a lexicon, only words known
    to both sides survive; everything else is dropped with a warning.
    """
    lm_words = arpa.vocabulary
    if lexicon is None:
        words = lm_words
    else:
        spelled = set(lexicon.words)
        words = []
        for w in lm_words:
            if w in spelled:
                words.append(w)
            elif w == UNK:
                logger.warning("[GRAPH] dropping %s: the lexicon does not define it", UNK)
            else:
                logger.warning("[GRAPH] dropping LM word %r: not in the lexicon", w)
        in_lm = set(lm_words)
        oov = [w for w in lexicon.words if w not in in_lm]
        if oov:
            logger.warning("[GRAPH] dropping %d lexicon words absent from the LM: %s", len(oov), " ".join(oov[:10]))
    table = SymbolTable(words)
    if with_backoff:
        table.add_symbol(BACKOFF_SYMBOL)
    return table


def unit_table(inventory: TokenInventory, num_aux: int = 0) -> SymbolTable:
    """Lexicon units by inventory id, then #0..#num_aux."""
    table = inventory.unit_table()
    for k in range(num_aux + 1):
        table.add_symbol(aux_symbol(k))
    return table


# =========================================================
# G
# =========================================================
def _longest_context(ngram: Ngram, contexts: Set[Ngram]) -> Ngram:
    for i in range(len(ngram) + 1):
        if ngram[i:] in contexts:
            return ngram[i:]
    return ()


def build_g(
    arpa: ArpaModel,
    words: Optional[SymbolTable] = None,
    backoff_label: int = EPSILON,
) -> Wfst:
    """
    N-gram acceptor: one state per history, word arcs weighted in nats,
    backoff arcs labelled `backoff_label` (epsilon standalone, #0 inside
    the search graph). "</s>" becomes final weight. Words missing from
    `words` are left out.

    A history whose explicit n-gram costs more than backing off would
    let the tropical min undercut the ARPA score. Its backoff arc then
    leads to a copy of the lower state without those words, so every
    sentence scores exactly its chain probability.
    """
    words = words if words is not None else word_table(arpa)
    contexts: Set[Ngram] = {()}
    for order in range(2, arpa.max_order + 1):
        for ngram in arpa.ngrams.get(order, {}):
            for k in range(1, len(ngram)):
                contexts.add(ngram[:k])

    start_ctx: Ngram = (BOS,) if (BOS,) in contexts else ()
    ordered = [start_ctx] + sorted((c for c in contexts if c != start_ctx), key=lambda c: (len(c), c))
    state: Dict[Ngram, int] = {c: i for i, c in enumerate(ordered)}

    # per history: word -> (cost, label, next state); EOS keeps label None
    explicit: Dict[Ngram, Dict[str, Tuple[float, Optional[int], int]]] = {c: {} for c in ordered}
    dropped: Set[str] = set()
    for order in range(1, arpa.max_order + 1):
        for ngram, (logp, _) in arpa.ngrams.get(order, {}).items():
            history, word = ngram[:-1], ngram[-1]
            if history not in state or word == BOS:
                continue
            if word == EOS:
                explicit[history][word] = (to_cost(logp), None, -1)
                continue
            label = words.get(word)
            if label is None:
                dropped.add(word)
                continue
            explicit[history][word] = (to_cost(logp), label, state[_longest_context(ngram, contexts)])

    bow: Dict[Ngram, float] = {}
    for ctx in ordered:
        if not ctx:
            continue
        entry = arpa.entry(ctx)
        if entry is None or entry[1] is None:
            raise FormatError(f"history {' '.join(ctx)!r} has extensions but no backoff weight")
        bow[ctx] = to_cost(entry[1])

    def lower(ctx: Ngram) -> Ngram:
        return _longest_context(ctx[1:], contexts)

    @lru_cache(maxsize=None)
    def route(ctx: Ngram, word: str) -> float:
        """Cheapest way to read `word` from `ctx` over explicit and backoff arcs."""
        best = explicit[ctx][word][0] if word in explicit[ctx] else INF
        if ctx:
            best = min(best, bow[ctx] + route(lower(ctx), word))
        return best

    def shadowed(ctx: Ngram) -> FrozenSet[str]:
        if not ctx:
            return frozenset()
        below = lower(ctx)
        return frozenset(w for w, (cost, _, _) in explicit[ctx].items() if bow[ctx] + route(below, w) < cost)

    g = Wfst(words, words)
    g.add_states(len(ordered))
    g.set_start(0)

    def fill(s: int, ctx: Ngram, blocked: FrozenSet[str]) -> None:
        for word, (cost, label, dst) in explicit[ctx].items():
            if word in blocked:
                continue
            if label is None:
                g.set_final(s, cost)
            else:
                g.add_arc(s, label, label, cost, dst)

    copies: Dict[Tuple[Ngram, FrozenSet[str]], int] = {}

    def backoff_target(ctx: Ngram, blocked: FrozenSet[str]) -> int:
        if not blocked:
            return state[ctx]
        key = (ctx, blocked)
        if key not in copies:
            s = copies[key] = g.add_state()
            fill(s, ctx, blocked)
            if ctx:
                g.add_arc(s, backoff_label, backoff_label, bow[ctx], backoff_target(lower(ctx), blocked | shadowed(ctx)))
        return copies[key]

    for ctx in ordered:
        fill(state[ctx], ctx, frozenset())
    for ctx in ordered:
        if ctx:
            g.add_arc(state[ctx], backoff_label, backoff_label, bow[ctx], backoff_target(lower(ctx), shadowed(ctx)))

    if copies:
        logger.debug("[GRAPH] G added %d restricted backoff states", len(copies))
    if dropped:
        logger.debug("[GRAPH] G skipped %d words outside the word table", len(dropped))
    return g


# =========================================================
# L
# =========================================================
def assign_disambig(lexicon: Lexicon) -> List[int]:
    """
    Auxiliary index per pronunciation (0 = none). Homophones get #1, #2, ...
    and a spelling that is a proper prefix of another one also gets marked.
    """
    seqs = [p.units for p in lexicon.entries]
    counts = Counter(seqs)
    prefixes: Set[Tuple[str, ...]] = set()
    for s in set(seqs):
        for k in range(1, len(s)):
            prefixes.add(s[:k])

    next_aux: Dict[Tuple[str, ...], int] = {}
    out = []
    for s in seqs:
        if counts[s] > 1 or s in prefixes:
            next_aux[s] = next_aux.get(s, 0) + 1
            out.append(next_aux[s])
        else:
            out.append(0)
    return out


def build_l(
    lexicon: Lexicon,
    inventory: TokenInventory,
    words: SymbolTable,
    disambig: bool = True,
    units: Optional[SymbolTable] = None,
) -> Wfst:
    """
    Unit sequences -> words, as a closure around state 0. The word is
    emitted on the first unit; pronunciation cost sits on the same arc.
    With `disambig`, marked pronunciations end in #k and a #0:#0 loop lets
    G's backoff arcs through.
    """
    lexicon.check_units(inventory)
    aux = assign_disambig(lexicon) if disambig else [0] * len(lexicon.entries)
    if units is None:
        units = unit_table(inventory, max(aux, default=0)) if disambig else inventory.unit_table()

    lx = Wfst(units, words)
    lx.set_start(lx.add_state())
    lx.set_final(0)
    for pron, k in zip(lexicon.entries, aux):
        word = words.get(pron.word)
        if word is None:
            continue
        labels = [inventory.id(u) for u in pron.units]
        if k:
            labels.append(units.find(aux_symbol(k)))
        prev = 0
        for i, il in enumerate(labels):
            nxt = 0 if i == len(labels) - 1 else lx.add_state()
            lx.add_arc(prev, il, word if i == 0 else EPSILON, pron.cost if i == 0 else 0.0, nxt)
            prev = nxt
    if disambig and BACKOFF_SYMBOL in words and BACKOFF_SYMBOL in units:
        lx.add_arc(0, units.find(BACKOFF_SYMBOL), words.find(BACKOFF_SYMBOL), 0.0, 0)
    return lx


# =========================================================
# T
# =========================================================
def build_t(
    inventory: TokenInventory,
    units: Optional[SymbolTable] = None,
    aux_labels: Sequence[int] = (),
) -> Wfst:
    """
    CTC topology over tokens (input label = token id + 1). State 0 is the
    blank state; state i means "unit i was the last frame label". A unit
    is emitted when entered from another state, so repeats collapse
    unless a blank sits between them. Every state is final.
    """
    n = len(inventory.units)
    blank = 1
    t = Wfst(inventory.token_table(), units if units is not None else inventory.unit_table())
    t.add_states(n + 1)
    t.set_start(0)
    for s in t.states():
        t.set_final(s)
        for aux in aux_labels:
            t.add_arc(s, EPSILON, aux, 0.0, s)
    t.add_arc(0, blank, EPSILON, 0.0, 0)
    for i in range(1, n + 1):
        t.add_arc(0, i + 1, i, 0.0, i)
        t.add_arc(i, i + 1, EPSILON, 0.0, i)
        t.add_arc(i, blank, EPSILON, 0.0, 0)
        for j in range(1, n + 1):
            if j != i:
                t.add_arc(i, j + 1, j, 0.0, j)
    return t


# =========================================================
# S = T o min(det(L o G))
# =========================================================
def build_search_graph(
    arpa: ArpaModel,
    lexicon: Lexicon,
    inventory: TokenInventory,
    budget: int = DEFAULT_DET_BUDGET,
) -> Wfst:
    """
    S = T o min(det(L o G)), auxiliary symbols removed after minimization.

    L o G is determinized as an acceptor over (unit, word) label pairs, the
    same as determinizing its pair-encoded form. The result is deterministic
    on pairs only: words that start with the same unit keep one arc each
    out of a shared state. Token passing does not rely on input determinism.
    """
    lexicon.check_units(inventory)
    arpa = copy.deepcopy(arpa)
    arpa.patch_holes()

    words = word_table(arpa, lexicon, with_backoff=True)
    aux = assign_disambig(lexicon.restrict(words.symbols()))
    units = unit_table(inventory, max(aux, default=0))

    lx = build_l(lexicon.restrict(words.symbols()), inventory, words, disambig=True, units=units)
    g = build_g(arpa, words, backoff_label=words.find(BACKOFF_SYMBOL))
    lg = compose(lx, arcsort(g, "ilabel"))
    logger.info("[GRAPH] LG: %d states, %d arcs", lg.num_states, lg.num_arcs)

    lg = minimize(determinize(lg, budget=budget))
    logger.info("[GRAPH] min(det(LG)): %d states, %d arcs", lg.num_states, lg.num_arcs)

    first_aux = units.find(aux_symbol(0))
    lg = relabel(
        lg,
        imap={label: EPSILON for label in range(first_aux, len(units))},
        omap={words.find(BACKOFF_SYMBOL): EPSILON},
    )

    t = build_t(inventory, units=units)
    s = arcsort(trim(compose(t, arcsort(lg, "ilabel"))), "ilabel")
    logger.info("[GRAPH] S: %d states, %d arcs", s.num_states, s.num_arcs)
    return s


def build_naive_graph(arpa: ArpaModel, lexicon: Lexicon, inventory: TokenInventory) -> Wfst:
    """T o (L o G) without auxiliary symbols, determinization or minimization."""
    lexicon.check_units(inventory)
    arpa = copy.deepcopy(arpa)
    arpa.patch_holes()
    words = word_table(arpa, lexicon)
    lx = build_l(lexicon.restrict(words.symbols()), inventory, words, disambig=False)
    lg = compose(lx, arcsort(build_g(arpa, words), "ilabel"))
    return trim(compose(build_t(inventory), lg))
