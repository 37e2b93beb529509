from __future__ import annotations

import logging
from collections import deque
from typing import Dict, List, Literal, Mapping, Optional, Tuple

from app.errors import ConfigurationError, DeterminizationBudgetError, PreconditionError
from app.fst.wfst import EPSILON, Arc, Wfst
from app.fst.weight import INF

logger = logging.getLogger(__name__)

DEFAULT_DET_BUDGET = 1_000_000
# Residual quantization used only to recognise equal subsets.
DET_DELTA = 1e-9


def _check_tables(a: Wfst, b: Wfst) -> None:
    if a.osymbols is not None and b.isymbols is not None and a.osymbols != b.isymbols:
        raise ConfigurationError(
            f"compose: output table of the left machine ({len(a.osymbols)} symbols) "
            f"differs from the input table of the right machine ({len(b.isymbols)} symbols)"
        )


def _index_by_ilabel(arcs: List[Arc]) -> Dict[int, List[Arc]]:
    index: Dict[int, List[Arc]] = {}
    for arc in arcs:
        index.setdefault(arc.ilabel, []).append(arc)
    return index


def compose(a: Wfst, b: Wfst, connect: bool = True) -> Wfst:
    """
    Eager composition with the epsilon-matching filter.

    Filter state 0: free; 1: the left machine just moved alone on an output
    epsilon; 2: the right machine just moved alone on an input epsilon.
    A left-alone move is blocked in state 2 and a right-alone move in state 1,
    and a simultaneous epsilon move is only allowed from state 0, so every
    pair of paths is realised by exactly one interleaving.
    """
    _check_tables(a, b)
    out = Wfst(a.isymbols, b.osymbols)
    if a.start is None or b.start is None:
        return Wfst.empty(a.isymbols, b.osymbols)

    ids: Dict[Tuple[int, int, int], int] = {}
    queue: deque = deque()
    b_index: Dict[int, Dict[int, List[Arc]]] = {}

    def state_of(sa: int, sb: int, f: int) -> int:
        key = (sa, sb, f)
        sid = ids.get(key)
        if sid is None:
            sid = out.add_state()
            ids[key] = sid
            queue.append(key)
        return sid

    out.set_start(state_of(a.start, b.start, 0))
    while queue:
        sa, sb, f = key = queue.popleft()
        src = ids[key]
        fw = a.final(sa) + b.final(sb)
        if fw < INF:
            out.set_final(src, fw)

        bmap = b_index.get(sb)
        if bmap is None:
            bmap = b_index[sb] = _index_by_ilabel(b.arcs(sb))
        b_eps = bmap.get(EPSILON, ())

        for arc_a in a.arcs(sa):
            if arc_a.olabel == EPSILON:
                if f != 2:
                    dst = state_of(arc_a.nextstate, sb, 1)
                    out.add_arc(src, arc_a.ilabel, EPSILON, arc_a.weight, dst)
                if f == 0:
                    for arc_b in b_eps:
                        dst = state_of(arc_a.nextstate, arc_b.nextstate, 0)
                        out.add_arc(src, arc_a.ilabel, arc_b.olabel, arc_a.weight + arc_b.weight, dst)
            else:
                for arc_b in bmap.get(arc_a.olabel, ()):
                    dst = state_of(arc_a.nextstate, arc_b.nextstate, 0)
                    out.add_arc(src, arc_a.ilabel, arc_b.olabel, arc_a.weight + arc_b.weight, dst)
        if f != 1:
            for arc_b in b_eps:
                dst = state_of(sa, arc_b.nextstate, 2)
                out.add_arc(src, EPSILON, arc_b.olabel, arc_b.weight, dst)

    return trim(out) if connect else out


def trim(a: Wfst) -> Wfst:
    """Keep only states that are both accessible and coaccessible."""
    if a.start is None or a.num_states == 0:
        return Wfst.empty(a.isymbols, a.osymbols)

    access = {a.start}
    stack = [a.start]
    reverse: List[List[int]] = [[] for _ in a.states()]
    while stack:
        s = stack.pop()
        for arc in a.arcs(s):
            reverse[arc.nextstate].append(s)
            if arc.nextstate not in access:
                access.add(arc.nextstate)
                stack.append(arc.nextstate)

    coaccess = {s for s in a.finals if s in access}
    stack = list(coaccess)
    while stack:
        s = stack.pop()
        for p in reverse[s]:
            if p not in coaccess:
                coaccess.add(p)
                stack.append(p)

    if a.start not in coaccess:
        return Wfst.empty(a.isymbols, a.osymbols)

    keep = sorted(coaccess)
    remap = {old: new for new, old in enumerate(keep)}
    out = Wfst(a.isymbols, a.osymbols)
    out.add_states(len(keep))
    out.set_start(remap[a.start])
    for old in keep:
        out.set_arcs(
            remap[old],
            (
                Arc(arc.ilabel, arc.olabel, arc.weight, remap[arc.nextstate])
                for arc in a.arcs(old)
                if arc.nextstate in remap
            ),
        )
        if a.is_final(old):
            out.set_final(remap[old], a.final(old))
    return out


def arcsort(a: Wfst, field: Literal["ilabel", "olabel"] = "ilabel") -> Wfst:
    if field == "ilabel":
        key = lambda arc: (arc.ilabel, arc.olabel)  # noqa: E731
    elif field == "olabel":
        key = lambda arc: (arc.olabel, arc.ilabel)  # noqa: E731
    else:
        raise ConfigurationError(f"arcsort: unknown field {field!r}")
    out = a.copy()
    for s in out.states():
        out.set_arcs(s, sorted(out.arcs(s), key=key))
    return out


def epsilon_closure(a: Wfst, state: int) -> Dict[int, float]:
    """Shortest distance from `state` over epsilon:epsilon arcs (no negative cycles)."""
    dist = {state: 0.0}
    queue = deque([state])
    queued = {state}
    while queue:
        q = queue.popleft()
        queued.discard(q)
        dq = dist[q]
        for arc in a.arcs(q):
            if arc.ilabel != EPSILON or arc.olabel != EPSILON:
                continue
            nd = dq + arc.weight
            if nd < dist.get(arc.nextstate, INF):
                dist[arc.nextstate] = nd
                if arc.nextstate not in queued:
                    queued.add(arc.nextstate)
                    queue.append(arc.nextstate)
    return dist


def rm_epsilon(a: Wfst) -> Wfst:
    """
    Remove epsilon:epsilon arcs. On acceptors this removes every
    epsilon-input arc; on transducers arcs carrying a label on one side stay.
    """
    if not a.has_epsilons():
        return trim(a)
    out = Wfst(a.isymbols, a.osymbols)
    out.add_states(a.num_states)
    out.start = a.start
    for s in a.states():
        final = INF
        arcs: List[Arc] = []
        for t, d in epsilon_closure(a, s).items():
            for arc in a.arcs(t):
                if arc.ilabel == EPSILON and arc.olabel == EPSILON:
                    continue
                arcs.append(Arc(arc.ilabel, arc.olabel, d + arc.weight, arc.nextstate))
            if a.is_final(t):
                final = min(final, d + a.final(t))
        out.set_arcs(s, arcs)
        out.set_final(s, final)
    return trim(out)


def determinize(a: Wfst, budget: int = DEFAULT_DET_BUDGET) -> Wfst:
    """
    Weighted subset construction, treating the machine as an acceptor over
    (ilabel, olabel) pairs. Epsilon:epsilon arcs are removed first. Each
    subset holds (state, residual) pairs; the arc weight is the minimum over
    the subset and the rest is carried as residual.
    """
    if a.has_epsilons():
        a = rm_epsilon(a)
    out = Wfst(a.isymbols, a.osymbols)
    if a.start is None or a.num_states == 0:
        return Wfst.empty(a.isymbols, a.osymbols)

    Subset = Tuple[Tuple[int, float], ...]
    ids: Dict[Tuple[Tuple[int, int], ...], int] = {}
    subsets: List[Subset] = []

    def key_of(subset: Subset) -> Tuple[Tuple[int, int], ...]:
        return tuple((q, round(r / DET_DELTA)) for q, r in subset)

    def state_of(subset: Subset) -> int:
        key = key_of(subset)
        sid = ids.get(key)
        if sid is None:
            if out.num_states >= budget:
                raise DeterminizationBudgetError(budget)
            sid = out.add_state()
            ids[key] = sid
            subsets.append(subset)
        return sid

    out.set_start(state_of(((a.start, 0.0),)))
    sid = 0
    while sid < len(subsets):
        subset = subsets[sid]
        final = INF
        groups: Dict[Tuple[int, int], Dict[int, float]] = {}
        for q, r in subset:
            if a.is_final(q):
                final = min(final, r + a.final(q))
            for arc in a.arcs(q):
                if arc.weight == INF:
                    continue
                targets = groups.setdefault((arc.ilabel, arc.olabel), {})
                w = r + arc.weight
                if w < targets.get(arc.nextstate, INF):
                    targets[arc.nextstate] = w
        out.set_final(sid, final)
        for (il, ol) in sorted(groups):
            targets = groups[(il, ol)]
            w_min = min(targets.values())
            nxt = tuple(sorted((q, w - w_min) for q, w in targets.items()))
            out.add_arc(sid, il, ol, w_min, state_of(nxt))
        sid += 1

    logger.debug("[FST] determinize: %d -> %d states", a.num_states, out.num_states)
    return out


def minimize(a: Wfst) -> Wfst:
    """
    Merge equivalent states of a deterministic machine by partition
    refinement. Arcs are compared on (ilabel, olabel, weight) exactly and
    final weights split the initial partition; weights are not pushed.
    """
    if not a.is_deterministic():
        raise PreconditionError("minimize requires a deterministic input")
    a = trim(a)
    n = a.num_states

    finals_seen: Dict[float, int] = {}
    block = [finals_seen.setdefault(a.final(s), len(finals_seen)) for s in range(n)]
    num_blocks = len(finals_seen)
    while True:
        sigs: Dict[tuple, int] = {}
        new_block = []
        for s in range(n):
            sig = (
                block[s],
                tuple(sorted((arc.ilabel, arc.olabel, arc.weight, block[arc.nextstate]) for arc in a.arcs(s))),
            )
            new_block.append(sigs.setdefault(sig, len(sigs)))
        block = new_block
        if len(sigs) == num_blocks:
            break
        num_blocks = len(sigs)

    if num_blocks == n:
        return a

    # Renumber blocks so the start block comes first and order is stable.
    order: Dict[int, int] = {block[a.start]: 0}
    for s in range(n):
        order.setdefault(block[s], len(order))
    out = Wfst(a.isymbols, a.osymbols)
    out.add_states(num_blocks)
    out.set_start(0)
    done = set()
    for s in range(n):
        b = order[block[s]]
        if b in done:
            continue
        done.add(b)
        out.set_arcs(b, (Arc(arc.ilabel, arc.olabel, arc.weight, order[block[arc.nextstate]]) for arc in a.arcs(s)))
        out.set_final(b, a.final(s))
    logger.debug("[FST] minimize: %d -> %d states", n, num_blocks)
    return out


def relabel(
    a: Wfst,
    imap: Optional[Mapping[int, int]] = None,
    omap: Optional[Mapping[int, int]] = None,
) -> Wfst:
    """Replace labels through the given maps; unmapped labels are kept."""
    imap = imap or {}
    omap = omap or {}
    out = a.copy()
    for s in out.states():
        out.set_arcs(
            s,
            (
                Arc(imap.get(arc.ilabel, arc.ilabel), omap.get(arc.olabel, arc.olabel), arc.weight, arc.nextstate)
                for arc in out.arcs(s)
            ),
        )
    return out
