from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from app.errors import ConfigurationError
from app.fst.wfst import EPSILON, Arc, Wfst
from app.fst.weight import INF


@dataclass(frozen=True)
class FstPath:
    ilabels: Tuple[int, ...]
    olabels: Tuple[int, ...]
    weight: float


def shortest_distance_to_final(a: Wfst) -> List[float]:
    """Distance from every state to a final state (Bellman-Ford queue, no negative cycles)."""
    n = a.num_states
    reverse: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
    for s in range(n):
        for arc in a.arcs(s):
            reverse[arc.nextstate].append((s, arc.weight))
    dist = [INF] * n
    queue = deque()
    for s, w in a.finals.items():
        dist[s] = w
        queue.append(s)
    queued = set(queue)
    while queue:
        q = queue.popleft()
        queued.discard(q)
        for p, w in reverse[q]:
            nd = dist[q] + w
            if nd < dist[p]:
                dist[p] = nd
                if p not in queued:
                    queued.add(p)
                    queue.append(p)
    return dist


def shortest_path(a: Wfst, n: int = 1) -> List[FstPath]:
    """
    The n cheapest start->final paths, ascending. Best-first search guided
    by the exact distance-to-final, each state expanded at most n times.
    """
    if n < 1:
        raise ConfigurationError("shortest_path: n must be >= 1")
    if a.start is None or a.num_states == 0:
        return []
    future = shortest_distance_to_final(a)
    if future[a.start] == INF:
        return []

    done = -1
    tie = itertools.count()
    expanded = [0] * a.num_states
    Node = Optional[Tuple["Node", Arc]]
    heap: List[Tuple[float, int, int, float, Node]] = [(future[a.start], next(tie), a.start, 0.0, None)]
    found: List[FstPath] = []
    while heap and len(found) < n:
        _, _, s, g, node = heapq.heappop(heap)
        if s == done:
            found.append(_trace(node, g))
            continue
        if expanded[s] >= n:
            continue
        expanded[s] += 1
        if a.is_final(s):
            total = g + a.final(s)
            heapq.heappush(heap, (total, next(tie), done, total, node))
        for arc in a.arcs(s):
            h = future[arc.nextstate]
            if h == INF:
                continue
            g2 = g + arc.weight
            heapq.heappush(heap, (g2 + h, next(tie), arc.nextstate, g2, (node, arc)))
    return found


def _trace(node, weight: float) -> FstPath:
    arcs: List[Arc] = []
    while node is not None:
        node, arc = node
        arcs.append(arc)
    arcs.reverse()
    return FstPath(
        ilabels=tuple(arc.ilabel for arc in arcs if arc.ilabel != EPSILON),
        olabels=tuple(arc.olabel for arc in arcs if arc.olabel != EPSILON),
        weight=weight,
    )


def path_enumerate(a: Wfst, max_len: int, pairs: bool = False) -> Dict[tuple, float]:
    """
    Exact weighted language restricted to input strings of length <= max_len.

    Keys are input label tuples, or (input, output) tuples when `pairs` is
    set (both sides bounded by max_len). Used as the brute-force oracle.
    """
    if a.start is None or a.num_states == 0:
        return {}
    best: Dict[Tuple[int, tuple, tuple], float] = {(a.start, (), ()): 0.0}
    queue = deque(best)
    queued = set(best)
    while queue:
        key = queue.popleft()
        queued.discard(key)
        s, x, z = key
        w = best[key]
        for arc in a.arcs(s):
            x2 = x + (arc.ilabel,) if arc.ilabel != EPSILON else x
            z2 = z + (arc.olabel,) if pairs and arc.olabel != EPSILON else z
            if len(x2) > max_len or len(z2) > max_len:
                continue
            k2 = (arc.nextstate, x2, z2)
            nw = w + arc.weight
            if nw < best.get(k2, INF):
                best[k2] = nw
                if k2 not in queued:
                    queued.add(k2)
                    queue.append(k2)

    language: Dict[tuple, float] = {}
    for (s, x, z), w in best.items():
        if not a.is_final(s):
            continue
        total = w + a.final(s)
        k = (x, z) if pairs else x
        if total < language.get(k, INF):
            language[k] = total
    return language


def languages_equal(left: Dict[tuple, float], right: Dict[tuple, float], tol: float = 1e-9) -> bool:
    if left.keys() != right.keys():
        return False
    return all(abs(left[k] - right[k]) <= tol for k in left)
