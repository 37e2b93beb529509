from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from app.errors import FormatError
from app.fst.symbols import SymbolTable
from app.fst.weight import INF

EPSILON = 0


@dataclass(frozen=True)
class Arc:
    ilabel: int
    olabel: int
    weight: float
    nextstate: int


class Wfst:
    """
    Weighted transducer over the tropical semiring.

    States are dense ints with their arcs stored per state. Build it with
    add_state / add_arc / set_start / set_final, then treat it as read-only:
    every algorithm in app.fst returns a new machine, so one instance can be
    shared between decoding sessions.
    """

    def __init__(
        self,
        isymbols: Optional[SymbolTable] = None,
        osymbols: Optional[SymbolTable] = None,
    ):
        self._arcs: List[List[Arc]] = []
        self._finals: Dict[int, float] = {}
        self.start: Optional[int] = None
        self.isymbols = isymbols
        self.osymbols = osymbols

    @classmethod
    def empty(
        cls,
        isymbols: Optional[SymbolTable] = None,
        osymbols: Optional[SymbolTable] = None,
    ) -> "Wfst":
        """Machine with the empty language: one non-final start state."""
        out = cls(isymbols, osymbols)
        out.set_start(out.add_state())
        return out

    @classmethod
    def linear(
        cls,
        labels: Sequence[int],
        olabels: Optional[Sequence[int]] = None,
        weights: Optional[Sequence[float]] = None,
        isymbols: Optional[SymbolTable] = None,
        osymbols: Optional[SymbolTable] = None,
    ) -> "Wfst":
        olabels = labels if olabels is None else olabels
        out = cls(isymbols, osymbols if osymbols is not None else isymbols)
        prev = out.add_state()
        out.set_start(prev)
        for i, (il, ol) in enumerate(zip(labels, olabels)):
            nxt = out.add_state()
            out.add_arc(prev, il, ol, 0.0 if weights is None else weights[i], nxt)
            prev = nxt
        out.set_final(prev)
        return out

    # =====================================================
    # CONSTRUCTION
    # =====================================================
    def add_state(self) -> int:
        self._arcs.append([])
        return len(self._arcs) - 1

    def add_states(self, n: int) -> range:
        first = len(self._arcs)
        self._arcs.extend([] for _ in range(n))
        return range(first, first + n)

    def add_arc(self, src: int, ilabel: int, olabel: int, weight: float, dst: int) -> None:
        self._arcs[src].append(Arc(ilabel, olabel, float(weight), dst))

    def set_arcs(self, src: int, arcs: Iterable[Arc]) -> None:
        self._arcs[src] = list(arcs)

    def set_start(self, state: int) -> None:
        self.start = state

    def set_final(self, state: int, weight: float = 0.0) -> None:
        if weight == INF:
            self._finals.pop(state, None)
        else:
            self._finals[state] = float(weight)

    # =====================================================
    # ACCESS
    # =====================================================
    @property
    def num_states(self) -> int:
        return len(self._arcs)

    @property
    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    @property
    def finals(self) -> Mapping[int, float]:
        return self._finals

    def states(self) -> range:
        return range(len(self._arcs))

    def arcs(self, state: int) -> List[Arc]:
        return self._arcs[state]

    def final(self, state: int) -> float:
        return self._finals.get(state, INF)

    def is_final(self, state: int) -> bool:
        return state in self._finals

    def copy(self) -> "Wfst":
        out = Wfst(self.isymbols, self.osymbols)
        out._arcs = [list(a) for a in self._arcs]
        out._finals = dict(self._finals)
        out.start = self.start
        return out

    # =====================================================
    # PROPERTIES
    # =====================================================
    def is_acceptor(self) -> bool:
        return all(arc.ilabel == arc.olabel for arcs in self._arcs for arc in arcs)

    def is_deterministic(self) -> bool:
        """At most one arc per (state, ilabel, olabel) and no epsilon:epsilon arcs."""
        for arcs in self._arcs:
            seen = set()
            for arc in arcs:
                key = (arc.ilabel, arc.olabel)
                if key == (EPSILON, EPSILON) or key in seen:
                    return False
                seen.add(key)
        return True

    def has_epsilons(self) -> bool:
        return any(
            arc.ilabel == EPSILON and arc.olabel == EPSILON
            for arcs in self._arcs
            for arc in arcs
        )

    def check(self) -> "Wfst":
        """Raise FormatError when a structural invariant is broken."""
        n = self.num_states
        if n and (self.start is None or not 0 <= self.start < n):
            raise FormatError(f"start state {self.start} is not a valid state")
        for s in self._finals:
            if not 0 <= s < n:
                raise FormatError(f"final state {s} is not a valid state")
        for s, arcs in enumerate(self._arcs):
            for arc in arcs:
                if not 0 <= arc.nextstate < n:
                    raise FormatError(f"arc {s}->{arc.nextstate} leaves the machine")
                if self.isymbols is not None and not 0 <= arc.ilabel < len(self.isymbols):
                    raise FormatError(f"arc {s}->{arc.nextstate}: unknown ilabel {arc.ilabel}")
                if self.osymbols is not None and not 0 <= arc.olabel < len(self.osymbols):
                    raise FormatError(f"arc {s}->{arc.nextstate}: unknown olabel {arc.olabel}")
        return self

    def __repr__(self) -> str:
        return f"Wfst(states={self.num_states}, arcs={self.num_arcs}, finals={len(self._finals)})"
