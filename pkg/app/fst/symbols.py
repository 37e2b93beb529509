from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from app.errors import FormatError

EPS = "<eps>"


class SymbolTable:
    """Bijective id <-> symbol map; id 0 is always epsilon."""

    def __init__(self, symbols: Iterable[str] = ()):
        self._symbols: List[str] = [EPS]
        self._ids: Dict[str, int] = {EPS: 0}
        for sym in symbols:
            self.add_symbol(sym)

    def add_symbol(self, symbol: str) -> int:
        found = self._ids.get(symbol)
        if found is not None:
            return found
        if not symbol or any(c.isspace() for c in symbol):
            raise FormatError(f"invalid symbol {symbol!r}")
        self._ids[symbol] = len(self._symbols)
        self._symbols.append(symbol)
        return self._ids[symbol]

    def find(self, symbol: str) -> int:
        return self._ids[symbol]

    def get(self, symbol: str, default: Optional[int] = None) -> Optional[int]:
        return self._ids.get(symbol, default)

    def symbol(self, idx: int) -> str:
        return self._symbols[idx]

    def symbols(self) -> List[str]:
        """All symbols except epsilon, in id order."""
        return self._symbols[1:]

    def copy(self) -> "SymbolTable":
        return SymbolTable(self._symbols[1:])

    def __len__(self) -> int:
        return len(self._symbols)

    def __contains__(self, symbol: object) -> bool:
        return symbol in self._ids

    def __iter__(self) -> Iterator[Tuple[int, str]]:
        return iter(enumerate(self._symbols))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SymbolTable) and self._symbols == other._symbols

    def __hash__(self) -> int:
        return hash(tuple(self._symbols))

    def __repr__(self) -> str:
        return f"SymbolTable({len(self)} symbols)"

    # =====================================================
    # TEXT I/O: "symbol<TAB>id"
    # =====================================================
    def to_lines(self) -> List[str]:
        return [f"{sym}\t{idx}" for idx, sym in self]

    def write_text(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "SymbolTable":
        pairs = []
        for lineno, line in enumerate(lines, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"symbol table line {lineno}: expected 'symbol<TAB>id', got {line!r}")
            try:
                pairs.append((int(parts[1]), parts[0]))
            except ValueError as e:
                raise FormatError(f"symbol table line {lineno}: bad id {parts[1]!r}") from e
        pairs.sort()
        if not pairs or pairs[0] != (0, EPS):
            raise FormatError("symbol table must map id 0 to <eps>")
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise FormatError("symbol table ids must be dense 0..N-1")
        table = cls(sym for _, sym in pairs[1:])
        if len(table) != len(pairs):
            raise FormatError("symbol table contains duplicate symbols")
        return table

    @classmethod
    def read_text(cls, path: Path | str) -> "SymbolTable":
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())
