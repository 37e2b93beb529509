from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from app.errors import ConfigurationError, FormatError
from app.fst.symbols import SymbolTable

BLANK = "<blk>"


@dataclass(frozen=True)
class TokenInventory:
    """CTC outputs: id 0 is blank, ids 1..n are lexicon units in order."""

    units: Tuple[str, ...]

    def __post_init__(self) -> None:
        if BLANK in self.units:
            raise FormatError("the blank symbol is implicit at id 0 and cannot be listed as a unit")
        if len(set(self.units)) != len(self.units):
            raise FormatError("duplicate units in token inventory")

    @property
    def token_count(self) -> int:
        return len(self.units) + 1

    def id(self, unit: str) -> int:
        try:
            return self.units.index(unit) + 1
        except ValueError:
            raise ConfigurationError(f"unit {unit!r} is not in the token inventory") from None

    def symbol(self, token_id: int) -> str:
        return BLANK if token_id == 0 else self.units[token_id - 1]

    def __contains__(self, unit: object) -> bool:
        return unit in self.units

    def unit_table(self) -> SymbolTable:
        """<eps>=0, unit k = k (its inventory id)."""
        return SymbolTable(self.units)

    def token_table(self) -> SymbolTable:
        """<eps>=0, <blk>=1, unit k = k+1: WFST label = token id + 1."""
        return SymbolTable((BLANK,) + self.units)

    def encode(self, units: Sequence[str]) -> Tuple[int, ...]:
        return tuple(self.id(u) for u in units)

    def decode(self, ids: Sequence[int]) -> Tuple[str, ...]:
        return tuple(self.symbol(i) for i in ids)

    def to_lines(self) -> List[str]:
        return list(self.units)

    def write(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.units) + "\n", encoding="utf-8")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "TokenInventory":
        units = []
        for line in lines:
            line = line.strip()
            if not line or line == BLANK:
                continue
            units.append(line.split()[0])
        return cls(tuple(units))

    @classmethod
    def read(cls, path: Path | str) -> "TokenInventory":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"units file not found: {path}")
        return cls.from_lines(path.read_text(encoding="utf-8").splitlines())


@dataclass(frozen=True)
class Pronunciation:
    word: str
    units: Tuple[str, ...]
    prob: float = 1.0

    @property
    def cost(self) -> float:
        return -math.log(self.prob)


@dataclass
class Lexicon:
    entries: List[Pronunciation] = field(default_factory=list)

    @property
    def words(self) -> List[str]:
        seen: Dict[str, None] = {}
        for p in self.entries:
            seen.setdefault(p.word, None)
        return list(seen)

    def pronunciations(self, word: str) -> List[Pronunciation]:
        return [p for p in self.entries if p.word == word]

    def add(self, word: str, units: Sequence[str], prob: float = 1.0) -> None:
        if not units:
            raise FormatError(f"word {word!r} has an empty unit sequence")
        if not 0.0 < prob <= 1.0:
            raise FormatError(f"word {word!r}: pronunciation probability {prob} outside (0, 1]")
        self.entries.append(Pronunciation(word, tuple(units), prob))

    def check_units(self, inventory: TokenInventory) -> None:
        missing = [(p.word, u) for p in self.entries for u in p.units if u not in inventory]
        if missing:
            listed = ", ".join(f"{u!r} (in {w!r})" for w, u in missing)
            raise ConfigurationError(f"lexicon uses units missing from the inventory: {listed}")

    def spell(self, words: Sequence[str]) -> Tuple[str, ...]:
        """Units of the first listed pronunciation of every word, concatenated."""
        first: Dict[str, Tuple[str, ...]] = {}
        for p in self.entries:
            first.setdefault(p.word, p.units)
        out: List[str] = []
        for w in words:
            if w not in first:
                raise ConfigurationError(f"word {w!r} is not in the lexicon")
            out.extend(first[w])
        return tuple(out)

    def restrict(self, words: Iterable[str]) -> "Lexicon":
        keep = set(words)
        return Lexicon([p for p in self.entries if p.word in keep])

    def to_lines(self) -> List[str]:
        rows = []
        for p in self.entries:
            row = f"{p.word}\t{' '.join(p.units)}"
            if p.prob != 1.0:
                row += f"\t{p.prob!r}"
            rows.append(row)
        return rows

    def write(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Lexicon":
        """Lines are "word<TAB>unit unit ...[<TAB>probability]"."""
        lex = cls()
        for lineno, raw in enumerate(lines, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise FormatError(f"lexicon line {lineno}: expected 2 or 3 tab-separated columns")
            prob: Optional[float] = None
            if len(cols) == 3:
                try:
                    prob = float(cols[2])
                except ValueError as e:
                    raise FormatError(f"lexicon line {lineno}: bad probability {cols[2]!r}") from e
            lex.add(cols[0].strip(), cols[1].split(), 1.0 if prob is None else prob)
        return lex

    @classmethod
    def read(cls, path: Path | str) -> "Lexicon":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"lexicon file not found: {path}")
        return cls.from_lines(path.read_text(encoding="utf-8").splitlines())
