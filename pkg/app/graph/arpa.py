from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from app.errors import FormatError

logger = logging.getLogger(__name__)

LN10 = math.log(10.0)
BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

Ngram = Tuple[str, ...]
# (log10 probability, optional log10 backoff)
Entry = Tuple[float, Optional[float]]


def to_cost(log10_value: float) -> float:
    """ARPA log10 value -> tropical cost in nats."""
    return -log10_value * LN10


@dataclass
class ArpaModel:
    max_order: int
    ngrams: Dict[int, Dict[Ngram, Entry]] = field(default_factory=dict)

    @property
    def vocabulary(self) -> List[str]:
        """Unigram words in file order, sentence markers excluded."""
        return [w for (w,) in self.ngrams.get(1, {}) if w not in (BOS, EOS)]

    def entry(self, ngram: Ngram) -> Optional[Entry]:
        return self.ngrams.get(len(ngram), {}).get(ngram)

    def score(self, history: Sequence[str], word: str) -> float:
        """log10 p(word | history) with standard backoff."""
        history = tuple(history)[-(self.max_order - 1):] if self.max_order > 1 else ()
        penalty = 0.0
        while True:
            hit = self.entry(history + (word,))
            if hit is not None:
                return penalty + hit[0]
            if not history:
                unk = self.entry((UNK,))
                return penalty + unk[0] if unk is not None else -math.inf
            ctx = self.entry(history)
            if ctx is not None and ctx[1] is not None:
                penalty += ctx[1]
            history = history[1:]

    def sentence_score(self, words: Sequence[str]) -> float:
        """log10 probability of `<s> words </s>`."""
        history: Tuple[str, ...] = (BOS,)
        total = 0.0
        for w in list(words) + [EOS]:
            total += self.score(history, w)
            history = (history + (w,))[-(max(self.max_order - 1, 1)):]
        return total

    def patch_holes(self) -> int:
        """
        Make every order-k entry's (k-1)-prefix exist at order k-1. Missing
        prefixes get their backed-off probability and a zero backoff.
        """
        patched = 0
        for order in range(self.max_order, 1, -1):
            lower = self.ngrams.setdefault(order - 1, {})
            for ngram in list(self.ngrams.get(order, {})):
                prefix = ngram[:-1]
                if prefix in lower:
                    continue
                if prefix[-1] == BOS:
                    logp = -99.0
                else:
                    logp = self.score(prefix[:-1], prefix[-1])
                    if logp == -math.inf:
                        logp = -99.0
                lower[prefix] = (logp, 0.0)
                patched += 1
        if patched:
            logger.warning("[ARPA] patched %d missing n-gram prefixes", patched)
        return patched

    # =====================================================
    # TEXT OUTPUT
    # =====================================================
    def to_lines(self) -> List[str]:
        lines = ["", "\\data\\"]
        for order in range(1, self.max_order + 1):
            lines.append(f"ngram {order}={len(self.ngrams.get(order, {}))}")
        for order in range(1, self.max_order + 1):
            lines.append("")
            lines.append(f"\\{order}-grams:")
            for ngram, (logp, bow) in self.ngrams.get(order, {}).items():
                row = f"{logp:.7f}\t{' '.join(ngram)}"
                if bow is not None:
                    row += f"\t{bow:.7f}"
                lines.append(row)
        lines += ["", "\\end\\", ""]
        return lines

    def write(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.to_lines()), encoding="utf-8")


_SECTION = re.compile(r"^\\(\d+)-grams:$")
_COUNT = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")


def parse_arpa(lines: Iterable[str]) -> ArpaModel:
    counts: Dict[int, int] = {}
    ngrams: Dict[int, Dict[Ngram, Entry]] = {}
    order = 0
    in_data = False
    ended = False
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line == "\\data\\":
            in_data = True
            continue
        if line == "\\end\\":
            ended = True
            break
        m = _SECTION.match(line)
        if m:
            order = int(m.group(1))
            ngrams.setdefault(order, {})
            in_data = False
            continue
        if in_data:
            m = _COUNT.match(line)
            if not m:
                raise FormatError(f"ARPA line {lineno}: bad count line {line!r}")
            counts[int(m.group(1))] = int(m.group(2))
            continue
        if order == 0:
            raise FormatError(f"ARPA line {lineno}: entry outside an n-gram section")
        parts = line.split()
        if len(parts) not in (order + 1, order + 2):
            raise FormatError(f"ARPA line {lineno}: expected {order} words, got {line!r}")
        try:
            logp = float(parts[0])
            bow = float(parts[order + 1]) if len(parts) == order + 2 else None
        except ValueError as e:
            raise FormatError(f"ARPA line {lineno}: {e}") from e
        if logp > 0:
            raise FormatError(f"ARPA line {lineno}: log10 probability {logp} > 0")
        ngrams[order][tuple(parts[1 : order + 1])] = (logp, bow)

    if not counts:
        raise FormatError("ARPA model has no \\data\\ section")
    if not ended:
        logger.warning("[ARPA] missing \\end\\ marker")
    for k, n in counts.items():
        got = len(ngrams.get(k, {}))
        if got != n:
            logger.warning("[ARPA] header says %d %d-grams, found %d", n, k, got)
    return ArpaModel(max_order=max(counts), ngrams=ngrams)


def read_arpa(path: Path | str) -> ArpaModel:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"ARPA file not found: {path}")
    return parse_arpa(path.read_text(encoding="utf-8").splitlines())
