from __future__ import annotations

from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from app.errors import FormatError
from app.fst.symbols import SymbolTable
from app.fst.wfst import Wfst

MAGIC = b"WFST1"
NO_STATE = 0xFFFFFFFF

_HEADER = np.dtype([("num_states", "<u4"), ("start", "<u4"), ("num_arcs", "<u4"), ("num_finals", "<u4")])
_ARC = np.dtype([("src", "<u4"), ("ilabel", "<u4"), ("olabel", "<u4"), ("weight", "<f4"), ("dst", "<u4")])
_FINAL = np.dtype([("state", "<u4"), ("weight", "<f4")])


# =========================================================
# TEXT: "start S" / "src dst ilabel olabel weight" / "state [weight]"
# =========================================================
def to_text_lines(a: Wfst) -> List[str]:
    """A leading "start S" line, then arcs (start state first), then finals."""
    lines = []
    if a.start is not None:
        lines.append(f"start {a.start}")
    order = [a.start] + [s for s in a.states() if s != a.start] if a.start is not None else list(a.states())
    for s in order:
        for arc in a.arcs(s):
            lines.append(f"{s} {arc.nextstate} {arc.ilabel} {arc.olabel} {arc.weight!r}")
    for s, w in sorted(a.finals.items()):
        lines.append(f"{s} {w!r}")
    return lines


def from_text_lines(
    lines: Iterable[str],
    isymbols: Optional[SymbolTable] = None,
    osymbols: Optional[SymbolTable] = None,
) -> Wfst:
    """
    A "start S" line names the start state. Without one, the source of the
    first arc line (or the first final line) is the start state.
    """
    out = Wfst(isymbols, osymbols)

    def ensure(s: int) -> None:
        while out.num_states <= s:
            out.add_state()

    for lineno, raw in enumerate(lines, 1):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "start":
                if len(parts) != 2 or out.start is not None:
                    raise ValueError("start line must come first and name one state")
                s = int(parts[1])
                ensure(s)
                out.set_start(s)
            elif len(parts) in (4, 5):
                src, dst, il, ol = (int(p) for p in parts[:4])
                w = float(parts[4]) if len(parts) == 5 else 0.0
                ensure(max(src, dst))
                out.add_arc(src, il, ol, w, dst)
                if out.start is None:
                    out.set_start(src)
            elif len(parts) in (1, 2):
                s = int(parts[0])
                ensure(s)
                out.set_final(s, float(parts[1]) if len(parts) == 2 else 0.0)
                if out.start is None:
                    out.set_start(s)
            else:
                raise ValueError("wrong field count")
        except ValueError as e:
            raise FormatError(f"graph text line {lineno}: {raw.strip()!r} ({e})") from e
    if out.start is None:
        return Wfst.empty(isymbols, osymbols)
    return out.check()


def write_text(a: Wfst, path: Path | str) -> None:
    Path(path).write_text("\n".join(to_text_lines(a)) + "\n", encoding="utf-8")


def read_text(path: Path | str, isymbols: Optional[SymbolTable] = None, osymbols: Optional[SymbolTable] = None) -> Wfst:
    return from_text_lines(Path(path).read_text(encoding="utf-8").splitlines(), isymbols, osymbols)


# =========================================================
# BINARY: magic "WFST1", little-endian u32 counts, arcs (u32,u32,u32,f32,u32)
# =========================================================
def to_bytes(a: Wfst) -> bytes:
    header = np.zeros(1, dtype=_HEADER)
    header["num_states"] = a.num_states
    header["start"] = NO_STATE if a.start is None else a.start
    header["num_arcs"] = a.num_arcs
    header["num_finals"] = len(a.finals)

    arcs = np.zeros(a.num_arcs, dtype=_ARC)
    i = 0
    for s in a.states():
        for arc in a.arcs(s):
            arcs[i] = (s, arc.ilabel, arc.olabel, arc.weight, arc.nextstate)
            i += 1
    finals = np.array(sorted(a.finals.items()), dtype=_FINAL) if a.finals else np.zeros(0, dtype=_FINAL)
    return MAGIC + header.tobytes() + arcs.tobytes() + finals.tobytes()


def from_bytes(
    data: bytes,
    isymbols: Optional[SymbolTable] = None,
    osymbols: Optional[SymbolTable] = None,
) -> Wfst:
    if not data.startswith(MAGIC):
        raise FormatError("not a WFST1 binary graph")
    offset = len(MAGIC)
    try:
        header = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
        offset += _HEADER.itemsize
        arcs = np.frombuffer(data, dtype=_ARC, count=int(header["num_arcs"]), offset=offset)
        offset += arcs.nbytes
        finals = np.frombuffer(data, dtype=_FINAL, count=int(header["num_finals"]), offset=offset)
    except ValueError as e:
        raise FormatError(f"truncated WFST1 graph: {e}") from e

    out = Wfst(isymbols, osymbols)
    out.add_states(int(header["num_states"]))
    start = int(header["start"])
    out.start = None if start == NO_STATE else start
    for src, il, ol, w, dst in arcs.tolist():
        out.add_arc(src, il, ol, w, dst)
    for s, w in finals.tolist():
        out.set_final(s, w)
    return out.check()


def write_binary(a: Wfst, path: Path | str, with_symbols: bool = True) -> None:
    """Writes `path` plus `path.isyms` / `path.osyms` tables when present."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(a))
    if with_symbols:
        if a.isymbols is not None:
            a.isymbols.write_text(path.with_name(path.name + ".isyms"))
        if a.osymbols is not None:
            a.osymbols.write_text(path.with_name(path.name + ".osyms"))


def read_binary(path: Path | str) -> Wfst:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"graph file not found: {path}")
    isyms = path.with_name(path.name + ".isyms")
    osyms = path.with_name(path.name + ".osyms")
    return from_bytes(
        path.read_bytes(),
        SymbolTable.read_text(isyms) if isyms.is_file() else None,
        SymbolTable.read_text(osyms) if osyms.is_file() else None,
    )
