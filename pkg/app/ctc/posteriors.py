from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from app.errors import FormatError

MAGIC = b"POST1"
NORM_TOL = 1e-5

_HEADER = np.dtype([("frames", "<u4"), ("tokens", "<u4")])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    return logits - np.logaddexp.reduce(logits, axis=-1, keepdims=True)


# =========================================================
# RAW MATRIX CODEC (posteriors and features share it)
# =========================================================
def matrix_to_bytes(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    if values.ndim != 2:
        raise FormatError(f"expected a 2-d matrix, got shape {values.shape}")
    header = np.array([values.shape], dtype=_HEADER)
    return MAGIC + header.tobytes() + np.ascontiguousarray(values, dtype="<f4").tobytes()


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if not data.startswith(MAGIC):
        raise FormatError("not a POST1 matrix")
    offset = len(MAGIC)
    try:
        header = np.frombuffer(data, dtype=_HEADER, count=1, offset=offset)[0]
        frames, tokens = int(header["frames"]), int(header["tokens"])
        body = np.frombuffer(data, dtype="<f4", count=frames * tokens, offset=offset + _HEADER.itemsize)
    except ValueError as e:
        raise FormatError(f"truncated POST1 matrix: {e}") from e
    return body.astype(np.float64).reshape(frames, tokens)


def read_matrix(path: Path | str) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"matrix file not found: {path}")
    if path.suffix == ".txt":
        return _matrix_from_text(path.read_text(encoding="utf-8").splitlines())
    return matrix_from_bytes(path.read_bytes())


def write_matrix(values: np.ndarray, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".txt":
        rows = [" ".join(repr(float(v)) for v in row) for row in np.asarray(values)]
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    else:
        path.write_bytes(matrix_to_bytes(values))


def _matrix_from_text(lines: Sequence[str]) -> np.ndarray:
    rows: List[List[float]] = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split()])
        except ValueError as e:
            raise FormatError(f"matrix line {lineno}: {e}") from e
        if len(rows[-1]) != len(rows[0]):
            raise FormatError(f"matrix line {lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=np.float64)


# =========================================================
# POSTERIOR MATRIX
# =========================================================
@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    """
    Frame-major CTC log-posteriors in nats, column 0 = blank.
    Rows are checked once here; operations trust them afterwards.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise FormatError(f"posterior matrix must be 2-d, got shape {values.shape}")
        if values.shape[1] < 2 and values.shape[0] > 0:
            raise FormatError("posterior matrix needs a blank column plus at least one unit")
        if values.size:
            if np.isnan(values).any():
                raise FormatError("posterior matrix contains NaN")
            sums = np.logaddexp.reduce(values, axis=1)
            bad = np.flatnonzero(np.abs(sums) > NORM_TOL)
            if bad.size:
                t = int(bad[0])
                raise FormatError(f"posterior row {t} is not normalized (log-sum-exp {sums[t]:.3g})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "PosteriorMatrix":
        return cls(log_softmax(logits))

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def tokens(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def __len__(self) -> int:
        return self.frames

    def slice(self, start: int, stop: int) -> "PosteriorMatrix":
        return PosteriorMatrix(self.values[start:stop])

    def greedy(self) -> Tuple[int, ...]:
        """Best-per-frame collapse: merge repeats, drop blanks."""
        out: List[int] = []
        prev = 0
        for k in np.argmax(self.values, axis=1).tolist():
            if k != prev and k != 0:
                out.append(k)
            prev = k
        return tuple(out)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PosteriorMatrix) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    # =====================================================
    # I/O
    # =====================================================
    def write(self, path: Path | str) -> None:
        write_matrix(self.values, path)

    @classmethod
    def read(cls, path: Path | str) -> "PosteriorMatrix":
        return cls(read_matrix(path))
