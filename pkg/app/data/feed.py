from __future__ import annotations

import logging
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from app.ctc.posteriors import PosteriorMatrix
from app.data.models import FeedSnapshot, FeedStatus
from app.errors import FormatError
from app.graph.arpa import ArpaModel, read_arpa
from app.graph.lexicon import Lexicon, TokenInventory

logger = logging.getLogger(__name__)

UNITS_FILE = "units.txt"
LEXICON_FILE = "lexicon.txt"
REFERENCES_FILE = "references.txt"
POSTERIOR_DIR = "posteriors"
LM_FILE = "lm.arpa"
UNIFORM_LM_FILE = "lm_uniform.arpa"
CHAR_LM_FILE = "char_lm.arpa"
POSTERIOR_SUFFIXES = (".post", ".txt")

REQUIRED = (UNITS_FILE, LEXICON_FILE, REFERENCES_FILE, POSTERIOR_DIR)


def read_references(path: Path | str) -> pd.DataFrame:
    """`utt_id<TAB>characters` lines into a two-column frame indexed by utterance."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"reference file not found: {path}")
    try:
        df = pd.read_csv(
            path,
            sep="\t",
            header=None,
            names=["utt_id", "text"],
            dtype=str,
            keep_default_na=False,
            quoting=3,
        )
    except (pd.errors.ParserError, ValueError) as e:
        raise FormatError(f"{path}: {e}") from e
    if df["utt_id"].duplicated().any():
        dup = df.loc[df["utt_id"].duplicated(), "utt_id"].iloc[0]
        raise FormatError(f"{path}: utterance {dup!r} listed twice")
    df["text"] = df["text"].fillna("")
    return df.set_index("utt_id", drop=False)


def write_references(refs: Dict[str, str], path: Path | str) -> None:
    df = pd.DataFrame({"utt_id": list(refs), "text": list(refs.values())})
    df.to_csv(path, sep="\t", header=False, index=False, quoting=3)


class UtteranceFeed:
    """
    A task directory: units, lexicon, ARPA models, references and one
    posterior matrix per utterance under posteriors/. Units, lexicon and
    the posterior directory may also be given as separate paths.
    """

    def __init__(
        self,
        data_dir: Path | str = ".",
        units: Optional[Path | str] = None,
        lexicon: Optional[Path | str] = None,
        posterior_dir: Optional[Path | str] = None,
    ):
        self.data_dir = Path(data_dir)
        self.units_path = Path(units) if units else self.data_dir / UNITS_FILE
        self.lexicon_path = Path(lexicon) if lexicon else self.data_dir / LEXICON_FILE
        self.posterior_dir = Path(posterior_dir) if posterior_dir else self.data_dir / POSTERIOR_DIR

    def connect(self) -> FeedStatus:
        if not self.data_dir.is_dir():
            return FeedStatus(ok=False, reason=f"data directory not found: {self.data_dir}")

        missing = tuple(name for name in REQUIRED if not (self.data_dir / name).exists())
        if missing:
            return FeedStatus(ok=False, reason=f"missing {', '.join(missing)}", missing=missing)

        try:
            refs = self.references
            inventory = self.inventory()
        except FormatError as e:
            return FeedStatus(ok=False, reason=str(e))

        unmatched = [u for u in refs.index if self._posterior_path(u) is None]
        if unmatched:
            return FeedStatus(
                ok=False,
                reason=f"{len(unmatched)} utterances without posteriors, first {unmatched[0]!r}",
                utterances=len(refs),
                units=len(inventory.units),
            )
        logger.info("[FEED] %s: %d utterances, %d units", self.data_dir, len(refs), len(inventory.units))
        return FeedStatus(ok=True, reason="OK", utterances=len(refs), units=len(inventory.units))

    # =====================================================
    # MODELS
    # =====================================================
    def inventory(self) -> TokenInventory:
        return TokenInventory.read(self.units_path)

    def lexicon(self) -> Lexicon:
        return Lexicon.read(self.lexicon_path)

    def arpa(self, name: str = LM_FILE) -> ArpaModel:
        return read_arpa(self.resolve(name))

    def resolve(self, name: Path | str) -> Path:
        """Relative names are looked up inside the task directory first."""
        path = Path(name)
        if not path.is_absolute() and (self.data_dir / path).exists():
            return self.data_dir / path
        return path

    # =====================================================
    # UTTERANCES
    # =====================================================
    @cached_property
    def references(self) -> pd.DataFrame:
        return read_references(self.data_dir / REFERENCES_FILE)

    @property
    def utterance_ids(self) -> List[str]:
        return list(self.references.index)

    def reference(self, utt_id: str) -> str:
        try:
            return str(self.references.at[utt_id, "text"])
        except KeyError:
            raise FormatError(f"no reference for utterance {utt_id!r}") from None

    def _posterior_path(self, utt_id: str) -> Path | None:
        for suffix in POSTERIOR_SUFFIXES:
            path = self.posterior_dir / f"{utt_id}{suffix}"
            if path.is_file():
                return path
        return None

    def posteriors(self, utt_id: str) -> PosteriorMatrix:
        path = self._posterior_path(utt_id)
        if path is None:
            raise FormatError(f"no posteriors for utterance {utt_id!r} under {self.posterior_dir}")
        return PosteriorMatrix.read(path)

    def posterior_ids(self) -> List[str]:
        """Every utterance with a posterior file, referenced or not."""
        if not self.posterior_dir.is_dir():
            raise FormatError(f"posterior directory not found: {self.posterior_dir}")
        return sorted({p.stem for p in self.posterior_dir.iterdir() if p.is_file() and p.suffix in POSTERIOR_SUFFIXES})

    def snapshot(self, subsample: int = 4, frame_shift_ms: int = 10) -> FeedSnapshot:
        frames = {u: self.posteriors(u).frames for u in self.utterance_ids}
        total = sum(frames.values())
        return FeedSnapshot(
            data_dir=self.data_dir.as_posix(),
            utterances=len(frames),
            frames=total,
            audio_ms=float(total * subsample * frame_shift_ms),
            longest_utt=max(frames, key=frames.get) if frames else "",
        )
