from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel

from app.data.models import BeamConfig, ChunkConfig
from app.errors import ConfigurationError


# =========================================================
# LOAD .env (process env wins over the file)
# =========================================================
BASE_DIR = Path(__file__).resolve().parent.parent
ENV_PATH = BASE_DIR / ".env"
load_dotenv(dotenv_path=ENV_PATH, override=False)


# =========================================================
# ENV HELPERS (robust)
# =========================================================
def _get(src: Mapping[str, Optional[str]], key: str, default: str = "") -> str:
    return (src.get(key, default) or "").strip()


def _get_int(src: Mapping[str, Optional[str]], key: str, default: int) -> int:
    v = _get(src, key, "")
    if v == "":
        return default
    try:
        return int(v)
    except ValueError:
        return default


def _get_float(src: Mapping[str, Optional[str]], key: str, default: float) -> float:
    v = _get(src, key, "")
    if v == "":
        return default
    try:
        return float(v)
    except ValueError:
        return default


def _get_bool(src: Mapping[str, Optional[str]], key: str, default: bool = False) -> bool:
    v = _get(src, key, "")
    if v == "":
        return default
    return v.lower() in ("1", "true", "yes", "y", "on")


class Settings(BaseModel):
    # =====================================================
    # RUNTIME
    # =====================================================
    log_level: str = "INFO"
    artifacts_dir: str = str((BASE_DIR / "artifacts").resolve())

    # =====================================================
    # TRAINING-SIDE LOSS (hybrid CTC / attention)
    # =====================================================
    hybrid_lambda: float = 0.3

    # =====================================================
    # AUTOREGRESSIVE BASELINE / PREFIX SEARCH
    # =====================================================
    search_beam: int = 10
    ctc_weight: float = 0.5
    lm_weight: float = 0.3

    # =====================================================
    # FIRST PASS (WFST)
    # =====================================================
    decode_beam: float = 16.0
    max_active: int = 200
    acoustic_scale: float = 1.0
    word_insertion_penalty: float = 0.0
    det_state_budget: int = 1_000_000

    # Chunking, in input frames
    n_left: int = 160
    n_center: int = 64
    n_right: int = 32
    frame_shift_ms: int = 10
    subsample: int = 4

    # =====================================================
    # SECOND PASS
    # =====================================================
    nbest: int = 5
    alpha: float = 1.0
    beta: float = 1.0
    graph_only_fusion: bool = False
    rescore_workers: int = 1

    # =====================================================
    # HARNESS
    # =====================================================
    rtf_repeats: int = 5

    @classmethod
    def from_mapping(cls, src: Mapping[str, Optional[str]]) -> "Settings":
        d = cls()
        return cls(
            log_level=_get(src, "LOG_LEVEL", d.log_level).upper(),
            artifacts_dir=_get(src, "ARTIFACTS_DIR", d.artifacts_dir),
            hybrid_lambda=_get_float(src, "HYBRID_LAMBDA", d.hybrid_lambda),
            search_beam=_get_int(src, "SEARCH_BEAM", d.search_beam),
            ctc_weight=_get_float(src, "CTC_WEIGHT", d.ctc_weight),
            lm_weight=_get_float(src, "LM_WEIGHT", d.lm_weight),
            decode_beam=_get_float(src, "DECODE_BEAM", d.decode_beam),
            max_active=_get_int(src, "MAX_ACTIVE", d.max_active),
            acoustic_scale=_get_float(src, "ACOUSTIC_SCALE", d.acoustic_scale),
            word_insertion_penalty=_get_float(src, "WORD_INSERTION_PENALTY", d.word_insertion_penalty),
            det_state_budget=_get_int(src, "DET_STATE_BUDGET", d.det_state_budget),
            n_left=_get_int(src, "CHUNK_LEFT", d.n_left),
            n_center=_get_int(src, "CHUNK_CENTER", d.n_center),
            n_right=_get_int(src, "CHUNK_RIGHT", d.n_right),
            frame_shift_ms=_get_int(src, "FRAME_SHIFT_MS", d.frame_shift_ms),
            subsample=_get_int(src, "SUBSAMPLE", d.subsample),
            nbest=_get_int(src, "NBEST", d.nbest),
            alpha=_get_float(src, "ALPHA", d.alpha),
            beta=_get_float(src, "BETA", d.beta),
            graph_only_fusion=_get_bool(src, "GRAPH_ONLY_FUSION", d.graph_only_fusion),
            rescore_workers=_get_int(src, "RESCORE_WORKERS", d.rescore_workers),
            rtf_repeats=_get_int(src, "RTF_REPEATS", d.rtf_repeats),
        )

    def with_overrides(self, **flags: Any) -> "Settings":
        """Apply CLI flags on top; `None` means the flag was not given."""
        update = {k: v for k, v in flags.items() if v is not None}
        unknown = sorted(set(update) - set(type(self).model_fields))
        if unknown:
            raise ConfigurationError(f"unknown setting(s): {', '.join(unknown)}")
        return self.model_copy(update=update)

    # =====================================================
    # VALIDATION
    # =====================================================
    def validate(self) -> None:
        errors = []

        if not 0.0 <= self.hybrid_lambda <= 1.0:
            errors.append("HYBRID_LAMBDA must lie in [0, 1]")
        if not 0.0 <= self.ctc_weight <= 1.0:
            errors.append("CTC_WEIGHT must lie in [0, 1]")
        if self.search_beam < 1:
            errors.append("SEARCH_BEAM must be >= 1")
        if self.nbest < 1:
            errors.append("NBEST must be >= 1")
        if self.det_state_budget < 1:
            errors.append("DET_STATE_BUDGET must be >= 1")
        if self.rescore_workers < 1:
            errors.append("RESCORE_WORKERS must be >= 1")
        if self.rtf_repeats < 1:
            errors.append("RTF_REPEATS must be >= 1")

        errors.extend(self.chunk_config.problems())
        errors.extend(self.beam_config.problems())

        if errors:
            raise ConfigurationError("CONFIG ERROR:\n- " + "\n- ".join(errors))

    # Convenience views
    @property
    def chunk_config(self) -> ChunkConfig:
        return ChunkConfig(
            n_left=self.n_left,
            n_center=self.n_center,
            n_right=self.n_right,
            frame_shift_ms=self.frame_shift_ms,
            subsample=self.subsample,
        )

    @property
    def beam_config(self) -> BeamConfig:
        return BeamConfig(
            beam=self.decode_beam,
            max_active=self.max_active,
            acoustic_scale=self.acoustic_scale,
            word_insertion_penalty=self.word_insertion_penalty,
            nbest=self.nbest,
        )


def load_settings(config_file: Optional[Path | str] = None, **flags: Any) -> Settings:
    """defaults < process env / .env < config file < flags"""
    src: dict[str, Optional[str]] = dict(os.environ)
    if config_file is not None:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        src.update(dotenv_values(path))
    s = Settings.from_mapping(src).with_overrides(**flags)
    s.validate()
    return s


settings = Settings.from_mapping(dict(os.environ))
