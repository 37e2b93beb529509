from app.rescore.baseline import joint_beam_search_baseline
from app.rescore.fusion import DEFAULT_NBEST, choose_nbest_size, rescore_nbest
from app.rescore.scorers import (
    CharLmSequenceScorer,
    InstrumentedScorer,
    ReferenceTableScorer,
    SequenceScorer,
    teacher_forced,
)

__all__ = [
    "DEFAULT_NBEST",
    "CharLmSequenceScorer",
    "InstrumentedScorer",
    "ReferenceTableScorer",
    "SequenceScorer",
    "choose_nbest_size",
    "joint_beam_search_baseline",
    "rescore_nbest",
    "teacher_forced",
]
