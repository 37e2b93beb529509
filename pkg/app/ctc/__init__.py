from app.ctc.char_lm import EOS_INDEX, CharLmScorer, NgramCharLm, UniformCharLm, sequence_logprob
from app.ctc.loss import ctc_grad, ctc_loss, ctc_loss_and_grad, hybrid_loss, required_frames
from app.ctc.posteriors import PosteriorMatrix, log_softmax, read_matrix, write_matrix
from app.ctc.search import CtcPrefixScorer, ctc_prefix_score, prefix_beam_search

__all__ = [
    "EOS_INDEX",
    "CharLmScorer",
    "CtcPrefixScorer",
    "NgramCharLm",
    "PosteriorMatrix",
    "UniformCharLm",
    "ctc_grad",
    "ctc_loss",
    "ctc_loss_and_grad",
    "ctc_prefix_score",
    "hybrid_loss",
    "log_softmax",
    "prefix_beam_search",
    "read_matrix",
    "required_frames",
    "sequence_logprob",
    "write_matrix",
]
