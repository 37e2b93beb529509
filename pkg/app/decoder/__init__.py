from app.decoder.chunking import LATENCY_SWEEP, Window, cut_window, latency_ms
from app.decoder.nbest import fused_lines, nbest_lines, parse_nbest, read_nbest, write_fused, write_nbest
from app.decoder.scorers import AcousticScorer, UpsampledPosteriorScorer
from app.decoder.session import (
    DecodeSession,
    DecodingGraph,
    decode_posteriors,
    decode_streaming,
    session_start,
)

__all__ = [
    "LATENCY_SWEEP",
    "AcousticScorer",
    "DecodeSession",
    "DecodingGraph",
    "UpsampledPosteriorScorer",
    "Window",
    "cut_window",
    "decode_posteriors",
    "decode_streaming",
    "fused_lines",
    "latency_ms",
    "nbest_lines",
    "parse_nbest",
    "read_nbest",
    "session_start",
    "write_fused",
    "write_nbest",
]
