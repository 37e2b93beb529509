from app.harness.fixtures import SyntheticTask, generate_fixture, train_bigram_arpa, uniform_arpa
from app.harness.metrics import EvalReport, cer, edit_ops, measure_rtf, rtf
from app.harness.pipeline import (
    STRATEGIES,
    DecodingAssets,
    PipelineResult,
    latency_sweep,
    loss_table,
    nbest_sweep,
    run_pipeline,
    strategy_comparison,
)

__all__ = [
    "STRATEGIES",
    "DecodingAssets",
    "EvalReport",
    "PipelineResult",
    "SyntheticTask",
    "cer",
    "edit_ops",
    "generate_fixture",
    "latency_sweep",
    "loss_table",
    "measure_rtf",
    "nbest_sweep",
    "rtf",
    "run_pipeline",
    "strategy_comparison",
    "train_bigram_arpa",
    "uniform_arpa",
]
