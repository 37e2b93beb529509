from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from app.config import Settings, load_settings
from app.data.feed import LM_FILE, UtteranceFeed, read_references
from app.decoder.nbest import read_nbest, write_fused, write_nbest
from app.decoder.session import DecodingGraph
from app.errors import ConfigurationError, DecoderError, PipelineError
from app.harness.fixtures import generate_fixture
from app.harness.metrics import EvalReport, cer
from app.harness.pipeline import (
    STRATEGIES,
    DecodingAssets,
    first_pass,
    latency_sweep,
    loss_table,
    make_sequence_scorer,
    nbest_sweep,
    read_graph,
    run_pipeline,
    second_pass,
    strategy_comparison,
    write_graph,
)
from app.log import setup_logging

logger = logging.getLogger(__name__)


# =========================================================
# FLAG -> SETTING MAP
# =========================================================
# Only flags that were given override the settings.
OVERRIDES = {
    "decode_beam": "decode_beam",
    "max_active": "max_active",
    "nbest": "nbest",
    "alpha": "alpha",
    "beta": "beta",
    "lm_weight": "lm_weight",
    "ctc_weight": "ctc_weight",
    "search_beam": "search_beam",
    "chunk_left": "n_left",
    "chunk_center": "n_center",
    "chunk_right": "n_right",
    "workers": "rescore_workers",
    "hybrid_lambda": "hybrid_lambda",
}


def _settings_from(args: argparse.Namespace) -> Settings:
    flags: Dict[str, Any] = {}
    chunk = getattr(args, "chunk", None)
    if chunk is not None:
        flags["n_left"], flags["n_center"], flags["n_right"] = chunk
    for flag, field in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            flags[field] = value
    if getattr(args, "graph_only", False):
        flags["graph_only_fusion"] = True
    return load_settings(args.config, **flags)


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _chunk(text: str) -> Tuple[int, int, int]:
    sizes = _int_list(text)
    if len(sizes) != 3:
        raise argparse.ArgumentTypeError(f"--chunk takes Nl,Nc,Nr, got {text!r}")
    return sizes[0], sizes[1], sizes[2]


# =========================================================
# UTIL: printing
# =========================================================
def _banner(title: str, settings: Settings) -> None:
    print("===================================")
    print(f" {title}")
    print(f" Beam   : {settings.decode_beam} | max-active {settings.max_active} | n-best {settings.nbest}")
    print(f" Fusion : alpha {settings.alpha} | beta {settings.beta}" + (" | graph-only" if settings.graph_only_fusion else ""))
    print("===================================")


def _print_report(report: EvalReport) -> None:
    print(report.summary())
    for line in report.to_lines():
        print(line)


def _print_table(df: pd.DataFrame) -> None:
    with pd.option_context("display.max_rows", None, "display.width", 160):
        print(df.to_string(index=False, float_format=lambda v: f"{v:.4f}"))


# =========================================================
# COMMANDS
# =========================================================
def _feed_from(args: argparse.Namespace) -> UtteranceFeed:
    """Task directory, separate files, or both; a named file wins over the directory."""
    return UtteranceFeed(
        args.data or ".",
        units=getattr(args, "units", None),
        lexicon=getattr(args, "lexicon", None),
        posterior_dir=getattr(args, "posteriors", None),
    )


def cmd_build_graph(args: argparse.Namespace, settings: Settings) -> int:
    assets = DecodingAssets.from_feed(_feed_from(args), settings, lm_name=args.arpa or args.lm)
    write_graph(assets.graph, args.out)
    print(f"✅ search graph: {assets.graph.num_states} states, {assets.graph.num_arcs} arcs -> {args.out}")
    return 0


def cmd_decode(args: argparse.Namespace, settings: Settings) -> int:
    if args.data is None and (args.graph is None or args.posteriors is None):
        raise ConfigurationError("decode needs --graph and --posteriors, or --data")
    feed = _feed_from(args)
    if args.graph is not None:
        graph = DecodingGraph.of(read_graph(args.graph))
    else:
        graph = DecodingAssets.from_feed(feed, settings, lm_name=args.lm).decoding_graph
    utt_ids = feed.posterior_ids() if args.posteriors else feed.utterance_ids
    streaming = args.streaming or args.chunk is not None
    nbests = []
    for utt_id in utt_ids:
        nbest = first_pass(graph, settings, utt_id, feed.posteriors(utt_id), streaming)
        nbests.append(nbest)
        print(f"  - {utt_id} | {nbest.best.text if nbest.best else '<empty>'}")
    write_nbest(nbests, args.out)
    print(f"✅ n-best lists for {len(nbests)} utterances -> {args.out}")
    return 0


def cmd_rescore(args: argparse.Namespace, settings: Settings) -> int:
    assets = DecodingAssets.from_feed(_feed_from(args), settings, with_graph=False)
    scorer = make_sequence_scorer(args.scorer, assets)
    if scorer is None:
        raise ConfigurationError("rescore needs a sequence scorer")
    results = {}
    for nbest in read_nbest(args.nbest_file):
        fused = second_pass(assets, settings, nbest.truncate(settings.nbest), scorer)
        results[nbest.utt_id] = fused
        print(f"  - {nbest.utt_id} | {fused[0].text if fused else '<empty>'}")
    write_fused(results, args.out)
    print(f"✅ rescored {len(results)} utterances -> {args.out}")
    return 0


def cmd_score(args: argparse.Namespace, settings: Settings) -> int:
    if args.loss:
        if not args.data:
            raise ConfigurationError("score --loss needs --data")
        assets = DecodingAssets.load(args.data, settings, with_graph=False)
        df = loss_table(assets, settings, args.scorer)
        _print_table(df)
        print(f"mean ctc_loss={df['ctc_loss'].mean():.6f}")
        if "hybrid_loss" in df:
            print(f"mean hybrid_loss={df['hybrid_loss'].mean():.6f} (lambda={settings.hybrid_lambda})")
        return 0

    if not args.ref or not args.hyp:
        raise ConfigurationError("score needs --ref and --hyp (or --loss with --data)")
    refs = read_references(args.ref)
    hyps = read_references(args.hyp)
    missing = [u for u in refs.index if u not in hyps.index]
    if missing:
        logger.warning("[SCORE] %d utterances have no hypothesis; scored as empty", len(missing))
    report = EvalReport.combine(
        cer(ref, hyps.at[utt, "text"] if utt in hyps.index else "") for utt, ref in zip(refs.index, refs["text"])
    )
    _print_report(report)
    return 0


def cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    assets = DecodingAssets.load(args.data, settings)
    ran = False
    if args.latency_sweep:
        print("\n[BENCH] latency sweep")
        _print_table(latency_sweep(settings, args.data, args.scorer, assets=assets))
        ran = True
    if args.nbest_sweep:
        print("\n[BENCH] n-best sweep")
        _print_table(nbest_sweep(settings, args.data, args.nbest_sweep, args.scorer, assets=assets))
        ran = True
    if args.strategies is not None or not ran:
        print("\n[BENCH] decoding strategies")
        df = strategy_comparison(
            settings,
            args.data,
            args.scorer,
            delay_s=args.delay_ms / 1000.0,
            strategies=args.strategies or STRATEGIES,
            assets=assets,
        )
        _print_table(df)
    return 0


def cmd_gen_fixture(args: argparse.Namespace, settings: Settings) -> int:
    task = generate_fixture(
        seed=args.seed,
        vocab_size=args.vocab_size,
        utterances=args.utterances,
        noise=args.noise,
        num_units=args.num_units,
        min_frames=args.min_frames,
        subsample=settings.subsample,
        frame_shift_ms=settings.frame_shift_ms,
    )
    out = task.write(args.out)
    snap = UtteranceFeed(out).snapshot(settings.subsample, settings.frame_shift_ms)
    print(f"✅ fixture: {snap.utterances} utterances, {snap.frames} frames, {snap.audio_ms / 1000:.1f} s -> {out}")
    return 0


def cmd_pipeline(args: argparse.Namespace, settings: Settings) -> int:
    _banner("TWO-PASS DECODING PIPELINE", settings)
    result = run_pipeline(
        settings,
        args.data,
        out_dir=args.out,
        scorer=args.scorer,
        lm_name=args.lm,
        streaming=args.streaming or args.chunk is not None,
        graph_path=args.graph,
    )
    _print_report(result.report)
    if args.out:
        print(f"✅ trace and report -> {args.out}")
    return 0


COMMANDS = {
    "build-graph": cmd_build_graph,
    "decode": cmd_decode,
    "rescore": cmd_rescore,
    "score": cmd_score,
    "bench": cmd_bench,
    "gen-fixture": cmd_gen_fixture,
    "pipeline": cmd_pipeline,
}


# =========================================================
# PARSER
# =========================================================
def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam", "--decode-beam", dest="decode_beam", type=float)
    p.add_argument("--max-active", type=int)
    p.add_argument("--nbest", type=int)
    p.add_argument("--chunk", type=_chunk, help="Nl,Nc,Nr in input frames; implies --streaming")
    p.add_argument("--chunk-left", type=int)
    p.add_argument("--chunk-center", type=int)
    p.add_argument("--chunk-right", type=int)
    p.add_argument("--streaming", action="store_true", help="decode chunk by chunk instead of in one shot")


def _add_fusion_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scorer", default="reference", help="reference | table:FILE | chararpa:FILE | none")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--graph-only", action="store_true", help="fuse the graph score only")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app", description="Streaming WFST decoding with n-best rescoring")
    parser.add_argument("--config", help="KEY=value settings file")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="compile T o min(det(L o G))")
    p.add_argument("--arpa", help="word ARPA model (default: --lm inside --data)")
    p.add_argument("--lexicon")
    p.add_argument("--units")
    p.add_argument("--out", required=True, help="graph file; .txt for text, binary otherwise")
    p.add_argument("--data", help="task directory supplying any file not named")
    p.add_argument("--lm", default=LM_FILE)

    p = sub.add_parser("decode", help="first pass: n-best lists from posteriors")
    p.add_argument("--graph")
    p.add_argument("--posteriors", help="directory of per-utterance posterior files")
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="task directory; builds the graph when --graph is absent")
    p.add_argument("--lm", default=LM_FILE)
    _add_search_flags(p)

    p = sub.add_parser("rescore", help="second pass over an n-best file")
    p.add_argument("--nbest", "--nbest-file", dest="nbest_file", required=True, help="n-best file from decode")
    p.add_argument("--nbest-size", dest="nbest", type=int, help="hypotheses kept per utterance")
    p.add_argument("--units")
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="task directory supplying units, lexicon and references")
    _add_fusion_flags(p)

    p = sub.add_parser("score", help="CER of hypotheses, or CTC / hybrid loss with --loss")
    p.add_argument("--ref")
    p.add_argument("--hyp")
    p.add_argument("--loss", action="store_true")
    p.add_argument("--data")
    p.add_argument("--scorer", default="reference")
    p.add_argument("--hybrid-lambda", type=float)

    p = sub.add_parser("bench", help="latency sweep, n-best sweep and strategy comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--latency-sweep", action="store_true")
    p.add_argument("--nbest-sweep", type=_int_list)
    p.add_argument("--strategies", nargs="*", choices=STRATEGIES)
    p.add_argument("--delay-ms", type=float, default=0.0, help="wall-clock cost charged per scorer call")
    p.add_argument("--search-beam", type=int)
    p.add_argument("--ctc-weight", type=float)
    p.add_argument("--lm-weight", type=float)
    _add_search_flags(p)
    _add_fusion_flags(p)

    p = sub.add_parser("gen-fixture", help="write a synthetic task with known references")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=12)
    p.add_argument("--utterances", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--num-units", type=int)
    p.add_argument("--min-frames", type=int, default=0)

    p = sub.add_parser("pipeline", help="build -> decode -> rescore -> score")
    p.add_argument("--data", required=True)
    p.add_argument("--lm", default=LM_FILE)
    p.add_argument("--graph")
    p.add_argument("--out")
    _add_search_flags(p)
    _add_fusion_flags(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _settings_from(args)
    except ConfigurationError as e:
        print(f"🔴 {e}", file=sys.stderr)
        return 2
    setup_logging(args.log_level or settings.log_level)

    try:
        return COMMANDS[args.command](args, settings)
    except PipelineError as e:
        print(f"🔴 pipeline failed in stage {e.stage}: {e.cause}", file=sys.stderr)
        return 1
    except DecoderError as e:
        print(f"🔴 {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
