from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import pandas as pd

from app.config import Settings
from app.ctc.char_lm import NgramCharLm
from app.ctc.loss import ctc_loss, hybrid_loss
from app.ctc.posteriors import PosteriorMatrix
from app.ctc.search import prefix_beam_search
from app.data.feed import CHAR_LM_FILE, LM_FILE, REFERENCES_FILE, UtteranceFeed, read_references, write_references
from app.data.models import FusedHypothesis, Hypothesis, LabelSequence, NBestList, UtteranceResult
from app.decoder.chunking import LATENCY_SWEEP, latency_ms
from app.decoder.nbest import write_fused, write_nbest
from app.decoder.scorers import UpsampledPosteriorScorer
from app.decoder.session import DecodingGraph, decode_posteriors, decode_streaming
from app.errors import ConfigurationError, EmptyResultError, PipelineError
from app.fst import io as fst_io
from app.fst.wfst import Wfst
from app.graph.builder import build_search_graph
from app.graph.lexicon import Lexicon, TokenInventory
from app.harness.metrics import EvalReport, cer, measure_rtf
from app.rescore.baseline import joint_beam_search_baseline
from app.rescore.fusion import choose_nbest_size, rescore_nbest
from app.rescore.scorers import (
    CharLmSequenceScorer,
    InstrumentedScorer,
    ReferenceTableScorer,
    SequenceScorer,
)

logger = logging.getLogger(__name__)

ScorerSpec = Union[str, SequenceScorer, None]


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any failure inside the block as a PipelineError tagged with `name`."""
    try:
        yield
    except PipelineError:
        raise
    except Exception as e:
        logger.error("[PIPELINE] stage %s failed: %s", name, e)
        raise PipelineError(name, e) from e


# =========================================================
# ASSETS
# =========================================================
@dataclass
class DecodingAssets:
    feed: UtteranceFeed
    inventory: TokenInventory
    lexicon: Lexicon
    graph: Optional[Wfst] = None

    @property
    def decoding_graph(self) -> DecodingGraph:
        if self.graph is None:
            raise ConfigurationError("no search graph loaded")
        return DecodingGraph.of(self.graph)

    @classmethod
    def load(
        cls,
        data_dir: Path | str,
        settings: Settings,
        lm_name: str = LM_FILE,
        graph_path: Optional[Path | str] = None,
        with_graph: bool = True,
    ) -> "DecodingAssets":
        feed = UtteranceFeed(data_dir)
        status = feed.connect()
        if not status.ok:
            raise ConfigurationError(f"task directory not usable: {status.reason}")
        return cls.from_feed(feed, settings, lm_name, graph_path, with_graph)

    @classmethod
    def from_feed(
        cls,
        feed: UtteranceFeed,
        settings: Settings,
        lm_name: Path | str = LM_FILE,
        graph_path: Optional[Path | str] = None,
        with_graph: bool = True,
    ) -> "DecodingAssets":
        """Models named by `feed`, without requiring a complete task directory."""
        inventory = feed.inventory()
        lexicon = feed.lexicon()
        graph = None
        if graph_path is not None:
            graph = read_graph(graph_path)
        elif with_graph:
            graph = build_search_graph(feed.arpa(lm_name), lexicon, inventory, budget=settings.det_state_budget)
        return cls(feed, inventory, lexicon, graph)

    def units_of(self, hyp: Hypothesis) -> LabelSequence:
        """Unit labels of a hypothesis; spelled from the lexicon when the decoder did not keep them."""
        if hyp.units or not hyp.words:
            return hyp.units
        return self.inventory.encode(self.lexicon.spell(hyp.words))

    def text_units(self, text: str) -> LabelSequence:
        return self.inventory.encode(tuple(text))

    def audio_ms(self, post: PosteriorMatrix, settings: Settings) -> float:
        return float(post.frames * settings.subsample * settings.frame_shift_ms)


def read_graph(path: Path | str) -> Wfst:
    path = Path(path)
    if path.suffix == ".txt":
        return fst_io.read_text(path)
    return fst_io.read_binary(path)


def write_graph(graph: Wfst, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".txt":
        fst_io.write_text(graph, path)
    else:
        fst_io.write_binary(graph, path)


def make_sequence_scorer(spec: ScorerSpec, assets: DecodingAssets) -> Optional[SequenceScorer]:
    """
    "reference"      favours the task's own references
    "table:FILE"     favours the transcripts in FILE (utt_id<TAB>characters)
    "chararpa:FILE"  character n-gram model read from an ARPA file
    "none"           no second pass
    """
    if spec is None or not isinstance(spec, str):
        return spec
    kind, _, arg = spec.partition(":")
    if kind in ("", "none"):
        return None
    if kind == "reference":
        if not (assets.feed.data_dir / REFERENCES_FILE).is_file():
            raise ConfigurationError("the reference scorer needs a task directory with references; use table:FILE")
        refs = {u: assets.text_units(assets.feed.reference(u)) for u in assets.feed.utterance_ids}
        return ReferenceTableScorer(refs, assets.inventory.token_count)
    if kind == "table" and arg:
        df = read_references(assets.feed.resolve(arg))
        refs = {u: assets.text_units(t) for u, t in zip(df["utt_id"], df["text"])}
        return ReferenceTableScorer(refs, assets.inventory.token_count)
    if kind == "chararpa":
        arpa = assets.feed.arpa(arg or CHAR_LM_FILE)
        return CharLmSequenceScorer(NgramCharLm(arpa, assets.inventory))
    raise ConfigurationError(f"unknown sequence scorer {spec!r}; use reference, table:FILE, chararpa:FILE or none")


# =========================================================
# STAGES
# =========================================================
def first_pass(
    graph: DecodingGraph,
    settings: Settings,
    utt_id: str,
    post: PosteriorMatrix,
    streaming: bool = False,
) -> NBestList:
    """WFST decode of one utterance. A decode that ends nowhere yields its best partial hypothesis."""
    beam = settings.beam_config
    try:
        if streaming:
            chunks = settings.chunk_config
            features = UpsampledPosteriorScorer.features_for(post, chunks.subsample)
            scorer = UpsampledPosteriorScorer(chunks.subsample)
            return decode_streaming(graph, features, chunks, beam, scorer, utt_id=utt_id)
        return decode_posteriors(graph, post, beam, utt_id=utt_id)
    except EmptyResultError as e:
        logger.warning("[DECODE] %s", e)
        partial = (e.best_partial,) if e.best_partial is not None else ()
        return NBestList(utt_id, partial)


def second_pass(
    assets: DecodingAssets,
    settings: Settings,
    nbest: NBestList,
    scorer: Optional[SequenceScorer],
) -> List[FusedHypothesis]:
    if scorer is None or len(nbest) == 0:
        return []
    return rescore_nbest(
        nbest,
        scorer,
        alpha=settings.alpha,
        beta=settings.beta,
        graph_only=settings.graph_only_fusion,
        max_workers=settings.rescore_workers,
        labels_of=assets.units_of,
    )


@dataclass
class PipelineResult:
    report: EvalReport
    trace: pd.DataFrame
    results: List[UtteranceResult]

    @property
    def cer(self) -> float:
        return self.report.cer


def score_results(results: Sequence[UtteranceResult]) -> PipelineResult:
    reports = []
    rows = []
    for r in results:
        rep = cer(r.reference, r.final)
        rep.processing_s = r.decode_seconds + r.rescore_seconds
        rep.audio_ms = r.audio_ms
        reports.append(rep)
        rows.append(
            {
                "utt_id": r.utt_id,
                "reference": r.reference,
                "first_pass": r.first_pass,
                "final": r.final,
                "hypotheses": len(r.nbest),
                "substitutions": rep.substitutions,
                "deletions": rep.deletions,
                "insertions": rep.insertions,
                "ref_chars": rep.ref_chars,
                "cer": rep.cer,
                "decode_s": r.decode_seconds,
                "rescore_s": r.rescore_seconds,
                "audio_ms": r.audio_ms,
            }
        )
    return PipelineResult(EvalReport.combine(reports), pd.DataFrame(rows), list(results))


def write_outputs(result: PipelineResult, out_dir: Path | str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(out / "trace.tsv", sep="\t", index=False)
    write_nbest([r.nbest for r in result.results], out / "nbest.txt")
    rescored = {r.utt_id: r.fused for r in result.results if r.fused}
    if rescored:
        write_fused(rescored, out / "rescored.txt")
    write_references({r.utt_id: r.final for r in result.results}, out / "hyp.txt")
    report = [result.report.summary(), *result.report.to_lines()]
    (out / "report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    return out


def run_pipeline(
    settings: Settings,
    data_dir: Path | str,
    out_dir: Optional[Path | str] = None,
    scorer: ScorerSpec = "reference",
    lm_name: str = LM_FILE,
    streaming: bool = False,
    graph_path: Optional[Path | str] = None,
    assets: Optional[DecodingAssets] = None,
) -> PipelineResult:
    """build -> decode -> rescore -> score over every utterance of a task directory."""
    with stage("build"):
        if assets is None:
            assets = DecodingAssets.load(data_dir, settings, lm_name, graph_path)
        n = choose_nbest_size(settings.nbest)
        seq_scorer = make_sequence_scorer(scorer, assets) if n > 1 else None

    results: List[UtteranceResult] = []
    for utt_id in assets.feed.utterance_ids:
        with stage("decode"):
            post = assets.feed.posteriors(utt_id)
            t0 = time.perf_counter()
            nbest = first_pass(assets.decoding_graph, settings, utt_id, post, streaming)
            decode_s = time.perf_counter() - t0

        with stage("rescore"):
            t0 = time.perf_counter()
            fused = second_pass(assets, settings, nbest, seq_scorer)
            rescore_s = time.perf_counter() - t0

        first = nbest.best.text if nbest.best is not None else ""
        results.append(
            UtteranceResult(
                utt_id=utt_id,
                reference=assets.feed.reference(utt_id),
                first_pass=first,
                final=fused[0].text if fused else first,
                nbest=nbest,
                fused=fused,
                decode_seconds=decode_s,
                rescore_seconds=rescore_s,
                audio_ms=assets.audio_ms(post, settings),
            )
        )

    with stage("score"):
        result = score_results(results)
        if out_dir is not None:
            write_outputs(result, out_dir)
    logger.info("[PIPELINE] %s", result.report.summary())
    return result


# =========================================================
# LOSS
# =========================================================
def loss_table(assets: DecodingAssets, settings: Settings, scorer: ScorerSpec = "reference") -> pd.DataFrame:
    """
    CTC loss of every reference, plus the hybrid training objective when a
    sequence scorer supplies the attention-side loss by teacher forcing.
    """
    seq_scorer = make_sequence_scorer(scorer, assets)
    rows = []
    for utt_id in assets.feed.utterance_ids:
        post = assets.feed.posteriors(utt_id)
        ref = assets.text_units(assets.feed.reference(utt_id))
        row: Dict[str, object] = {"utt_id": utt_id, "frames": post.frames, "ctc_loss": ctc_loss(post, ref)}
        if seq_scorer is not None:
            handle = seq_scorer.prepare(utt_id)
            att = -float(seq_scorer.score(handle, ref).sum())
            row["attention_loss"] = att
            row["hybrid_loss"] = hybrid_loss(row["ctc_loss"], att, settings.hybrid_lambda)
        rows.append(row)
    return pd.DataFrame(rows)


# =========================================================
# BENCH
# =========================================================
def latency_sweep(
    settings: Settings,
    data_dir: Path | str,
    scorer: ScorerSpec = "reference",
    configs=LATENCY_SWEEP,
    assets: Optional[DecodingAssets] = None,
) -> pd.DataFrame:
    """Chunked decoding across chunk configurations, checked against a single-shot decode."""
    assets = assets or DecodingAssets.load(data_dir, settings)
    offline = run_pipeline(settings, data_dir, scorer=scorer, assets=assets)
    reference = {r.utt_id: r.nbest for r in offline.results}
    rows = []
    for chunks in configs:
        s = settings.with_overrides(n_left=chunks.n_left, n_center=chunks.n_center, n_right=chunks.n_right)
        s.validate()
        res = run_pipeline(s, data_dir, scorer=scorer, streaming=True, assets=assets)
        rows.append(
            {
                "n_left": chunks.n_left,
                "n_center": chunks.n_center,
                "n_right": chunks.n_right,
                "latency_ms": latency_ms(s.chunk_config),
                "cer": res.cer,
                "rtf": res.report.rtf,
                "matches_offline": all(r.nbest == reference[r.utt_id] for r in res.results),
            }
        )
        logger.info("[BENCH] chunk %s: latency %d ms, %s", chunks, rows[-1]["latency_ms"], res.report.summary())
    return pd.DataFrame(rows)


def nbest_sweep(
    settings: Settings,
    data_dir: Path | str,
    sizes: Sequence[int] = (1, 2, 3, 4, 5),
    scorer: ScorerSpec = "reference",
    assets: Optional[DecodingAssets] = None,
) -> pd.DataFrame:
    """CER and RTF against the number of hypotheses handed to the second pass; size 1 skips it."""
    assets = assets or DecodingAssets.load(data_dir, settings)
    base = make_sequence_scorer(scorer, assets)
    counted = InstrumentedScorer(base) if base is not None else None
    rows = []
    for n in sizes:
        s = settings.with_overrides(nbest=choose_nbest_size(n))
        s.validate()
        if counted is not None:
            counted.reset()
        res = run_pipeline(s, data_dir, scorer=counted, assets=assets)
        rows.append(
            {
                "nbest": n,
                "cer": res.cer,
                "rtf": res.report.rtf,
                "rescore_calls": counted.calls if counted is not None else 0,
            }
        )
    return pd.DataFrame(rows)


STRATEGIES = ("joint-beam-search", "two-pass", "ctc-prefix", "ctc-prefix+lm", "ctc-wfst")


def strategy_comparison(
    settings: Settings,
    data_dir: Path | str,
    scorer: ScorerSpec = "reference",
    delay_s: float = 0.0,
    char_lm: str = CHAR_LM_FILE,
    strategies: Sequence[str] = STRATEGIES,
    assets: Optional[DecodingAssets] = None,
) -> pd.DataFrame:
    """
    Every decoding strategy over the same task. The autoregressive
    baseline and the two-pass decoder share one delayed, call-counting
    scorer so wall time and call counts are comparable.
    """
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ConfigurationError(f"unknown strategies: {', '.join(unknown)}")
    assets = assets or DecodingAssets.load(data_dir, settings)
    base = make_sequence_scorer(scorer, assets)
    counted = InstrumentedScorer(base, delay_s) if base is not None else None
    lm = NgramCharLm(assets.feed.arpa(char_lm), assets.inventory)

    def decode(strategy: str, utt_id: str, post: PosteriorMatrix) -> str:
        if strategy == "joint-beam-search":
            labels = joint_beam_search_baseline(
                post,
                counted,
                beam=settings.search_beam,
                ctc_weight=settings.ctc_weight if counted is not None else 1.0,
                utt_id=utt_id,
            )
            return "".join(assets.inventory.decode(labels))
        if strategy == "ctc-prefix":
            best = prefix_beam_search(post, settings.search_beam, inventory=assets.inventory, utt_id=utt_id).best
            return best.text if best else ""
        if strategy == "ctc-prefix+lm":
            best = prefix_beam_search(
                post, settings.search_beam, lm=lm, lm_weight=settings.lm_weight, inventory=assets.inventory, utt_id=utt_id
            ).best
            return best.text if best else ""
        nbest = first_pass(assets.decoding_graph, settings, utt_id, post)
        if strategy == "two-pass":
            fused = second_pass(assets, settings, nbest, counted)
            if fused:
                return fused[0].text
        return nbest.best.text if nbest.best else ""

    posts = {u: assets.feed.posteriors(u) for u in assets.feed.utterance_ids}
    audio = sum(assets.audio_ms(p, settings) for p in posts.values())
    rows = []
    for strategy in strategies:
        reports: List[EvalReport] = []

        def run() -> None:
            # counts and scores describe a single run
            if counted is not None:
                counted.reset()
            reports.clear()
            for utt_id, post in posts.items():
                reports.append(cer(assets.feed.reference(utt_id), decode(strategy, utt_id, post)))

        strategy_rtf = measure_rtf(run, audio, repeats=settings.rtf_repeats)
        elapsed = strategy_rtf * audio / 1000.0
        report = EvalReport.combine(reports)
        report.processing_s = elapsed
        report.audio_ms = audio
        rows.append(
            {
                "strategy": strategy,
                "cer": report.cer,
                "seconds": elapsed,
                "rtf": strategy_rtf,
                "scorer_calls": counted.calls if counted is not None else 0,
            }
        )
        logger.info("[BENCH] %s: %s", strategy, report.summary())
    return pd.DataFrame(rows)
