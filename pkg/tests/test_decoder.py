from __future__ import annotations

import numpy as np
import pytest

from app.ctc.posteriors import PosteriorMatrix
from app.data.models import BeamConfig, ChunkConfig
from app.decoder import (
    LATENCY_SWEEP,
    DecodeSession,
    DecodingGraph,
    UpsampledPosteriorScorer,
    decode_posteriors,
    decode_streaming,
    latency_ms,
    parse_nbest,
    read_nbest,
    session_start,
    write_nbest,
)
from app.errors import ConfigurationError, EmptyResultError, FormatError, SessionStateError
from app.fst import Wfst, compose, shortest_path
from app.graph import build_search_graph
from app.harness.fixtures import generate_fixture
from tests.conftest import toy_system

FAST_BEAM = BeamConfig(beam=10.0, max_active=40, nbest=3)


def posterior_acceptor(lp: np.ndarray, table) -> Wfst:
    """One arc per (frame, token), weighted by the negated log-posterior."""
    a = Wfst(table, table)
    a.add_states(lp.shape[0] + 1)
    a.set_start(0)
    for t in range(lp.shape[0]):
        for k in range(lp.shape[1]):
            a.add_arc(t, k + 1, k + 1, float(-lp[t, k]), t + 1)
    a.set_final(lp.shape[0])
    return a


def outcome(run):
    try:
        return run()
    except EmptyResultError as e:
        return ("empty", e.best_partial)


@pytest.fixture(scope="module")
def noisy():
    task = generate_fixture(seed=5, vocab_size=8, utterances=50, noise=0.4)
    graph = DecodingGraph.of(build_search_graph(task.arpa, task.lexicon, task.inventory))
    return task, graph


# =========================================================
# CHUNK GEOMETRY
# =========================================================
def test_latency_sweep_values():
    assert [latency_ms(c) for c in LATENCY_SWEEP] == [960, 880, 800, 800, 720, 640, 640, 560, 480]
    assert all(c.n_left == 160 for c in LATENCY_SWEEP)


def test_chunk_config_validation():
    with pytest.raises(ConfigurationError):
        ChunkConfig(0, 2, 0).validate()
    with pytest.raises(ConfigurationError):
        ChunkConfig(0, 6, 0).validate()
    with pytest.raises(ConfigurationError):
        ChunkConfig(-4, 8, 0).validate()
    assert ChunkConfig(160, 64, 32).rows_per_chunk == 16


# =========================================================
# EXACTNESS
# =========================================================
def test_unpruned_best_cost_matches_shortest_path():
    rng = np.random.default_rng(60)
    for case in range(54):
        arpa, lexicon, inventory = toy_system(rng)
        s = build_search_graph(arpa, lexicon, inventory)
        T = int(rng.integers(1, 7))
        lp = PosteriorMatrix.from_logits(rng.normal(scale=2.0, size=(T, inventory.token_count)))
        best = decode_posteriors(s, lp, BeamConfig.unpruned(nbest=1), utt_id=f"c{case}").best
        want = shortest_path(compose(posterior_acceptor(lp.values, s.isymbols), s))[0]
        assert best.cost == pytest.approx(want.weight, abs=1e-6)


def test_clean_posteriors_decode_to_the_reference(clean_task, clean_graph):
    for utt_id in clean_task.utterance_ids:
        nbest = decode_posteriors(clean_graph, clean_task.posteriors[utt_id], FAST_BEAM, utt_id=utt_id)
        assert nbest.utt_id == utt_id
        assert nbest.best.words == clean_task.references[utt_id]
        assert nbest.best.units == clean_task.units(utt_id)
        assert nbest.best.text == clean_task.text(utt_id)


def test_nbest_is_distinct_and_ordered(noisy):
    task, graph = noisy
    for utt_id in task.utterance_ids[:10]:
        nbest = outcome(lambda: decode_posteriors(graph, task.posteriors[utt_id], FAST_BEAM, utt_id=utt_id))
        if isinstance(nbest, tuple):
            continue
        costs = [h.cost for h in nbest]
        assert costs == sorted(costs)
        assert len({h.words for h in nbest}) == len(nbest) <= FAST_BEAM.nbest


# =========================================================
# STREAMING
# =========================================================
def test_streaming_matches_single_shot_for_every_chunking(noisy):
    task, graph = noisy
    scorer = UpsampledPosteriorScorer()
    for utt_id in task.utterance_ids:
        post = task.posteriors[utt_id]
        offline = outcome(lambda: decode_posteriors(graph, post, FAST_BEAM, utt_id=utt_id))
        features = UpsampledPosteriorScorer.features_for(post)
        for chunks in LATENCY_SWEEP:
            online = outcome(lambda: decode_streaming(graph, features, chunks, FAST_BEAM, scorer, utt_id=utt_id))
            assert online == offline, (utt_id, chunks)


@pytest.mark.parametrize("push_size", [1, 7, 1000])
def test_streaming_does_not_depend_on_push_size(noisy, push_size):
    task, graph = noisy
    scorer = UpsampledPosteriorScorer()
    chunks = ChunkConfig(160, 48, 24)
    for utt_id in task.utterance_ids[:5]:
        post = task.posteriors[utt_id]
        offline = outcome(lambda: decode_posteriors(graph, post, FAST_BEAM, utt_id=utt_id))
        online = outcome(
            lambda: decode_streaming(
                graph, UpsampledPosteriorScorer.features_for(post), chunks, FAST_BEAM, scorer,
                utt_id=utt_id, push_size=push_size,
            )
        )
        assert online == offline


def test_windows_wait_for_right_context():
    task = generate_fixture(seed=9, vocab_size=4, utterances=1, noise=0.0, min_frames=250)
    graph = build_search_graph(task.arpa, task.lexicon, task.inventory)
    post = task.posteriors["utt0000"]
    features = UpsampledPosteriorScorer.features_for(post)
    session = session_start(graph, ChunkConfig(160, 64, 16), FAST_BEAM, UpsampledPosteriorScorer())
    assert session.push_frames(features[:64]) == 0
    assert session.push_frames(features[64:80]) == 16
    assert session.frames_decoded == 16
    assert session.push_frames(features[80:160]) == 16
    assert session.active_tokens()
    session.push_frames(features[160:])
    assert session.finalize().best.words == task.references["utt0000"]
    assert session.frames_decoded == post.frames


# =========================================================
# SESSION CONTRACT
# =========================================================
def tiny_graph() -> Wfst:
    """One word (label 5) spelled by token 1, readable only after two frames."""
    g = Wfst()
    g.add_states(3)
    g.set_start(0)
    g.add_arc(0, 2, 5, 0.0, 1)
    g.add_arc(1, 2, 0, 0.0, 2)
    g.set_final(2)
    return g


def peaked(frames: int) -> PosteriorMatrix:
    return PosteriorMatrix.from_logits(np.tile([0.0, 5.0, 0.0], (frames, 1)))


def test_no_final_state_reports_best_partial():
    with pytest.raises(EmptyResultError) as info:
        decode_posteriors(tiny_graph(), peaked(1), BeamConfig(), utt_id="short")
    assert info.value.best_partial.words == ("5",)
    assert info.value.best_partial.units == (1,)
    assert "short" in str(info.value)


def test_repeated_frames_collapse_into_one_unit():
    best = decode_posteriors(tiny_graph(), peaked(2), BeamConfig()).best
    assert best.words == ("5",)
    assert best.units == (1,)


def test_session_state_errors():
    session = DecodeSession(tiny_graph(), ChunkConfig(0, 4, 0), BeamConfig(nbest=2))
    with pytest.raises(ConfigurationError):
        session.push_frames(np.zeros((4, 3)))
    session.push_posteriors(peaked(2))
    with pytest.raises(ConfigurationError):
        session.finalize(3)
    with pytest.raises(ConfigurationError):
        session.finalize(0)
    session.finalize(2)
    with pytest.raises(SessionStateError):
        session.finalize()
    with pytest.raises(SessionStateError):
        session.push_posteriors(peaked(1))


def test_scorer_must_return_one_chunk_of_rows():
    class Short:
        def score(self, window):
            return np.zeros((0, 3))

    session = DecodeSession(tiny_graph(), ChunkConfig(0, 8, 0), BeamConfig(), Short())
    with pytest.raises(ConfigurationError):
        session.push_frames(np.zeros((8, 3)))


def test_graph_without_start_is_rejected():
    with pytest.raises(ConfigurationError):
        DecodeSession(Wfst(), ChunkConfig(0, 4, 0), BeamConfig())


def test_max_active_bounds_live_states(clean_task, clean_graph):
    beam = BeamConfig(beam=50.0, max_active=3, nbest=2)
    session = DecodeSession(clean_graph, ChunkConfig(0, 4, 0), beam)
    for row in clean_task.posteriors["utt0000"].values:
        session.push_posteriors(row[None, :])
        assert 1 <= session.num_active <= 3


def test_word_insertion_penalty_lands_in_graph_score(clean_task, clean_graph):
    post = clean_task.posteriors["utt0001"]
    plain = decode_posteriors(clean_graph, post, FAST_BEAM).best
    taxed = decode_posteriors(
        clean_graph, post, BeamConfig(beam=10.0, max_active=40, nbest=3, word_insertion_penalty=0.5)
    ).best
    assert taxed.words == plain.words
    assert taxed.graph_score == pytest.approx(plain.graph_score + 0.5 * len(plain.words))
    assert taxed.acoustic_score == pytest.approx(plain.acoustic_score)


# =========================================================
# N-BEST FILES
# =========================================================
def test_nbest_file_keeps_words_and_scores(tmp_path, clean_task, clean_graph):
    lists = [
        decode_posteriors(clean_graph, clean_task.posteriors[u], FAST_BEAM, utt_id=u)
        for u in clean_task.utterance_ids[:3]
    ]
    write_nbest(lists, tmp_path / "nbest.txt")
    back = read_nbest(tmp_path / "nbest.txt")
    assert [b.utt_id for b in back] == [n.utt_id for n in lists]
    for got, want in zip(back, lists):
        assert [h.words for h in got] == [h.words for h in want]
        assert [(h.graph_score, h.acoustic_score) for h in got] == [
            (h.graph_score, h.acoustic_score) for h in want
        ]


def test_nbest_parse_errors():
    with pytest.raises(FormatError):
        parse_nbest(["u1 1 0.5"])
    with pytest.raises(FormatError):
        parse_nbest(["u1 2 0.5 1.0 w"])
    with pytest.raises(FormatError):
        parse_nbest(["u1 1 x 1.0 w"])
    with pytest.raises(FormatError):
        read_nbest("does/not/exist.txt")
