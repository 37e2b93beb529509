from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from app.ctc import (
    CtcPrefixScorer,
    NgramCharLm,
    PosteriorMatrix,
    UniformCharLm,
    ctc_grad,
    ctc_loss,
    ctc_loss_and_grad,
    ctc_prefix_score,
    hybrid_loss,
    prefix_beam_search,
    required_frames,
    sequence_logprob,
)
from app.errors import ConfigurationError, FormatError, InfeasibleAlignmentError
from app.graph import TokenInventory, parse_arpa
from app.rescore import joint_beam_search_baseline
from tests.conftest import brute_outputs


def random_posteriors(rng, frames, tokens):
    return PosteriorMatrix.from_logits(rng.normal(scale=2.0, size=(frames, tokens))).values


def random_ref(rng, frames, tokens):
    while True:
        ref = tuple(int(k) for k in rng.integers(1, tokens, size=int(rng.integers(0, frames + 1))))
        if required_frames(ref) <= frames:
            return ref


# =========================================================
# LOSS
# =========================================================
def test_loss_matches_path_enumeration():
    rng = np.random.default_rng(20)
    for _ in range(220):
        T, V = int(rng.integers(1, 7)), int(rng.integers(2, 5))
        lp = random_posteriors(rng, T, V)
        ref = random_ref(rng, T, V)
        want = -brute_outputs(lp).get(ref, -np.inf)
        assert ctc_loss(lp, ref) == pytest.approx(want, abs=1e-6)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(21)
    h = 1e-5
    for _ in range(110):
        T, V = int(rng.integers(1, 5)), int(rng.integers(2, 5))
        # raw scores, not normalized: the gradient is w.r.t. each entry on its own
        x = rng.normal(size=(T, V))
        ref = random_ref(rng, T, V)
        loss, grad = ctc_loss_and_grad(x, ref)
        assert loss == pytest.approx(ctc_loss(x, ref))
        fd = np.zeros_like(x)
        for t in range(T):
            for k in range(V):
                up, down = x.copy(), x.copy()
                up[t, k] += h
                down[t, k] -= h
                fd[t, k] = (ctc_loss(up, ref) - ctc_loss(down, ref)) / (2 * h)
        err = np.abs(fd - grad)
        assert np.all(err <= 1e-4 * np.maximum(np.abs(grad), 1e-4))


def test_gradient_rows_sum_to_minus_one_on_normalized_input():
    rng = np.random.default_rng(22)
    lp = random_posteriors(rng, 6, 4)
    grad = ctc_grad(PosteriorMatrix(lp), (1, 2))
    assert np.allclose(grad.sum(axis=1), -1.0)


def test_loss_needs_enough_frames():
    lp = random_posteriors(np.random.default_rng(23), 2, 3)
    with pytest.raises(InfeasibleAlignmentError) as info:
        ctc_loss(lp, (1, 1))
    assert info.value.required == 3 and info.value.frames == 2
    assert required_frames((1, 1, 2, 2)) == 6


def test_loss_rejects_labels_outside_inventory():
    lp = random_posteriors(np.random.default_rng(24), 3, 3)
    with pytest.raises(ConfigurationError):
        ctc_loss(lp, (3,))
    with pytest.raises(ConfigurationError):
        ctc_loss(lp, (0,))


def test_empty_input_and_reference():
    assert ctc_loss(np.zeros((0, 3)), ()) == 0.0


def test_hybrid_loss():
    assert hybrid_loss(2.0, 4.0, 0.3) == pytest.approx(0.3 * 2.0 + 0.7 * 4.0)
    assert hybrid_loss(2.0, 4.0, 1.0) == 2.0
    assert hybrid_loss(2.0, 4.0, 0.0) == 4.0
    with pytest.raises(ConfigurationError):
        hybrid_loss(2.0, 4.0, 1.5)
    with pytest.raises(ConfigurationError):
        hybrid_loss(2.0, 4.0, -0.1)


# =========================================================
# PREFIX BEAM SEARCH
# =========================================================
def test_exhaustive_prefix_search_is_exact():
    rng = np.random.default_rng(30)
    for _ in range(110):
        T, V = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        lp = random_posteriors(rng, T, V)
        brute = brute_outputs(lp)
        nbest = prefix_beam_search(lp, beam=5000)
        got = {h.units: -h.acoustic_score for h in nbest}
        assert got.keys() == brute.keys()
        for key, value in brute.items():
            assert got[key] == pytest.approx(value, abs=1e-9)
        want_best = min(brute, key=lambda y: (-brute[y], y))
        assert nbest.best.units == want_best


def test_prefix_search_uses_inventory_symbols():
    inventory = TokenInventory(("a", "b"))
    lp = PosteriorMatrix.from_logits(np.array([[0.0, 9.0, 0.0], [9.0, 0.0, 0.0], [0.0, 0.0, 9.0]]))
    nbest = prefix_beam_search(lp, beam=4, inventory=inventory, utt_id="u1")
    assert nbest.utt_id == "u1"
    assert nbest.best.words == ("a", "b")
    assert nbest.best.text == "ab"
    assert len(nbest) <= 4


def test_shallow_fusion_can_flip_the_best_prefix():
    inventory = TokenInventory(("a", "b"))
    # acoustics slightly prefer "a"; the LM strongly prefers "b"
    lp = PosteriorMatrix.from_logits(np.array([[0.0, 1.2, 1.0]]))
    arpa = parse_arpa(
        [
            "\\data\\",
            "ngram 1=4",
            "\\1-grams:",
            "-99\t<s>",
            "-3.0\ta",
            "-0.1\tb",
            "-0.3\t</s>",
            "\\end\\",
        ]
    )
    lm = NgramCharLm(arpa, inventory)
    assert prefix_beam_search(lp, beam=8).best.units == (1,)
    fused = prefix_beam_search(lp, beam=8, lm=lm, lm_weight=1.0)
    assert fused.best.units == (2,)
    assert fused.best.graph_score > 0


class BanningLm:
    """Uniform over tokens except one label it gives probability zero."""

    def __init__(self, tokens: int, banned: int):
        self._row = UniformCharLm(tokens).logprobs(()).copy()
        self._row[banned] = -np.inf

    def logprobs(self, prefix):
        return self._row


def test_label_the_lm_forbids_never_appears():
    rng = np.random.default_rng(33)
    plain_uses_it = 0
    for _ in range(20):
        lp = random_posteriors(rng, 5, 4).copy()
        lp[:, 2] += 3.0
        lm = BanningLm(4, banned=2)
        plain_uses_it += 2 in prefix_beam_search(lp, beam=8).best.units
        fused = prefix_beam_search(lp, beam=8, lm=lm, lm_weight=0.5)
        assert len(fused) > 0
        assert all(2 not in h.units for h in fused)
        assert 2 not in joint_beam_search_baseline(lp, None, beam=8, ctc_weight=1.0, lm=lm, lm_weight=0.5)
    assert plain_uses_it > 0


def test_zero_lm_weight_is_plain_search():
    rng = np.random.default_rng(34)
    for _ in range(20):
        lp = random_posteriors(rng, 6, 4)
        plain = prefix_beam_search(lp, beam=6)
        fused = prefix_beam_search(lp, beam=6, lm=BanningLm(4, banned=2), lm_weight=0.0)
        assert [(h.units, h.graph_score, h.acoustic_score) for h in fused] == [
            (h.units, h.graph_score, h.acoustic_score) for h in plain
        ]


def test_prefix_search_rejects_zero_beam():
    with pytest.raises(ConfigurationError):
        prefix_beam_search(np.zeros((1, 2)), beam=0)


# =========================================================
# PREFIX PROBABILITY
# =========================================================
def test_prefix_scores_match_path_enumeration():
    rng = np.random.default_rng(40)
    for _ in range(60):
        T, V = int(rng.integers(1, 6)), int(rng.integers(2, 4))
        lp = random_posteriors(rng, T, V)
        brute = brute_outputs(lp)
        scorer = CtcPrefixScorer(lp)
        for n in range(4):
            for g in itertools.product(range(1, V), repeat=n):
                starts = [w for y, w in brute.items() if y[:n] == g]
                want = float(np.logaddexp.reduce(starts)) if starts else -np.inf
                assert math.exp(scorer.score(g)) == pytest.approx(math.exp(want), rel=1e-6, abs=1e-12)
                full = brute.get(g, -np.inf)
                assert math.exp(scorer.full_score(g)) == pytest.approx(math.exp(full), rel=1e-6, abs=1e-12)
                assert scorer.next_scores(g)[0] == scorer.full_score(g)


def with_zeros(rng, frames, tokens, rate=0.3):
    """Random posteriors with some entries at probability zero, rows renormalised."""
    lp = random_posteriors(rng, frames, tokens).copy()
    cut = rng.random(lp.shape) < rate
    cut[np.arange(frames), rng.integers(0, tokens, size=frames)] = False
    lp[cut] = -np.inf
    return lp - np.logaddexp.reduce(lp, axis=1, keepdims=True)


def test_prefix_scores_with_zero_probability_entries():
    with np.errstate(divide="ignore"):
        lp = np.log([[0.5, 0.0, 0.5], [0.2, 0.6, 0.2], [0.2, 0.6, 0.2]])
    scorer = CtcPrefixScorer(lp)
    assert scorer.full_score((1,)) == pytest.approx(-ctc_loss(lp, (1,)))
    assert scorer.full_score((1,)) == pytest.approx(math.log(0.3))
    assert scorer.full_score((2, 1)) == pytest.approx(math.log(0.36))
    assert prefix_beam_search(lp, beam=100).best.units == (2, 1)
    assert joint_beam_search_baseline(lp, None, beam=10, ctc_weight=1.0) == (2, 1)


def test_zeroed_posteriors_match_path_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(60):
        T, V = int(rng.integers(1, 6)), int(rng.integers(2, 4))
        lp = with_zeros(rng, T, V)
        brute = brute_outputs(lp)
        scorer = CtcPrefixScorer(lp)
        for n in range(4):
            for g in itertools.product(range(1, V), repeat=n):
                full = scorer.full_score(g)
                assert not math.isnan(full)
                assert math.exp(full) == pytest.approx(math.exp(brute.get(g, -np.inf)), rel=1e-6, abs=1e-12)
                if required_frames(g) <= T:
                    assert math.exp(full) == pytest.approx(math.exp(-ctc_loss(lp, g)), rel=1e-6, abs=1e-12)
                starts = [w for y, w in brute.items() if y[:n] == g]
                want = float(np.logaddexp.reduce(starts)) if starts else -np.inf
                assert math.exp(scorer.score(g)) == pytest.approx(math.exp(want), rel=1e-6, abs=1e-12)


def test_prefix_scorer_survives_forgetting():
    rng = np.random.default_rng(41)
    lp = random_posteriors(rng, 5, 3)
    score, scorer = ctc_prefix_score(lp, (1, 2))
    scorer.score((2, 2))
    scorer.forget([(1,)])
    assert scorer.score((1, 2)) == pytest.approx(score)
    assert scorer.score(()) == 0.0


# =========================================================
# POSTERIOR MATRIX
# =========================================================
def test_posterior_matrix_validation():
    with pytest.raises(FormatError):
        PosteriorMatrix(np.zeros((2, 3)))
    with pytest.raises(FormatError):
        PosteriorMatrix(np.log(np.full(3, 1 / 3)))
    with pytest.raises(FormatError):
        PosteriorMatrix(np.zeros((2, 1)))
    bad = np.log(np.full((1, 2), 0.5))
    bad[0, 1] = np.nan
    with pytest.raises(FormatError):
        PosteriorMatrix(bad)


def test_posterior_matrix_is_read_only_and_greedy():
    post = PosteriorMatrix.from_logits(np.array([[0, 5, 0], [0, 5, 0], [5, 0, 0], [0, 5, 0], [0, 0, 5.0]]))
    assert post.greedy() == (1, 1, 2)
    assert post.frames == 5 and post.tokens == 3
    with pytest.raises(ValueError):
        post.values[0, 0] = 0.0


def test_posterior_files(tmp_path):
    post = PosteriorMatrix.from_logits(np.random.default_rng(50).normal(size=(4, 3)))
    post.write(tmp_path / "u.post")
    back = PosteriorMatrix.read(tmp_path / "u.post")
    assert np.allclose(back.values, post.values, atol=1e-6)
    post.write(tmp_path / "u.txt")
    assert PosteriorMatrix.read(tmp_path / "u.txt") == post
    with pytest.raises(FormatError):
        PosteriorMatrix.read(tmp_path / "missing.post")


# =========================================================
# CHARACTER LMS
# =========================================================
def test_uniform_lm_sequence_logprob():
    lm = UniformCharLm(4)
    assert sequence_logprob(lm, (1, 2, 3)) == pytest.approx(-4 * math.log(4))


def test_ngram_char_lm_rows_are_normalized():
    inventory = TokenInventory(("a", "b"))
    arpa = parse_arpa(
        [
            "\\data\\",
            "ngram 1=4",
            "ngram 2=1",
            "\\1-grams:",
            "-99\t<s>\t-0.2",
            "-0.4\ta\t-0.1",
            "-0.5\tb",
            "-0.6\t</s>",
            "\\2-grams:",
            "-0.05\ta b",
            "\\end\\",
        ]
    )
    lm = NgramCharLm(arpa, inventory)
    for prefix in [(), (1,), (2,), (1, 2)]:
        row = lm.logprobs(prefix)
        assert float(np.logaddexp.reduce(row)) == pytest.approx(0.0)
    assert lm.logprobs((1,))[2] > lm.logprobs((2,))[2]
