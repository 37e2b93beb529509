from __future__ import annotations

import itertools

import numpy as np
import pytest

from app.config import Settings
from app.fst.wfst import EPSILON, Wfst
from app.graph.arpa import parse_arpa
from app.graph.builder import build_search_graph
from app.graph.lexicon import Lexicon, TokenInventory
from app.harness.fixtures import generate_fixture


def random_machine(
    rng: np.random.Generator,
    *,
    acceptor: bool = True,
    acyclic: bool = False,
    eps: float = 0.0,
    out_eps: float = 0.0,
    labels: int = 3,
    max_states: int = 6,
    input_eps: bool = True,
) -> Wfst:
    """Small random machine with non-negative weights and at least one final state."""
    n = int(rng.integers(1, max_states + 1))
    a = Wfst()
    a.add_states(n)
    a.set_start(0)
    for s in range(n):
        if acyclic and s == n - 1:
            continue
        for _ in range(int(rng.integers(0, 4))):
            dst = int(rng.integers(s + 1, n)) if acyclic else int(rng.integers(n))
            il = EPSILON if input_eps and rng.random() < eps else int(rng.integers(1, labels + 1))
            if acceptor:
                ol = il
            else:
                ol = EPSILON if rng.random() < out_eps else int(rng.integers(1, labels + 1))
            a.add_arc(s, il, ol, round(float(rng.uniform(0.0, 3.0)), 3), dst)
    for s in range(n):
        if s == n - 1 or rng.random() < 0.4:
            a.set_final(s, round(float(rng.uniform(0.0, 2.0)), 3))
    return a


TOY_UNITS = ("a", "b", "c")


def toy_arpa(words, rng: np.random.Generator, order: int = 2):
    """Random ARPA text over `words`: full unigrams, a few bigrams, every history with a backoff."""
    vocab = list(words)
    uni = rng.dirichlet(np.ones(len(vocab) + 1))
    lines = ["\\data\\"]
    bigrams = []
    if order >= 2:
        for h in ["<s>"] + vocab:
            for w in vocab + ["</s>"]:
                if h != "<s>" or w != "</s>":
                    if rng.random() < 0.35:
                        bigrams.append((h, w, float(np.log10(rng.uniform(0.05, 0.6)))))
    histories = {h for h, _, _ in bigrams}
    lines.append(f"ngram 1={len(vocab) + 2}")
    if bigrams:
        lines.append(f"ngram 2={len(bigrams)}")
    lines += ["", "\\1-grams:"]
    bow = lambda w: f"\t{float(np.log10(rng.uniform(0.2, 1.0))):.6f}" if w in histories else ""  # noqa: E731
    lines.append(f"-99\t<s>{bow('<s>')}")
    for w, p in zip(vocab, uni[:-1]):
        lines.append(f"{np.log10(p):.6f}\t{w}{bow(w)}")
    lines.append(f"{np.log10(uni[-1]):.6f}\t</s>")
    if bigrams:
        lines += ["", "\\2-grams:"]
        for h, w, p in bigrams:
            lines.append(f"{p:.6f}\t{h} {w}")
    lines += ["", "\\end\\"]
    return parse_arpa(lines)


def toy_system(rng: np.random.Generator, homophones: bool = True):
    """Random lexicon over three units (optionally with shared spellings) plus a matching random ARPA."""
    inventory = TokenInventory(TOY_UNITS)
    lexicon = Lexicon()
    n_words = int(rng.integers(2, 5))
    words = [f"w{i}" for i in range(n_words)]
    spellings = []
    for w in words:
        if homophones and spellings and rng.random() < 0.3:
            units = spellings[int(rng.integers(len(spellings)))]
        else:
            units = tuple(TOY_UNITS[int(k)] for k in rng.integers(3, size=int(rng.integers(1, 3))))
        spellings.append(units)
        lexicon.add(w, units)
    return toy_arpa(words, rng), lexicon, inventory


@pytest.fixture
def settings() -> Settings:
    s = Settings()
    s.validate()
    return s


@pytest.fixture(scope="session")
def clean_task():
    return generate_fixture(seed=7, vocab_size=10, utterances=12, noise=0.0)


@pytest.fixture(scope="session")
def clean_task_dir(tmp_path_factory, clean_task):
    return clean_task.write(tmp_path_factory.mktemp("clean"))


@pytest.fixture(scope="session")
def clean_graph(clean_task):
    return build_search_graph(clean_task.arpa, clean_task.lexicon, clean_task.inventory)


def collapse(frames):
    out, prev = [], 0
    for k in frames:
        if k != 0 and k != prev:
            out.append(k)
        prev = k
    return tuple(out)


def brute_outputs(lp: np.ndarray):
    """log P(output) for every collapsed label sequence, by enumerating all frame paths."""
    T, V = lp.shape
    out = {}
    for frames in itertools.product(range(V), repeat=T):
        w = float(sum(lp[t, k] for t, k in enumerate(frames)))
        key = collapse(frames)
        out[key] = np.logaddexp(out.get(key, -np.inf), w)
    return out
