from __future__ import annotations

import math

import numpy as np
import pytest

from app.errors import ConfigurationError, DeterminizationBudgetError, PreconditionError
from app.fst import (
    EPSILON,
    INF,
    SymbolTable,
    TropicalWeight,
    Wfst,
    arcsort,
    compose,
    determinize,
    languages_equal,
    minimize,
    path_enumerate,
    relabel,
    rm_epsilon,
    shortest_path,
    trim,
)
from app.fst import io as fst_io
from tests.conftest import random_machine

MAX_LEN = 8


def intersect_oracle(a, b, max_len):
    la, lb = path_enumerate(a, max_len), path_enumerate(b, max_len)
    return {x: la[x] + lb[x] for x in la.keys() & lb.keys()}


# =========================================================
# SEMIRING
# =========================================================
def test_tropical_semiring_laws():
    rng = np.random.default_rng(0)
    values = [TropicalWeight(float(v)) for v in rng.uniform(-5, 5, size=12)] + [TropicalWeight.zero()]
    zero, one = TropicalWeight.zero(), TropicalWeight.one()
    for a in values:
        assert a.plus(zero) == a
        assert a.times(one).approx_equal(a)
        assert a.times(zero).is_zero()
        assert a.plus(a) == a
        for b in values:
            assert a.plus(b) == b.plus(a)
            assert a.times(b).approx_equal(b.times(a))
            for c in values:
                assert a.plus(b).plus(c) == a.plus(b.plus(c))
                assert a.times(b).times(c).approx_equal(a.times(b.times(c)))
                assert a.times(b.plus(c)).approx_equal(a.times(b).plus(a.times(c)))


def test_tropical_plus_is_min():
    assert TropicalWeight(2.0).plus(TropicalWeight(3.0)) == TropicalWeight(2.0)
    assert TropicalWeight(2.0).times(TropicalWeight(3.0)) == TropicalWeight(5.0)


# =========================================================
# RANDOM ORACLE SUITES
# =========================================================
def test_compose_acceptors_matches_intersection():
    rng = np.random.default_rng(1)
    for _ in range(150):
        a = random_machine(rng, eps=0.25)
        b = random_machine(rng, eps=0.25)
        got = path_enumerate(compose(a, b), MAX_LEN)
        assert languages_equal(got, intersect_oracle(a, b, MAX_LEN))


def test_compose_transducers_matches_relation_product():
    rng = np.random.default_rng(2)
    for _ in range(100):
        # no input epsilons on the left bounds the middle string by the input
        a = random_machine(rng, acceptor=False, out_eps=0.3, input_eps=False)
        b = random_machine(rng, acceptor=False, eps=0.3, out_eps=0.3)
        la = path_enumerate(a, MAX_LEN, pairs=True)
        lb = path_enumerate(b, MAX_LEN, pairs=True)
        want = {}
        for (x, z), wa in la.items():
            for (z2, y), wb in lb.items():
                if z == z2 and wa + wb < want.get((x, y), INF):
                    want[(x, y)] = wa + wb
        got = path_enumerate(compose(a, b), MAX_LEN, pairs=True)
        assert languages_equal(got, want)


def test_determinize_preserves_language():
    rng = np.random.default_rng(3)
    for _ in range(150):
        a = random_machine(rng, acyclic=True, eps=0.2)
        d = determinize(a)
        assert d.is_deterministic()
        assert languages_equal(path_enumerate(d, 8), path_enumerate(a, 8))


def test_minimize_preserves_language_and_never_grows():
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = determinize(random_machine(rng, acyclic=True, eps=0.2))
        m = minimize(d)
        assert m.num_states <= trim(d).num_states
        assert m.is_deterministic()
        assert languages_equal(path_enumerate(m, 8), path_enumerate(d, 8))


def test_rm_epsilon_preserves_language():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = random_machine(rng, eps=0.4)
        r = rm_epsilon(a)
        assert not r.has_epsilons()
        assert languages_equal(path_enumerate(r, MAX_LEN), path_enumerate(a, MAX_LEN))


def test_compose_is_associative():
    rng = np.random.default_rng(6)
    for _ in range(40):
        a, b, c = (random_machine(rng, eps=0.2, max_states=4) for _ in range(3))
        left = path_enumerate(compose(compose(a, b), c), 4)
        right = path_enumerate(compose(a, compose(b, c)), 4)
        assert languages_equal(left, right)


# =========================================================
# HAND CASES
# =========================================================
def test_compose_with_identity_is_identity():
    a = Wfst.linear([1, 2, 3], weights=[0.5, 0.25, 1.0])
    got = path_enumerate(compose(a, Wfst.linear([1, 2, 3])), 3)
    assert got == {(1, 2, 3): 1.75}


def test_compose_rejects_mismatched_tables():
    a = Wfst.linear([1], isymbols=SymbolTable(["x"]))
    b = Wfst.linear([1], isymbols=SymbolTable(["y"]))
    with pytest.raises(ConfigurationError):
        compose(a, b)


def test_compose_with_empty_language():
    a = Wfst.linear([1, 2])
    assert path_enumerate(compose(a, Wfst.empty()), 3) == {}


def test_epsilon_filter_counts_each_path_once():
    # left emits epsilon then 1, right reads epsilon then 1: one composed path
    a = Wfst()
    a.add_states(3)
    a.set_start(0)
    a.add_arc(0, 1, EPSILON, 1.0, 1)
    a.add_arc(1, 2, 1, 1.0, 2)
    a.set_final(2)
    b = Wfst()
    b.add_states(3)
    b.set_start(0)
    b.add_arc(0, EPSILON, 5, 0.5, 1)
    b.add_arc(1, 1, 6, 0.5, 2)
    b.set_final(2)
    c = compose(a, b)
    paths = shortest_path(c, n=5)
    assert len(paths) == 1
    assert paths[0].ilabels == (1, 2)
    assert paths[0].olabels == (5, 6)
    assert paths[0].weight == pytest.approx(3.0)


def test_determinize_merges_shared_prefixes():
    a = Wfst()
    a.add_states(4)
    a.set_start(0)
    a.add_arc(0, 1, 1, 1.0, 1)
    a.add_arc(0, 1, 1, 3.0, 2)
    a.add_arc(1, 2, 2, 5.0, 3)
    a.add_arc(2, 2, 2, 1.0, 3)
    a.set_final(3)
    d = determinize(a)
    assert d.is_deterministic()
    assert path_enumerate(d, 2) == {(1, 2): 4.0}


def test_determinize_budget_on_non_twins_machine():
    a = Wfst()
    a.add_states(4)
    a.set_start(0)
    a.add_arc(0, 1, 1, 0.0, 1)
    a.add_arc(0, 1, 1, 0.0, 2)
    a.add_arc(1, 1, 1, 1.0, 1)
    a.add_arc(2, 1, 1, 2.0, 2)
    a.add_arc(1, 2, 2, 0.0, 3)
    a.add_arc(2, 3, 3, 0.0, 3)
    a.set_final(3)
    with pytest.raises(DeterminizationBudgetError) as info:
        determinize(a, budget=50)
    assert info.value.budget == 50


def test_minimize_requires_deterministic_input():
    a = Wfst()
    a.add_states(2)
    a.set_start(0)
    a.add_arc(0, 1, 1, 0.0, 1)
    a.add_arc(0, 1, 1, 1.0, 1)
    a.set_final(1)
    with pytest.raises(PreconditionError):
        minimize(a)


def test_minimize_merges_equivalent_tails():
    a = Wfst()
    a.add_states(5)
    a.set_start(0)
    a.add_arc(0, 1, 1, 0.0, 1)
    a.add_arc(0, 2, 2, 0.0, 2)
    a.add_arc(1, 3, 3, 1.0, 3)
    a.add_arc(2, 3, 3, 1.0, 4)
    a.set_final(3)
    a.set_final(4)
    m = minimize(a)
    assert m.num_states == 3
    assert languages_equal(path_enumerate(m, 3), path_enumerate(a, 3))


def test_trim_drops_dead_states():
    a = Wfst()
    a.add_states(4)
    a.set_start(0)
    a.add_arc(0, 1, 1, 0.0, 1)
    a.add_arc(0, 2, 2, 0.0, 2)  # 2 never reaches a final state
    a.add_arc(3, 1, 1, 0.0, 1)  # 3 is unreachable
    a.set_final(1)
    t = trim(a)
    assert t.num_states == 2
    assert path_enumerate(t, 2) == {(1,): 0.0}


def test_trim_without_final_state_gives_empty_machine():
    a = Wfst.linear([1, 2])
    a.set_final(2, INF)
    t = trim(a)
    assert t.num_states == 1
    assert not t.finals


def test_shortest_path_orders_paths():
    a = Wfst()
    a.add_states(2)
    a.set_start(0)
    for label, w in ((1, 3.0), (2, 1.0), (3, 2.0)):
        a.add_arc(0, label, label, w, 1)
    a.set_final(1, 0.5)
    paths = shortest_path(a, n=3)
    assert [p.ilabels for p in paths] == [(2,), (3,), (1,)]
    assert [p.weight for p in paths] == [1.5, 2.5, 3.5]


def test_shortest_path_on_empty_language():
    assert shortest_path(Wfst.empty()) == []


def test_arcsort_and_relabel():
    a = Wfst()
    a.add_states(2)
    a.set_start(0)
    a.add_arc(0, 3, 1, 0.0, 1)
    a.add_arc(0, 1, 2, 0.0, 1)
    a.set_final(1)
    assert [arc.ilabel for arc in arcsort(a).arcs(0)] == [1, 3]
    assert [arc.olabel for arc in arcsort(a, "olabel").arcs(0)] == [1, 2]
    r = relabel(a, imap={3: EPSILON}, omap={2: 7})
    assert {(arc.ilabel, arc.olabel) for arc in r.arcs(0)} == {(EPSILON, 1), (1, 7)}


def test_text_and_binary_graph_files(tmp_path):
    isyms = SymbolTable(["a", "b"])
    osyms = SymbolTable(["x"])
    a = Wfst(isyms, osyms)
    a.add_states(3)
    a.set_start(0)
    a.add_arc(0, 1, 1, 0.5, 1)
    a.add_arc(1, 2, EPSILON, 0.25, 2)
    a.set_final(2, 1.0)

    fst_io.write_text(a, tmp_path / "g.txt")
    back = fst_io.read_text(tmp_path / "g.txt")
    assert path_enumerate(back, 3, pairs=True) == path_enumerate(a, 3, pairs=True)

    fst_io.write_binary(a, tmp_path / "g.bin")
    assert (tmp_path / "g.bin.isyms").is_file()
    back = fst_io.read_binary(tmp_path / "g.bin")
    assert back.isymbols == isyms and back.osymbols == osyms
    assert languages_equal(path_enumerate(back, 3, pairs=True), path_enumerate(a, 3, pairs=True), tol=1e-6)


def test_text_keeps_a_dead_start_state():
    from app.errors import FormatError

    a = Wfst()
    a.add_states(3)
    a.add_arc(0, 1, 1, 0.5, 1)
    a.set_final(1)
    a.set_start(2)
    lines = fst_io.to_text_lines(a)
    assert lines[0] == "start 2"
    back = fst_io.from_text_lines(lines)
    assert back.start == 2
    assert path_enumerate(back, 3) == {}

    plain = fst_io.from_text_lines(["1 0 1 1 0.5", "0"])
    assert plain.start == 1
    with pytest.raises(FormatError):
        fst_io.from_text_lines(["0 1 1 1", "start 0"])


def test_binary_graph_rejects_garbage():
    from app.errors import FormatError

    with pytest.raises(FormatError):
        fst_io.from_bytes(b"nope")
    with pytest.raises(FormatError):
        fst_io.from_bytes(fst_io.MAGIC + b"\x01\x00")


def test_check_flags_arcs_leaving_the_machine():
    from app.errors import FormatError

    a = Wfst()
    a.add_states(1)
    a.set_start(0)
    a.add_arc(0, 1, 1, 0.0, 4)
    with pytest.raises(FormatError):
        a.check()


def test_linear_weights_sum():
    a = Wfst.linear([1, 1, 2], weights=[0.1, 0.2, 0.3])
    assert math.isclose(path_enumerate(a, 3)[(1, 1, 2)], 0.6)
