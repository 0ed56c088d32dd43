import itertools
from fractions import Fraction

import numpy as np
import pytest

from shyver.automata import (
    BuchiAutomaton,
    IntervalSet,
    LassoWord,
    ThreeValuedSignal,
    accepts_lasso,
    assemble_signal,
    eval_mitl,
    eval_mitl_three_valued,
    is_intersection_empty,
    lasso_automaton,
    ltl_to_buchi,
    segment_count,
)
from shyver.automata.mitl import InconsistentVerdict, MonitorStats, label_from_pair, segment_bounds
from shyver.logic import Atom, negate, parse_formula, size
from tests.automaton_runs import acceptance_table
from tests.oracles import ltl_corpus, mitl_corpus
from tests.oracles.ltl_lasso import evaluate

F = Fraction
P = Atom("p", ">", F(0))
EV_P = ltl_to_buchi(parse_formula("true U (p > 0)", "iltl"), (P,))
ALWAYS_P = ltl_to_buchi(parse_formula("false R (p > 0)", "iltl"), (P,))


def word(prefix, cycle):
    return LassoWord(tuple((v,) for v in prefix), tuple((v,) for v in cycle))


# --------------------------------------------------------------------------- Büchi


def test_eventually():
    assert accepts_lasso(EV_P, word([False, False], [True]))
    assert not accepts_lasso(EV_P, word([], [False]))


def test_always_rejects_any_gap():
    for n in range(1, 6):
        for bits in itertools.product((True, False), repeat=n):
            for t in range(n):
                w = word(bits[:t], bits[t:])
                assert accepts_lasso(ALWAYS_P, w) == all(bits)


def test_lasso_automaton_single_word():
    aut = lasso_automaton(word([False, False, True], [True]), (P,))
    assert not is_intersection_empty(aut, EV_P)
    acc, pre, cyc = acceptance_table(aut, 3, 1, 2)
    assert acc.sum() == 1
    i, j = np.argwhere(acc)[0]
    assert pre[i].tolist() == [0, 0, 1] and cyc[j].tolist() == [1]


def test_one_unknown_gives_two_words():
    aut = lasso_automaton(word([False, None, False], [False]), (P,))
    acc, _, _ = acceptance_table(aut, 3, 1, 2)
    assert acc.sum() == 2


@pytest.mark.parametrize("k", range(6))
def test_language_size_is_two_to_the_unknowns(k):
    rng = np.random.default_rng(k)
    prefix = [bool(v) for v in rng.integers(0, 2, 5)]
    for pos in rng.choice(5, size=k, replace=False):
        prefix[pos] = None
    w = LassoWord(tuple((v, True) for v in prefix), ((False, True),))
    props = (P, Atom("q", ">", F(0)))
    acc, pre, cyc = acceptance_table(lasso_automaton(w, props), 5, 1, 4)
    assert w.unknowns == k
    assert acc.sum() == 2 ** k


def test_intersection_examples():
    assert is_intersection_empty(EV_P, lasso_automaton(word([], [False]), (P,)))
    assert not is_intersection_empty(EV_P, lasso_automaton(word([False, False], [True]), (P,)))


def random_automaton(rng, n):
    guards = [(0, 0), (1, 0), (0, 1)]
    trans = [(s, *guards[rng.integers(3)], int(rng.integers(n)))
             for s in range(n) for _ in range(int(rng.integers(1, 3)))]
    init = frozenset(int(v) for v in rng.choice(n, size=int(rng.integers(1, 3)), replace=True))
    acc = frozenset(int(v) for v in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
    return BuchiAutomaton((P,), n, trans, init, acc)


def test_random_pairs_against_bounded_lassos():
    rng = np.random.default_rng(7)
    shapes = ltl_corpus.lasso_shapes(10)
    for _ in range(60):
        a = random_automaton(rng, int(rng.integers(1, 7)))
        b = random_automaton(rng, int(rng.integers(1, 7)))
        witness = False
        for t, c in shapes:
            both = acceptance_table(a, t, c, 2)[0] & acceptance_table(b, t, c, 2)[0]
            if both.any():
                witness = True
                break
        assert is_intersection_empty(a, b) == (not witness)


def test_small_corpus_matches_lasso_semantics():
    fs = ltl_corpus.formulas(3)
    assert len(fs) == 162
    for f in fs:
        bad, total = ltl_corpus.mismatches(f, 5)
        assert bad == 0, f


def test_single_word_evaluation_matches_automaton():
    rng = np.random.default_rng(3)
    fs = ltl_corpus.formulas(4)
    for k in rng.choice(len(fs), 200, replace=False):
        f = fs[k]
        t, c = int(rng.integers(0, 4)), int(rng.integers(1, 4))
        letters = [tuple(bool(b) for b in rng.integers(0, 2, 2)) for _ in range(t + c)]
        w = LassoWord(tuple(letters[:t]), tuple(letters[t:]))
        aut = ltl_to_buchi(f, ltl_corpus.PROPS)
        assert accepts_lasso(aut, w) == evaluate(f, (letters[:t], letters[t:]), ltl_corpus.PROPS)


def test_formula_and_negation_are_disjoint():
    for f in ltl_corpus.formulas(3):
        a = ltl_to_buchi(f, ltl_corpus.PROPS)
        b = ltl_to_buchi(negate(f), ltl_corpus.PROPS)
        assert is_intersection_empty(a, b)


# --------------------------------------------------------------------------- signals


def test_segment_arithmetic():
    delta = F(1, 10) / (3 * 1)
    assert delta == F(1, 30)
    assert segment_count(1, delta) == 16
    bounds = segment_bounds(1, delta)
    assert len(bounds) == 17 and bounds[-1] == 1
    assert all(b - a < 2 * delta for a, b in zip(bounds, bounds[1:]))


def test_label_cases():
    assert label_from_pair("Yes", "Yes") is True
    assert label_from_pair("No", "No") is False
    assert label_from_pair("Unknown", "Yes") is None
    with pytest.raises(InconsistentVerdict):
        label_from_pair("Yes", "No")


def test_all_yes_signal():
    sig = assemble_signal([[("Yes", "Yes")]] * 4, F(1, 6), 1, (True,), (P,))
    assert len(sig.values) == 4
    assert all(seg == (True,) for seg in sig.values) and sig.tail == (True,)
    short = assemble_signal([[("Yes", "Yes")]] * 3, F(1, 6), 1, (True,), (P,))
    assert short.values[-1] == (None,)


def test_mixed_signal():
    pairs = [[("Yes", "Yes")], [("Unknown", "Unknown")], [("No", "No")]]
    sig = assemble_signal(pairs, F(1, 5), 1, (False,), (P,))
    assert [seg[0] for seg in sig.values] == [True, None, False]


def test_monitor_examples():
    f = parse_formula("true U[0,5] (p > 0)")
    assert eval_mitl_three_valued(ThreeValuedSignal((P,), (F(0),), (), (True,)), f) == "Yes"
    sig = ThreeValuedSignal((P,), (F(0), F(1)), ((None,),), (True,))
    assert eval_mitl_three_valued(sig, parse_formula("true U[0,0.5] (p > 0)")) == "Unknown"
    assert eval_mitl_three_valued(sig, parse_formula("true U[0,2] (p > 0)")) == "Yes"
    assert eval_mitl_three_valued(ThreeValuedSignal((P,), (F(0), F(1)), ((None,),), (False,)),
                                  parse_formula("true U[2,3] (p > 0)")) == "No"


def test_interval_set_algebra():
    a = IntervalSet.of([(F(0), True, F(1), False), (F(2), True, F(3), True)])
    assert a.contains(F(0)) and not a.contains(F(1)) and a.contains(F(3))
    assert a.complement().complement() == a
    assert a.union(a.complement()) == IntervalSet.everything()


def test_corpus_one_and_two_segments():
    checks, bad, counts = mitl_corpus.run(segments=(1, 2), depth2_per_signal=4, seed=1)
    assert checks > 5000 and min(counts.values()) > 500
    assert bad == []


def test_soundness_and_monotonicity():
    rng = np.random.default_rng(5)
    fs = mitl_corpus.depth1() + mitl_corpus.depth2()
    sigs = list(mitl_corpus.signals(2, 2))
    for k in rng.choice(len(sigs), 150, replace=False):
        sig = sigs[k]
        f = fs[rng.integers(len(fs))]
        v = eval_mitl_three_valued(sig, f)
        for lo_pass in (False, True):
            if v == "Yes":
                assert eval_mitl(f, sig, lo_pass)
            if v == "No":
                assert not eval_mitl(f, sig, lo_pass)
        # resolving one Unknown entry never flips a definite verdict
        holes = [(i, a) for i, seg in enumerate(sig.values) for a, x in enumerate(seg) if x is None]
        for i, a in holes:
            for val in (True, False):
                vals = [list(seg) for seg in sig.values]
                vals[i][a] = val
                refined = ThreeValuedSignal(sig.atoms, sig.breaks, tuple(map(tuple, vals)), sig.tail)
                w = eval_mitl_three_valued(refined, f)
                assert v == "Unknown" or w == v


def test_pass_size_bound():
    rng = np.random.default_rng(8)
    fs = mitl_corpus.depth2()
    for sig in list(mitl_corpus.signals(3, 2))[:: 97]:
        f = fs[rng.integers(len(fs))]
        stats = MonitorStats()
        eval_mitl_three_valued(sig, f, stats)
        endpoints = 2 * size(f)
        assert stats.max_spans <= (len(sig.values) + 1) * size(f) * endpoints
