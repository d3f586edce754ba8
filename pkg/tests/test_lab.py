from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import words
from postfa.lab import (
    LPAL_GAMMA,
    BoundedError,
    ErrorFree,
    LanguageOracle,
    Nondeterministic,
    NonstrictCutpoint,
    OneSided,
    RecognitionVerdict,
    StrictCutpoint,
    WITNESSES,
    build_leq_pfap,
    build_leqbar_machine,
    build_lpal_qfap,
    build_riga_demo,
    classify,
    lpal_step_matrix,
    oracle_from_dfa,
    oracle_leq,
    oracle_leqbar,
    oracle_lpal,
    parse_mode,
)
from postfa.machine import Kind, validate_wellformed
from postfa.semantics import evaluate, postselect
from postfa.transforms import complement, determinize
from test_transforms import contains_aa_nfa, even_a_dfa

LEQ = build_leq_pfap()


def test_oracle_examples():
    assert oracle_leq()("abba") and not oracle_leq()("aab")
    assert oracle_lpal()("abba") and not oracle_lpal()("ab")
    assert not oracle_leqbar()("bab") and oracle_leqbar()("baa")
    assert oracle_leqbar()("a") and not oracle_leqbar()("") and not oracle_leqbar()("b")


def test_oracle_from_dfa():
    o = oracle_from_dfa(even_a_dfa())
    assert o("abab") and not o("ab")
    with pytest.raises(TypeError):
        oracle_from_dfa(contains_aa_nfa())


@pytest.mark.parametrize("text, mode", [
    ("bounded:9/19", BoundedError(F(9, 19))),
    ("cutpoint:1/2", StrictCutpoint(F(1, 2))),
    ("ncutpoint:1/3", NonstrictCutpoint(F(1, 3))),
    ("onesided:1/4", OneSided(F(1, 4))),
])
def test_parse_mode(text, mode):
    assert parse_mode(text) == mode
    assert parse_mode(text).label == text


def test_parse_simple_modes():
    assert isinstance(parse_mode("exact"), ErrorFree)
    assert isinstance(parse_mode("nondet"), Nondeterministic)


@pytest.mark.parametrize("bad", ["bounded", "bounded:1/2", "bounded:0.1", "cutpoint:3/2", "exact:1",
                                 "weird:1/3", ""])
def test_parse_mode_rejects(bad):
    with pytest.raises(ValueError):
        parse_mode(bad)


def test_verdict_invariant():
    with pytest.raises(ValueError):
        RecognitionVerdict(True, 3, None, None, "a")
    with pytest.raises(ValueError):
        RecognitionVerdict(False, 3, None, None, None)


def test_classify_leq_bounded():
    v = classify(LEQ, oracle_leq(), parse_mode("bounded:9/19"), 10)
    assert v.holds and v.counterexample is None
    assert v.worst_member == ("", F(9, 17))
    assert v.worst_nonmember == ("a", F(9, 19))


@pytest.mark.parametrize("eps", ["2/5", "1/3"])
def test_classify_leq_too_tight(eps):
    v = classify(LEQ, oracle_leq(), parse_mode(f"bounded:{eps}"), 10)
    assert not v.holds
    assert len(v.counterexample) == 1


@settings(max_examples=40, deadline=None)
@given(st.fractions(min_value=0, max_value=F(49, 100)), st.fractions(min_value=0, max_value=F(49, 100)))
def test_classify_monotone_in_eps(e1, e2):
    lo, hi = sorted((e1, e2))
    if classify(LEQ, oracle_leq(), BoundedError(lo), 5).holds:
        assert classify(LEQ, oracle_leq(), BoundedError(hi), 5).holds


def test_classify_cutpoints():
    assert classify(LEQ, oracle_leq(), parse_mode("cutpoint:1/2"), 8).holds
    assert classify(LEQ, oracle_leq(), parse_mode("ncutpoint:1/2"), 8).holds
    # 9/17 is attained by the member "", so the strict cutpoint 9/17 fails there
    v = classify(LEQ, oracle_leq(), parse_mode("cutpoint:9/17"), 4)
    assert not v.holds and v.counterexample == ""
    assert classify(LEQ, oracle_leq(), parse_mode("ncutpoint:9/17"), 8).holds


def test_classify_lpal_onesided():
    m = build_lpal_qfap()
    v = classify(m, oracle_lpal(), parse_mode("onesided:1/4"), 8)
    assert v.holds
    assert v.worst_nonmember[0] == "ab"
    assert float(v.worst_nonmember[1]) == pytest.approx(1 / 28)
    assert not classify(m, oracle_lpal(), OneSided(F(1, 4), "nonmember"), 4).holds
    assert classify(m, oracle_lpal(), OneSided(F(1, 4), "member"), 6).holds


def test_lpal_complement_is_onesided_other_side():
    m = complement(build_lpal_qfap())
    co = LanguageOracle("colpal", lambda w: w != w[::-1])
    assert classify(m, co, OneSided(F(1, 4), "nonmember"), 6).holds


def test_lpal_norm_bound():
    for s in "ab":
        assert np.linalg.norm(lpal_step_matrix(s), 2) <= LPAL_GAMMA
        assert np.linalg.norm(lpal_step_matrix(s), "fro") <= LPAL_GAMMA


def test_leqbar_values():
    m = build_leqbar_machine()
    acc = lambda w: postselect(evaluate(m, w)).accept_prob  # noqa: E731
    assert acc("aab") >= F(9, 17)
    assert acc("bab") <= F(8, 17)
    assert acc("b") == 0
    assert classify(m, oracle_leqbar(), parse_mode("bounded:9/19"), 9).holds


def test_zero_mass_is_counterexample():
    m = build_riga_demo().replace(kind=Kind.PFAP, chi=None)
    v = classify(m, LanguageOracle("a*", lambda w: "b" not in w), parse_mode("cutpoint:0"), 3)
    assert not v.holds and v.counterexample == "b"


def test_riga_classify_uses_chi():
    m = build_riga_demo("A")
    o = LanguageOracle("has b", lambda w: "b" in w)
    v = classify(m, o, parse_mode("ncutpoint:1"), 6)
    assert v.worst_member[1] == 1


def test_nondeterministic_mode_on_automaton():
    nfa = contains_aa_nfa()
    o = LanguageOracle("aa", lambda w: "aa" in w)
    assert classify(nfa, o, Nondeterministic(), 6).holds
    assert classify(determinize(nfa), o, ErrorFree(), 6).holds


def test_alphabet_mismatch():
    with pytest.raises(ValueError):
        classify(LEQ, LanguageOracle("x", bool, ("a",)), ErrorFree(), 2)


@pytest.mark.parametrize("name", sorted(WITNESSES))
def test_witnesses_valid_with_postselection_mass(name):
    m = WITNESSES[name]()
    assert validate_wellformed(m).ok
    if m.kind.riga:
        return
    for w in words(m.alphabet, 6):
        assert evaluate(m, w).post_mass > 0
