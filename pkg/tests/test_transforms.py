import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import words
from postfa.lab import (
    build_leq_pfap,
    build_lpal_qfap,
    build_measured_demo,
    build_riga_demo,
    build_rotation_qfap,
)
from postfa.machine import END_L, END_R, Kind, Machine, Role, validate_wellformed
from postfa.semantics import (
    automaton_accepts,
    decide,
    evaluate,
    evaluate_all,
    postselect,
    riga_decide,
)
from postfa.transforms import (
    AmplificationPlan,
    MaterializationRefused,
    TransformError,
    VirtualComposite,
    absorbing,
    amplification_k,
    amplify,
    complement,
    determinize,
    errorfree_from_cutpoint_pair,
    evaluate_virtual,
    intersect,
    partition_states,
    prefix_dispatch,
    riga_errorfree_from_cutpoint0,
    riga_to_standard,
    support_nfa,
    tensor_power,
    to_postselection,
    to_quantum,
    to_restart,
    to_unbounded_standard,
    union,
)

LEQ = build_leq_pfap()


def automaton(kind, states, cols, alphabet=("a", "b")):
    """Automaton from successor lists ``{sym: {src: [dst, ...]}}``; unlisted columns loop."""
    names = [n for n, _ in states]
    idx = {n: i for i, n in enumerate(names)}
    trans = {}
    for sym in (END_L, *alphabet, END_R):
        mat = np.full((len(names), len(names)), F(0), dtype=object)
        for j, src in enumerate(names):
            for dst in cols.get(sym, {}).get(src, [src]):
                mat[idx[dst], j] = F(1)
        trans[sym] = mat
    return Machine(kind=kind, alphabet=alphabet, states=tuple(states), initial=names[0],
                   transitions=trans)


def even_a_dfa(accept_even=True):
    acc = (Role.ACCEPT, Role.CONTINUING) if accept_even else (Role.CONTINUING, Role.ACCEPT)
    return automaton(Kind.DFA, [("s", Role.CONTINUING), ("e", acc[0]), ("o", acc[1])],
                     {END_L: {"s": ["e"]}, "a": {"e": ["o"], "o": ["e"]}})


def contains_aa_nfa():
    # guesses where "aa" starts
    return automaton(Kind.NFA, [("s", Role.CONTINUING), ("p", Role.CONTINUING),
                                ("q1", Role.CONTINUING), ("f", Role.ACCEPT)],
                     {END_L: {"s": ["p"]}, "a": {"p": ["p", "q1"], "q1": ["f"]},
                      "b": {"p": ["p"], "q1": []}})


def test_absorbing_preserves_outcomes():
    a = absorbing(LEQ)
    for w in words("ab", 4):
        assert evaluate(a, w) == evaluate(LEQ, w)
    q = build_lpal_qfap()
    qa = absorbing(q)
    assert validate_wellformed(qa).ok
    for w in words("ab", 3):
        assert evaluate(qa, w).p_a == pytest.approx(evaluate(q, w).p_a, abs=1e-15)


def test_restart_roundtrip():
    r = to_restart(LEQ)
    assert r.kind is Kind.RESTART_PFA
    assert [x.value for x in r.roles][-3:] == ["accept", "reject", "restart"]
    assert to_postselection(r) == LEQ
    with pytest.raises(TransformError):
        to_restart(build_riga_demo())
    with pytest.raises(TransformError):
        to_postselection(LEQ)


def test_complement_involution_and_swap():
    c = complement(LEQ)
    assert complement(c) == LEQ
    for w in words("ab", 4):
        o, oc = evaluate(LEQ, w), evaluate(c, w)
        assert (oc.p_a, oc.p_r) == (o.p_r, o.p_a)


def test_riga_complement_flips_chi():
    assert complement(build_riga_demo("A")).chi == "R"
    m = complement(build_riga_demo("A"))
    assert riga_decide(m, evaluate(m, "b")).accept_prob == 0


@pytest.mark.parametrize("combine", [union, intersect])
def test_materialized_product_matches_algebra(combine):
    m1, m2 = LEQ, build_leq_pfap(1)
    mat = combine(m1, m2)
    virt = combine(m1, m2, materialize=False)
    assert isinstance(virt, VirtualComposite)
    assert mat.n == 49 and validate_wellformed(mat).ok
    for w in words("ab", 5):
        got, want = evaluate(mat, w), evaluate_virtual(virt, w)
        assert (got.p_a, got.p_r, got.p_nh) == (want.p_a, want.p_r, want.p_nh)


def test_quantum_product_matches_algebra():
    m1 = build_rotation_qfap(0.3, alphabet=("a", "b"))
    m2 = build_rotation_qfap(1.1, alphabet=("a", "b"))
    mat = union(m1, m2)
    assert validate_wellformed(mat).ok
    virt = union(m1, m2, materialize=False)
    for w in words("ab", 4):
        got, want = evaluate(mat, w), evaluate_virtual(virt, w)
        assert got.p_a == pytest.approx(want.p_a, abs=1e-12)
        assert got.p_r == pytest.approx(want.p_r, abs=1e-12)


def test_tensor_square_is_exact_square():
    sq = tensor_power(LEQ, 2)
    for w in words("ab", 5):
        o, o2 = evaluate(LEQ, w), evaluate(sq, w)
        assert (o2.p_a, o2.p_r) == (o.p_a ** 2, o.p_r ** 2)


def test_materialization_cap():
    with pytest.raises(MaterializationRefused):
        tensor_power(LEQ, 12)
    with pytest.raises(MaterializationRefused):
        union(LEQ, LEQ, cap=48)


@pytest.mark.parametrize("eps, k", [(F(1, 4), 3), (F(9, 19), 12), (F(1, 10), 3)])
def test_amplification_k_values(eps, k):
    assert amplification_k(eps) == k


@settings(max_examples=80, deadline=None)
@given(st.fractions(min_value=F(1, 1000), max_value=F(499, 1000)))
def test_amplification_k_is_minimal(eps):
    k = amplification_k(eps)
    r = eps / (1 - eps)
    target = eps ** 2 / (1 - eps ** 2)
    assert r ** k <= target
    assert k == 1 or r ** (k - 1) > target
    formula = 1 + math.ceil(math.log(1 / eps + 1) / math.log(1 / eps - 1))
    assert abs(formula - k) <= 1


@pytest.mark.parametrize("eps", [0, F(1, 2), F(3, 4)])
def test_amplification_k_range(eps):
    with pytest.raises(ValueError):
        amplification_k(eps)


def test_amplification_plan_checks_k():
    with pytest.raises(ValueError):
        AmplificationPlan(F(9, 19), 11, F(81, 361))


def test_amplify_virtual_and_materialized_agree():
    plan, virt = amplify(LEQ, F(1, 4))
    _, mat = amplify(LEQ, F(1, 4), materialize=True)
    assert plan.k == 3 and mat.n == 7 ** 3
    for w in words("ab", 3):
        a, b = evaluate_virtual(virt, w), evaluate(mat, w)
        assert (a.p_a, a.p_r) == (b.p_a, b.p_r)


def test_composite_dict_roundtrip():
    _, amp = amplify(LEQ, F(9, 19))
    tree = union(amp, complement(amplify(build_leq_pfap(1), F(9, 19))[1]), materialize=False)
    again = VirtualComposite.from_dict(tree.to_dict())
    for w in words("ab", 3):
        assert evaluate_virtual(again, w) == evaluate_virtual(tree, w)


def test_virtual_arity_checked():
    with pytest.raises(TransformError):
        VirtualComposite("union", (LEQ,))
    with pytest.raises(TransformError):
        VirtualComposite("tensor_power", (LEQ,), {"k": 0})


@pytest.mark.parametrize("chi", ["A", "R"])
def test_support_dfa_detects_zero_mass(chi):
    m = build_riga_demo(chi)
    dfa = determinize(support_nfa(m))
    assert validate_wellformed(dfa).ok
    for w in words("ab", 6):
        assert automaton_accepts(dfa, w) == (evaluate(m, w).post_mass > 0)


@pytest.mark.parametrize("chi", ["A", "R"])
def test_riga_to_standard_matches(chi):
    m = build_riga_demo(chi)
    std = riga_to_standard(m)
    assert std.kind is Kind.PFAP and validate_wellformed(std).ok
    for w in words("ab", 6):
        assert postselect(evaluate(std, w)).accept_prob == riga_decide(m, evaluate(m, w)).accept_prob


def test_riga_to_standard_on_leq_with_chi():
    m = LEQ.replace(kind=Kind.RIGA_PFAP, chi="R")
    std = riga_to_standard(m)
    for w in words("ab", 5):
        assert postselect(evaluate(std, w)) == postselect(evaluate(LEQ, w))


def test_errorfree_pair():
    m = errorfree_from_cutpoint_pair(even_a_dfa(), even_a_dfa(False))
    assert validate_wellformed(m).ok
    for w in words("ab", 6):
        o = evaluate(m, w)
        assert o.post_mass > 0
        assert postselect(o).accept_prob == (1 if w.count("a") % 2 == 0 else 0)


def test_errorfree_pair_from_nfa():
    nfa = contains_aa_nfa()
    co = automaton(Kind.NFA, [("s", Role.CONTINUING), ("n", Role.ACCEPT), ("y", Role.ACCEPT),
                              ("dead", Role.CONTINUING)],
                   {END_L: {"s": ["y"]}, "a": {"y": ["n"], "n": ["dead"]}, "b": {"n": ["y"]}})
    m = errorfree_from_cutpoint_pair(nfa, co)
    for w in words("ab", 6):
        assert postselect(evaluate(m, w)).accept_prob == ("aa" in w)


@pytest.mark.parametrize("side", ["L", "coL"])
def test_riga_errorfree(side):
    d = even_a_dfa() if side == "L" else even_a_dfa(False)
    m = riga_errorfree_from_cutpoint0(d, side)
    assert m.chi == ("R" if side == "L" else "A")
    for w in words("ab", 6):
        assert decide(m, evaluate(m, w)).accept_prob == (w.count("a") % 2 == 0)


def test_cutpoint_inputs_must_be_automata():
    with pytest.raises(TransformError):
        errorfree_from_cutpoint_pair(LEQ, LEQ)


def test_unbounded_standard_classical():
    u = to_unbounded_standard(LEQ)
    assert u.kind is Kind.PFA and validate_wellformed(u).ok
    for w in words("ab", 6):
        o, ou = evaluate(LEQ, w), evaluate(u, w)
        assert ou.p_a == o.p_a + o.p_nh / 2
        assert (ou.p_a > F(1, 2)) == (postselect(o).accept_prob > F(1, 2))


def test_unbounded_standard_quantum():
    q = build_lpal_qfap()
    u = to_unbounded_standard(q)
    assert u.kind is Kind.QFA and validate_wellformed(u).ok
    for w in words("ab", 4):
        o, ou = evaluate(q, w), evaluate(u, w)
        assert ou.p_a == pytest.approx(o.p_a + o.p_nh / 2, abs=1e-12)


def test_prefix_dispatch_materialized_matches_virtual():
    routing = {"a": 1, "b": 2}
    short = {"": False, "a": True, "b": False}
    mat = prefix_dispatch(LEQ, complement(LEQ), routing, short)
    virt = prefix_dispatch(LEQ, complement(LEQ), routing, short, materialize=False)
    assert validate_wellformed(mat).ok
    for w in words("ab", 6):
        a, b = evaluate(mat, w), evaluate_virtual(virt, w)
        assert postselect(a) == postselect(b)
    assert postselect(evaluate(mat, "b")).accept_prob == 0
    assert postselect(evaluate(mat, "aab")).accept_prob == postselect(evaluate(LEQ, "ab")).accept_prob


def test_prefix_dispatch_needs_short_answers():
    with pytest.raises(TransformError):
        prefix_dispatch(LEQ, LEQ, {"a": 1, "b": 2}, {"": True})


def test_partition_states():
    m = build_measured_demo()
    p = partition_states(m)
    assert p.n == m.n * len(m.outcomes)
    assert validate_wellformed(p).ok
    for w in words("ab", 6):
        a, b = evaluate(m, w), evaluate(p, w)
        assert b.p_a == pytest.approx(a.p_a, abs=1e-12)
        assert b.p_r == pytest.approx(a.p_r, abs=1e-12)
        assert b.p_nh == pytest.approx(a.p_nh, abs=1e-12)


def test_to_quantum_embedding():
    q = to_quantum(LEQ)
    assert q.kind is Kind.QFAP and validate_wellformed(q).ok
    for w in words("ab", 4):
        o, oq = evaluate(LEQ, w), evaluate(q, w)
        assert oq.p_a == pytest.approx(float(o.p_a), abs=1e-12)
        assert oq.p_r == pytest.approx(float(o.p_r), abs=1e-12)


def _random_pfap(rng, kind=Kind.PFAP, chi=None, n_cont=3, sparse=0.5):
    """Random postselection machine: continuing states plus pa, pr, nh sinks."""
    roles = [Role.CONTINUING] * n_cont + [Role.POST_ACCEPT, Role.POST_REJECT, Role.NONPOST_HALT]
    n = len(roles)
    states = tuple((f"q{i}", r) for i, r in enumerate(roles))
    trans = {}
    for sym in (END_L, "a", "b", END_R):
        mat = np.full((n, n), F(0), dtype=object)
        for j in range(n):
            if j >= n_cont:
                mat[j, j] = F(1)
                continue
            targets = range(n_cont, n) if sym == END_R else range(n)
            weights = [int(rng.integers(1, 4)) if rng.random() > sparse else 0 for _ in targets]
            if not any(weights):
                weights[-1] = 1
            total = sum(weights)
            for i, wt in zip(targets, weights):
                mat[i, j] = F(wt, total)
        trans[sym] = mat
    return Machine(kind=kind, alphabet=("a", "b"), states=states, initial="q0",
                   transitions=trans, chi=chi)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["A", "R"]))
def test_riga_to_standard_random_machines(seed, chi):
    m = _random_pfap(np.random.default_rng(seed), Kind.RIGA_PFAP, chi, sparse=0.7)
    std = riga_to_standard(m)
    assert validate_wellformed(std).ok
    std_out = dict(evaluate_all(std, 4))
    for w, o in evaluate_all(m, 4):
        assert postselect(std_out[w]).accept_prob == riga_decide(m, o).accept_prob


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_product_algebra_random_machines(seed):
    rng = np.random.default_rng(seed)
    m1, m2 = _random_pfap(rng, n_cont=2), _random_pfap(rng, n_cont=2)
    for combine in (union, intersect):
        mat, virt = combine(m1, m2), combine(m1, m2, materialize=False)
        for w in words("ab", 3):
            a, b = evaluate(mat, w), evaluate_virtual(virt, w)
            assert (a.p_a, a.p_r) == (b.p_a, b.p_r)
