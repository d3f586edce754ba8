"""
Postselection on the balanced-count language
============================================

A seven-state probabilistic automaton that is hopeless without
postselection: every branch dies off geometrically.  After discarding the
branches that end outside the accept/reject states, the survivors separate
balanced from unbalanced strings with error at most 9/19.
"""

from fractions import Fraction

from postfa.lab import build_leq_pfap, classify, oracle_leq, parse_mode
from postfa.semantics import evaluate_all, postselect

m = build_leq_pfap()

# exact outcome masses for short inputs
print(f"{'w':>6} {'p_a':>10} {'p_r':>10} {'accept':>8}")
for w, o in evaluate_all(m, 3):
    print(f"{w!r:>6} {str(o.p_a):>10} {str(o.p_r):>10} {str(postselect(o).accept_prob):>8}")

# the raw masses shrink like 2^-n, the postselected decision does not
for n in (4, 8, 12):
    w = "ab" * (n // 2)
    o = dict(evaluate_all(m, n))[w]
    print(n, float(o.p_a + o.p_r), postselect(o).accept_prob)

verdict = classify(m, oracle_leq(), parse_mode("bounded:9/19"), 10)
print(verdict)
assert verdict.worst_nonmember[1] == Fraction(9, 19)
