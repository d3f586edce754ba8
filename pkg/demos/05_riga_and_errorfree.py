"""
Zero postselection mass and error-free machines
===============================================

A Riga machine decides by its flag when nothing reaches the postselection
states.  The flag can be compiled away: a subset construction finds the
zero-mass strings and a product machine hard-wires the decision.  The last
part builds an error-free machine from two automata for a regular language
and its complement.
"""

from postfa.lab import ErrorFree, build_riga_demo, classify, oracle_from_dfa
from postfa.machine import END_L, Kind, Machine, Role
from postfa.semantics import evaluate, postselect, riga_decide
from postfa.transforms import errorfree_from_cutpoint_pair, riga_to_standard

import numpy as np
from fractions import Fraction

riga = build_riga_demo("A")
std = riga_to_standard(riga)
print("standard machine states:", std.n)
for w in ["", "a", "aa", "b", "ab", "aab"]:
    print(f"{w!r:>6} riga {riga_decide(riga, evaluate(riga, w)).accept_prob}  "
          f"standard {postselect(evaluate(std, w)).accept_prob}")


def parity_dfa(accept_even):
    one, zero = Fraction(1), Fraction(0)
    ident = np.array([[one if i == j else zero for j in range(3)] for i in range(3)], dtype=object)
    start = ident.copy()
    start[:, 0] = [zero, one, zero]
    flip = ident.copy()
    flip[:, 1] = [zero, zero, one]
    flip[:, 2] = [zero, one, zero]
    even, odd = (Role.ACCEPT, Role.CONTINUING) if accept_even else (Role.CONTINUING, Role.ACCEPT)
    return Machine(kind=Kind.DFA, alphabet=("a", "b"),
                   states=(("s", Role.CONTINUING), ("even", even), ("odd", odd)), initial="s",
                   transitions={END_L: start, "a": flip, "b": ident, "END_R": ident})


exact = errorfree_from_cutpoint_pair(parity_dfa(True), parity_dfa(False))
print(classify(exact, oracle_from_dfa(parity_dfa(True)), ErrorFree(), 8))
