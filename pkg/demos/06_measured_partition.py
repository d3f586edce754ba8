"""
From measured operators to a state partition
============================================

A qubit machine that measures after every symbol.  Copying the state space
once per measurement outcome turns the labels into state roles, giving an
ordinary quantum postselection automaton with the same decisions.
"""

from postfa.lab import build_measured_demo
from postfa.semantics import decide, evaluate, postselect
from postfa.transforms import partition_states

measured = build_measured_demo()
flat = partition_states(measured)
print("outcomes:", measured.outcomes, "->", flat.n, "states")

for w in ["", "a", "b", "ab", "aab", "abba"]:
    d1 = decide(measured, evaluate(measured, w)).accept_prob
    d2 = postselect(evaluate(flat, w)).accept_prob
    print(f"{w!r:>7} measured {float(d1):.6f}  partitioned {float(d2):.6f}")
    assert abs(d1 - d2) < 1e-9
