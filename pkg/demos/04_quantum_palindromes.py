"""
Palindromes with a quantum postselection automaton
==================================================

A ten-state QFAP keeps the forward and reversed base-4 encodings of the
input in amplitudes.  Palindromes never reach the reject state, so after
postselection they are accepted with certainty; other strings are accepted
with probability at most 1/4.
"""

import numpy as np

from postfa.lab import build_lpal_qfap, classify, oracle_lpal, parse_mode
from postfa.semantics import evaluate_all, postselect

m = build_lpal_qfap()
for w, o in evaluate_all(m, 3):
    print(f"{w!r:>6} p_a={o.p_a:.3e} p_r={o.p_r:.3e} accept={postselect(o).accept_prob:.6f}")

probs = np.array([float(postselect(o).accept_prob) for w, o in evaluate_all(m, 8) if w != w[::-1]])
print("largest accept among non-palindromes:", probs.max())
print(classify(m, oracle_lpal(), parse_mode("onesided:1/4"), 8))
