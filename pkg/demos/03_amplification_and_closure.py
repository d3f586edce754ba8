"""
Amplification and closure
=========================

Tensor powers of a postselection machine raise the accept/reject ratio to
a power, so k = 12 copies square the 9/19 error bound.  The products are
evaluated virtually; materializing 7^12 states is refused.
"""

from fractions import Fraction

from postfa.lab import BoundedError, build_leq_pfap, classify, oracle_leq
from postfa.transforms import (
    MaterializationRefused,
    amplify,
    complement,
    evaluate_virtual,
    intersect,
    tensor_power,
    union,
)
from postfa.semantics import postselect

leq = build_leq_pfap()
plan, amp = amplify(leq, Fraction(9, 19))
print("copies:", plan.k, "new bound:", plan.eps_out_bound)
print(classify(amp, oracle_leq(), BoundedError(plan.eps_out_bound), 8))

try:
    tensor_power(leq, plan.k)
except MaterializationRefused as exc:
    print("refused:", exc)

# second language: |w|_a - |w|_b != 1
_, amp1 = amplify(build_leq_pfap(1), Fraction(9, 19))
other = complement(amp1)
u = union(amp, other, materialize=False)
x = intersect(amp, other, materialize=False)
for w in ["", "a", "ab", "aab", "bb"]:
    pu = postselect(evaluate_virtual(u, w)).accept_prob
    px = postselect(evaluate_virtual(x, w)).accept_prob
    print(f"{w!r:>6} union {float(pu):.4f}  intersection {float(px):.4f}")
