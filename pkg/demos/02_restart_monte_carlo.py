"""
Restarting instead of postselecting
===================================

The same automaton read as a machine with restart: whenever a run ends in
a non-decision state it starts over.  The closed form predicts the same
acceptance probability as postselection; sampling agrees.
"""

from postfa.lab import build_leq_pfap
from postfa.semantics import evaluate, restart_closed_form, simulate_restart
from postfa.transforms import to_restart

restart = to_restart(build_leq_pfap())

for w in ["", "a", "ab", "aab", "abab"]:
    exact = restart_closed_form(evaluate(restart, w)).accept_prob
    rep = simulate_restart(restart, w, 50_000, seed=2024)
    print(f"{w!r:>7} exact {float(exact):.4f}  sampled {rep.accept_freq:.4f}  "
          f"rounds/decision {rep.mean_rounds_per_decision:.2f}")
