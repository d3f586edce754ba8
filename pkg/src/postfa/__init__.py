"""Finite automata with postselection, restart and the Riga decision rule.

Probabilistic machines are evaluated in exact rational arithmetic, quantum
machines with density matrices.  See :mod:`postfa.transforms` for the
constructions and :mod:`postfa.lab` for witnesses and the classifier.
"""
from .machine import (
    END_L,
    END_R,
    Kind,
    KrausOp,
    Machine,
    MachineError,
    MachineParseError,
    Role,
    Superoperator,
    dump,
    load,
    loads,
    save,
    validate_wellformed,
)
from .numerics import DEFAULT_TOLERANCE, TolerancePolicy, psd_sqrt
from .semantics import (
    EvaluationOutcome,
    PostselectedDecision,
    ZeroPostselectionMass,
    decide,
    evaluate,
    evaluate_all,
    postselect,
    restart_closed_form,
    riga_decide,
    simulate_restart,
)
from .transforms import VirtualComposite, evaluate_virtual
from .lab import classify, parse_mode

__version__ = "0.1.0"
