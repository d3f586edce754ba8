"""Machine descriptions, the JSON machine file format, and static checks."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .numerics import (
    DEFAULT_TOLERANCE,
    TolerancePolicy,
    complex_matrix,
    dagger,
    format_rational,
    is_rational,
    rational_matrix,
)

END_L = "END_L"
END_R = "END_R"
FORMAT_VERSION = 1


class Role(str, Enum):
    CONTINUING = "continuing"
    POST_ACCEPT = "post_accept"
    POST_REJECT = "post_reject"
    NONPOST_HALT = "nonpost_halt"
    ACCEPT = "accept"
    REJECT = "reject"
    RESTART = "restart"

    @property
    def halting(self) -> bool:
        return self is not Role.CONTINUING


class Kind(str, Enum):
    PFAP = "pfap"
    QFAP = "qfap"
    RESTART_PFA = "restart_pfa"
    RESTART_QFA = "restart_qfa"
    RIGA_PFAP = "riga_pfap"
    RIGA_QFAP = "riga_qfap"
    DFA = "dfa"
    NFA = "nfa"
    MEASURED_QFA = "measured_qfa"
    # standard (no postselection, no restart) machines, produced by to_unbounded_standard
    PFA = "pfa"
    QFA = "qfa"

    @property
    def quantum(self) -> bool:
        return self in _QUANTUM

    @property
    def riga(self) -> bool:
        return self in (Kind.RIGA_PFAP, Kind.RIGA_QFAP)

    @property
    def postselection(self) -> bool:
        return self in (Kind.PFAP, Kind.QFAP, Kind.RIGA_PFAP, Kind.RIGA_QFAP)

    @property
    def restart(self) -> bool:
        return self in (Kind.RESTART_PFA, Kind.RESTART_QFA)

    @property
    def automaton(self) -> bool:
        return self in (Kind.DFA, Kind.NFA)


_QUANTUM = {Kind.QFAP, Kind.RESTART_QFA, Kind.RIGA_QFAP, Kind.MEASURED_QFA, Kind.QFA}

_POST_ROLES = frozenset({Role.CONTINUING, Role.POST_ACCEPT, Role.POST_REJECT, Role.NONPOST_HALT})
_RESTART_ROLES = frozenset({Role.CONTINUING, Role.ACCEPT, Role.REJECT, Role.RESTART})
_STANDARD_ROLES = frozenset({Role.CONTINUING, Role.ACCEPT, Role.REJECT})

ALLOWED_ROLES = {
    Kind.PFAP: _POST_ROLES,
    Kind.QFAP: _POST_ROLES,
    Kind.RIGA_PFAP: _POST_ROLES,
    Kind.RIGA_QFAP: _POST_ROLES,
    Kind.RESTART_PFA: _RESTART_ROLES,
    Kind.RESTART_QFA: _RESTART_ROLES,
    Kind.PFA: _STANDARD_ROLES,
    Kind.QFA: _STANDARD_ROLES,
    Kind.DFA: frozenset({Role.ACCEPT, Role.CONTINUING}),
    Kind.NFA: frozenset({Role.ACCEPT, Role.CONTINUING}),
    Kind.MEASURED_QFA: frozenset({Role.CONTINUING}),
}

# which probability bin a role's terminal mass is reported in
ROLE_BIN = {
    Role.POST_ACCEPT: "a",
    Role.ACCEPT: "a",
    Role.POST_REJECT: "r",
    Role.REJECT: "r",
    Role.NONPOST_HALT: "nh",
    Role.RESTART: "nh",
    Role.CONTINUING: "cont",
}


class MachineError(ValueError):
    """A machine description violates the format or a structural invariant.

    ``violations`` lists every problem found, each naming the state/symbol
    coordinates involved.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MachineParseError(MachineError):
    pass


@dataclass(frozen=True)
class KrausOp:
    matrix: np.ndarray
    outcome: Optional[str] = None


@dataclass(frozen=True)
class Superoperator:
    ops: tuple

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(
            op if isinstance(op, KrausOp) else KrausOp(complex_matrix(op)) for op in self.ops))
        if not self.ops:
            raise MachineError("superoperator needs at least one Kraus operator")
        shape = self.ops[0].matrix.shape
        for op in self.ops:
            if op.matrix.shape != shape or shape[0] != shape[1]:
                raise MachineError("Kraus operators must be square with identical dimension")

    @property
    def dim(self) -> int:
        return self.ops[0].matrix.shape[0]

    def completeness(self) -> np.ndarray:
        return sum(dagger(op.matrix) @ op.matrix for op in self.ops)

    def stacked(self) -> np.ndarray:
        """Kraus matrices concatenated one under the other."""
        return np.vstack([op.matrix for op in self.ops])

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(op.matrix @ rho @ dagger(op.matrix) for op in self.ops)


Block = Union[np.ndarray, Superoperator]


@dataclass(frozen=True, eq=False)
class Machine:
    """A real-time automaton.

    ``transitions`` maps every extended symbol (``END_L``, each alphabet
    symbol, ``END_R``) to a column-stochastic Fraction matrix (classical
    kinds) or a :class:`Superoperator` (quantum kinds).  Column ``i`` /
    row ``j`` index follows ``states``.
    """

    kind: Kind
    alphabet: tuple
    states: tuple  # of (name, Role)
    initial: str
    transitions: dict
    chi: Optional[str] = None
    outcomes: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "states", tuple((str(n), Role(r)) for n, r in self.states))
        if self.outcomes is not None:
            object.__setattr__(self, "outcomes", tuple(self.outcomes))
        problems = _structural_problems(self)
        if problems:
            raise MachineError(problems)

    # -- convenience -------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def names(self) -> list:
        return [n for n, _ in self.states]

    @property
    def roles(self) -> list:
        return [r for _, r in self.states]

    @cached_property
    def index(self) -> dict:
        return {name: i for i, (name, _) in enumerate(self.states)}

    @property
    def extended_alphabet(self) -> tuple:
        return (END_L,) + self.alphabet + (END_R,)

    def states_with(self, *roles) -> list:
        return [i for i, (_, r) in enumerate(self.states) if r in roles]

    def replace(self, **changes) -> "Machine":
        fields = dict(kind=self.kind, alphabet=self.alphabet, states=self.states,
                      initial=self.initial, transitions=self.transitions, chi=self.chi,
                      outcomes=self.outcomes)
        fields.update(changes)
        return Machine(**fields)

    def __eq__(self, other):
        if not isinstance(other, Machine):
            return NotImplemented
        return save(self) == save(other)

    def __hash__(self):
        return hash(save(self))


def _structural_problems(m: Machine) -> list:
    problems = []
    if len(set(m.alphabet)) != len(m.alphabet):
        problems.append("alphabet has duplicate symbols")
    for s in m.alphabet:
        if not isinstance(s, str) or len(s) != 1:
            problems.append(f"alphabet symbol {s!r} must be a single character")
    names = [n for n, _ in m.states]
    if len(set(names)) != len(names):
        problems.append("duplicate state names")
    if not names:
        problems.append("machine has no states")
    allowed = ALLOWED_ROLES[m.kind]
    for name, role in m.states:
        if role not in allowed:
            problems.append(f"state {name!r}: role {role.value!r} not allowed for kind {m.kind.value}")
    if m.initial not in names:
        problems.append(f"initial state {m.initial!r} does not exist")
    elif (m.kind.postselection or m.kind.restart) and \
            dict(m.states)[m.initial] is not Role.CONTINUING:
        problems.append(f"initial state {m.initial!r} must be continuing")
    if m.kind.riga != (m.chi is not None):
        problems.append("chi must be given exactly for Riga kinds")
    if m.chi is not None and m.chi not in ("A", "R"):
        problems.append(f"chi must be 'A' or 'R', got {m.chi!r}")
    if (m.kind is Kind.MEASURED_QFA) != (m.outcomes is not None):
        problems.append("outcomes must be given exactly for measured_qfa")
    if m.outcomes is not None and len(set(m.outcomes)) != len(m.outcomes):
        problems.append("duplicate outcome labels")
    expected = {END_L, END_R, *m.alphabet}
    got = set(m.transitions)
    for s in sorted(expected - got):
        problems.append(f"missing transitions for symbol {s!r}")
    for s in sorted(got - expected):
        problems.append(f"transitions given for unknown symbol {s!r}")
    n = len(names)
    for sym in sorted(expected & got):
        block = m.transitions[sym]
        if m.kind.quantum:
            if not isinstance(block, Superoperator):
                problems.append(f"symbol {sym!r}: quantum kinds need a superoperator")
                continue
            if block.dim != n:
                problems.append(f"symbol {sym!r}: Kraus dimension {block.dim} != {n} states")
            for k, op in enumerate(block.ops):
                if m.kind is Kind.MEASURED_QFA:
                    if op.outcome is None:
                        problems.append(f"symbol {sym!r}: Kraus operator {k} has no outcome label")
                    elif op.outcome not in m.outcomes:
                        problems.append(f"symbol {sym!r}: Kraus operator {k} outcome "
                                        f"{op.outcome!r} not in outcomes")
        else:
            if not isinstance(block, np.ndarray) or not is_rational(block):
                problems.append(f"symbol {sym!r}: classical kinds need a rational matrix")
                continue
            if block.shape != (n, n):
                problems.append(f"symbol {sym!r}: matrix shape {block.shape} != ({n}, {n})")
    return problems


# -- well-formedness -------------------------------------------------------

@dataclass
class WellformedReport:
    ok: bool
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    # quantum only: did the stacked-column test agree with the completeness sum?
    tests_agree: bool = True

    def __bool__(self):
        return self.ok


def superoperator_complete(sop: Superoperator, tol: TolerancePolicy = DEFAULT_TOLERANCE) -> bool:
    dev = sop.completeness() - np.eye(sop.dim)
    return float(np.max(np.abs(dev))) <= tol.eps_validate


def stacked_orthonormal(sop: Superoperator, tol: TolerancePolicy = DEFAULT_TOLERANCE) -> bool:
    """Column test: the columns of the stacked Kraus matrix form an orthonormal set."""
    big = sop.stacked()
    cols = [big[:, j] for j in range(big.shape[1])]
    for i, u in enumerate(cols):
        for j in range(i, len(cols)):
            ip = complex(np.vdot(u, cols[j]))
            target = 1.0 if i == j else 0.0
            if abs(ip - target) > tol.eps_validate:
                return False
    return True


def validate_wellformed(m: Machine, tol: TolerancePolicy = DEFAULT_TOLERANCE) -> WellformedReport:
    report = WellformedReport(ok=True)
    halting = [i for i, r in enumerate(m.roles) if r.halting]
    for sym in m.extended_alphabet:
        block = m.transitions[sym]
        if m.kind.quantum:
            complete = superoperator_complete(block, tol)
            ortho = stacked_orthonormal(block, tol)
            if complete != ortho:
                report.tests_agree = False
            if not complete:
                dev = block.completeness() - np.eye(block.dim)
                i, j = np.unravel_index(np.argmax(np.abs(dev)), dev.shape)
                report.violations.append(
                    f"symbol {sym!r}: Kraus completeness violated, |sum E^dag E - I| = "
                    f"{abs(dev[i, j]):.3e} at ({m.names[i]}, {m.names[j]})")
            if not ortho and complete:
                report.violations.append(f"symbol {sym!r}: stacked columns not orthonormal")
            for h in halting:
                leak = sum(float(np.sum(np.abs(op.matrix[:, h]) ** 2)) - abs(op.matrix[h, h]) ** 2
                           for op in block.ops)
                if leak > tol.eps_validate and m.kind is not Kind.MEASURED_QFA:
                    report.warnings.append(
                        f"symbol {sym!r}: halting state {m.names[h]!r} is not absorbing")
        else:
            mat = block
            if m.kind is Kind.NFA:
                for (i, j), v in np.ndenumerate(mat):
                    if v not in (0, 1):
                        report.violations.append(
                            f"symbol {sym!r}: entry ({m.names[i]}, {m.names[j]}) = "
                            f"{format_rational(v)} is not 0/1")
                continue
            for j in range(m.n):
                col = mat[:, j]
                if any(v < 0 for v in col):
                    report.violations.append(
                        f"symbol {sym!r}: column {m.names[j]!r} has a negative entry")
                total = sum(col, Fraction(0))
                if total != 1:
                    report.violations.append(
                        f"symbol {sym!r}: column {m.names[j]!r} sums to {format_rational(total)}, not 1")
                if m.kind is Kind.DFA and sorted(col) != [0] * (m.n - 1) + [1]:
                    report.violations.append(
                        f"symbol {sym!r}: column {m.names[j]!r} is not deterministic")
            for h in halting:
                if m.kind.automaton:
                    break
                if mat[h, h] != 1:
                    report.warnings.append(
                        f"symbol {sym!r}: halting state {m.names[h]!r} is not absorbing")
    report.ok = not report.violations
    return report


# -- serialization ---------------------------------------------------------

def _complex_entry(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def machine_to_dict(m: Machine) -> dict:
    doc = {
        "format": FORMAT_VERSION,
        "kind": m.kind.value,
        "alphabet": list(m.alphabet),
        "states": [{"name": n, "role": r.value} for n, r in m.states],
        "initial": m.initial,
    }
    if m.chi is not None:
        doc["chi"] = m.chi
    if m.outcomes is not None:
        doc["outcomes"] = list(m.outcomes)
    trans = {}
    for sym in m.extended_alphabet:
        block = m.transitions[sym]
        if m.kind.quantum:
            ops = []
            for op in block.ops:
                entry = {}
                if op.outcome is not None:
                    entry["outcome"] = op.outcome
                entry["matrix"] = [[_complex_entry(z) for z in row] for row in op.matrix]
                ops.append(entry)
            trans[sym] = ops
        else:
            trans[sym] = [[format_rational(v) for v in row] for row in block]
    doc["transitions"] = trans
    return doc


def save(m: Machine) -> str:
    """Canonical JSON text for ``m`` (byte-identical across runs)."""
    return json.dumps(machine_to_dict(m), indent=1, ensure_ascii=False) + "\n"


def dump(m: Machine, path) -> None:
    Path(path).write_text(save(m), encoding="utf-8")


def machine_from_dict(doc: dict) -> Machine:
    try:
        if doc.get("format") != FORMAT_VERSION:
            raise MachineParseError(f"unsupported format {doc.get('format')!r}")
        kind = Kind(doc["kind"])
        states = []
        for s in doc["states"]:
            try:
                states.append((s["name"], Role(s["role"])))
            except ValueError:
                raise MachineError(f"state {s.get('name')!r}: unknown role {s.get('role')!r}")
        trans = {}
        for sym, block in doc["transitions"].items():
            if kind.quantum:
                ops = []
                for op in block:
                    rows = [[complex(re, im) for re, im in row] for row in op["matrix"]]
                    ops.append(KrausOp(complex_matrix(rows), op.get("outcome")))
                trans[sym] = Superoperator(tuple(ops))
            else:
                trans[sym] = rational_matrix(block)
        return Machine(kind=kind, alphabet=tuple(doc["alphabet"]), states=tuple(states),
                       initial=doc["initial"], transitions=trans, chi=doc.get("chi"),
                       outcomes=doc.get("outcomes"))
    except MachineError:
        raise
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise MachineParseError(f"malformed machine document: {exc!r}") from exc


def loads(text: str, tol: TolerancePolicy = DEFAULT_TOLERANCE) -> Machine:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MachineParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MachineParseError("machine document must be a JSON object")
    m = machine_from_dict(doc)
    report = validate_wellformed(m, tol)
    if not report.ok:
        raise MachineError(report.violations)
    return m


def load(source, tol: TolerancePolicy = DEFAULT_TOLERANCE) -> Machine:
    """Load a machine from a path or from JSON text."""
    if isinstance(source, os.PathLike) or (
            isinstance(source, str) and not source.lstrip().startswith("{")):
        source = Path(source).read_text(encoding="utf-8")
    return loads(source, tol)
