"""Machine transformations and constructions.

Composite constructions (tensor powers, union, intersection, prefix
dispatch) exist in two forms: materialized machines with explicit matrices,
and :class:`VirtualComposite` trees evaluated by probability algebra over the
factors' outcomes.  The materialized form is what the algebra is checked
against on small instances.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .machine import (
    END_L,
    END_R,
    FORMAT_VERSION,
    Kind,
    KrausOp,
    Machine,
    Role,
    Superoperator,
    machine_from_dict,
    machine_to_dict,
)
from .numerics import tensor_product
from .semantics import EvaluationOutcome, evaluate, outcome_role

DEFAULT_STATE_CAP = 20_000


class MaterializationRefused(RuntimeError):
    """The materialized machine would exceed the state-count cap."""


class TransformError(ValueError):
    pass


# -- helpers -----------------------------------------------------------------

def _zeros(n: int) -> np.ndarray:
    return np.full((n, n), Fraction(0), dtype=object)


def absorbing(m: Machine) -> Machine:
    """Equivalent machine whose halting states are explicitly absorbing.

    Classical: halting columns become unit vectors.  Quantum: Kraus set
    ``{E P_c} ∪ {|h><h|}``, i.e. the per-step halting measurement written
    as a channel.  Evaluation of the result equals evaluation of ``m``.
    """
    halting = [i for i, r in enumerate(m.roles) if r.halting]
    trans = {}
    if not m.kind.quantum:
        for sym, mat in m.transitions.items():
            mat = mat.copy()
            for h in halting:
                mat[:, h] = Fraction(0)
                mat[h, h] = Fraction(1)
            trans[sym] = mat
    else:
        pc = np.diag([0.0 if r.halting else 1.0 for r in m.roles]).astype(np.complex128)
        for sym, sop in m.transitions.items():
            ops = [KrausOp(op.matrix @ pc, op.outcome) for op in sop.ops]
            for h in halting:
                e = np.zeros((m.n, m.n), dtype=np.complex128)
                e[h, h] = 1.0
                ops.append(KrausOp(e))
            trans[sym] = Superoperator(tuple(ops))
    return m.replace(transitions=trans)


def _remap_roles(m: Machine, kind: Kind, mapping: dict, **changes) -> Machine:
    states = tuple((n, mapping.get(r, r)) for n, r in m.states)
    return m.replace(kind=kind, states=states, **changes)


# -- role remaps ---------------------------------------------------------------

_TO_RESTART = {Role.NONPOST_HALT: Role.RESTART, Role.POST_ACCEPT: Role.ACCEPT,
               Role.POST_REJECT: Role.REJECT}
_TO_POST = {v: k for k, v in _TO_RESTART.items()}


def to_restart(m: Machine) -> Machine:
    """Postselection machine -> restart machine with identical transitions."""
    if m.kind.riga:
        raise TransformError("Riga machines have no restart counterpart")
    if m.kind not in (Kind.PFAP, Kind.QFAP):
        raise TransformError(f"to_restart needs pfap or qfap, got {m.kind.value}")
    kind = Kind.RESTART_PFA if m.kind is Kind.PFAP else Kind.RESTART_QFA
    return _remap_roles(m, kind, _TO_RESTART)


def to_postselection(m: Machine) -> Machine:
    if not m.kind.restart:
        raise TransformError(f"to_postselection needs a restart machine, got {m.kind.value}")
    kind = Kind.PFAP if m.kind is Kind.RESTART_PFA else Kind.QFAP
    return _remap_roles(m, kind, _TO_POST)


def complement(m):
    """Swap accept and reject designations (and flip chi for Riga machines)."""
    if isinstance(m, VirtualComposite):
        return VirtualComposite("complement", (m,))
    swap = {Role.POST_ACCEPT: Role.POST_REJECT, Role.POST_REJECT: Role.POST_ACCEPT,
            Role.ACCEPT: Role.REJECT, Role.REJECT: Role.ACCEPT}
    if not (m.kind.postselection or m.kind.restart):
        raise TransformError(f"complement needs a postselection machine, got {m.kind.value}")
    chi = {"A": "R", "R": "A"}[m.chi] if m.kind.riga else None
    return _remap_roles(m, m.kind, swap, chi=chi)


# -- virtual composites ------------------------------------------------------

@dataclass(frozen=True)
class VirtualComposite:
    """Symbolic composition evaluated without building product matrices.

    ``op`` is one of ``tensor_power``, ``union``, ``intersection``,
    ``prefix_dispatch``, ``complement``.  ``params`` holds ``k`` for powers,
    and ``routing`` (symbol -> factor index) plus ``short`` (string -> bool)
    for prefix dispatch.
    """

    op: str
    factors: tuple
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        arity = {"tensor_power": 1, "union": 2, "intersection": 2, "complement": 1}
        if self.op == "prefix_dispatch":
            if not self.factors:
                raise TransformError("prefix_dispatch needs factors")
        elif self.op not in arity:
            raise TransformError(f"unknown composite op {self.op!r}")
        elif len(self.factors) != arity[self.op]:
            raise TransformError(f"{self.op} takes {arity[self.op]} factor(s)")
        alphabets = {tuple(f.alphabet) for f in self.factors}
        if len(alphabets) != 1:
            raise TransformError("factor alphabets differ")
        if self.op == "tensor_power" and int(self.params.get("k", 0)) < 1:
            raise TransformError("tensor_power needs k >= 1")

    @property
    def alphabet(self) -> tuple:
        return tuple(self.factors[0].alphabet)

    @property
    def quantum(self) -> bool:
        return any(f.quantum if isinstance(f, VirtualComposite) else f.kind.quantum
                   for f in self.factors)

    @property
    def state_count(self) -> int:
        sizes = [f.state_count if isinstance(f, VirtualComposite) else f.n for f in self.factors]
        if self.op == "tensor_power":
            return sizes[0] ** int(self.params["k"])
        if self.op in ("union", "intersection"):
            return sizes[0] * sizes[1]
        if self.op == "complement":
            return sizes[0]
        return sum(sizes) + len(self.alphabet) + 4

    def to_dict(self) -> dict:
        params = dict(self.params)
        if "short" in params:
            params["short"] = {w: ("accept" if v else "reject") for w, v in params["short"].items()}
        return {
            "format": FORMAT_VERSION,
            "composite": self.op,
            "params": params,
            "factors": [f.to_dict() if isinstance(f, VirtualComposite) else machine_to_dict(f)
                        for f in self.factors],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VirtualComposite":
        params = dict(doc.get("params", {}))
        if "short" in params:
            params["short"] = {w: v == "accept" for w, v in params["short"].items()}
        factors = tuple(cls.from_dict(f) if "composite" in f else machine_from_dict(f)
                        for f in doc["factors"])
        return cls(doc["composite"], factors, params)


def _one(exact: bool):
    return Fraction(1) if exact else 1.0


def evaluate_virtual(node, w: str) -> EvaluationOutcome:
    """Outcome of a machine or composite on ``w`` (probability algebra for composites)."""
    if isinstance(node, Machine):
        return evaluate(node, w)
    op = node.op
    if op == "complement":
        o = evaluate_virtual(node.factors[0], w)
        return EvaluationOutcome(o.p_r, o.p_a, o.p_nh, o.p_cont)
    if op == "prefix_dispatch":
        if len(w) < 2:
            one = Fraction(1)
            acc = node.params["short"][w]
            return EvaluationOutcome(one if acc else 0 * one, 0 * one if acc else one, 0 * one, 0 * one)
        target = node.factors[node.params["routing"][w[0]]]
        return evaluate_virtual(target, w[1:])
    if op == "tensor_power":
        o = evaluate_virtual(node.factors[0], w)
        k = int(node.params["k"])
        one = _one(o.exact)
        p_a, p_r = o.p_a ** k, o.p_r ** k
        p_cont = one - (one - o.p_cont) ** k
        return EvaluationOutcome(p_a, p_r, one - p_a - p_r - p_cont, p_cont)
    o1 = evaluate_virtual(node.factors[0], w)
    o2 = evaluate_virtual(node.factors[1], w)
    one = _one(o1.exact and o2.exact)
    pp = (o1.p_a + o1.p_r) * (o2.p_a + o2.p_r)
    if op == "union":
        p_r = o1.p_r * o2.p_r
        p_a = pp - p_r
    else:
        p_a = o1.p_a * o2.p_a
        p_r = pp - p_a
    p_cont = one - (one - o1.p_cont) * (one - o2.p_cont)
    return EvaluationOutcome(p_a, p_r, one - p_a - p_r - p_cont, p_cont)


# -- materialized tensor products ---------------------------------------------

def _union_role(roles):
    if all(r in (Role.POST_ACCEPT, Role.POST_REJECT) for r in roles):
        return Role.POST_REJECT if all(r is Role.POST_REJECT for r in roles) else Role.POST_ACCEPT
    return Role.NONPOST_HALT


def _intersection_role(roles):
    if all(r in (Role.POST_ACCEPT, Role.POST_REJECT) for r in roles):
        return Role.POST_ACCEPT if all(r is Role.POST_ACCEPT for r in roles) else Role.POST_REJECT
    return Role.NONPOST_HALT


def _power_role(roles):
    if all(r is Role.POST_ACCEPT for r in roles):
        return Role.POST_ACCEPT
    if all(r is Role.POST_REJECT for r in roles):
        return Role.POST_REJECT
    return Role.NONPOST_HALT


def tensor_machines(factors, role_fn, cap: int = DEFAULT_STATE_CAP) -> Machine:
    """Materialize the tensor product of postselection machines.

    A product state is continuing while any component is continuing; once
    every component has halted, ``role_fn`` assigns its role.
    """
    kinds = {f.kind for f in factors}
    if len(kinds) != 1 or next(iter(kinds)) not in (Kind.PFAP, Kind.QFAP):
        raise TransformError("tensor factors must all be pfap or all qfap")
    if len({f.alphabet for f in factors}) != 1:
        raise TransformError("factor alphabets differ")
    size = math.prod(f.n for f in factors)
    if size > cap:
        raise MaterializationRefused(
            f"product has {size} states (cap {cap}); use the virtual composite instead")
    absorbed = [absorbing(f) for f in factors]
    states = []
    for combo in itertools.product(*(f.states for f in factors)):
        name = "(" + ",".join(n for n, _ in combo) + ")"
        roles = [r for _, r in combo]
        role = Role.CONTINUING if Role.CONTINUING in roles else role_fn(roles)
        states.append((name, role))
    initial = "(" + ",".join(f.initial for f in factors) + ")"
    kind = factors[0].kind
    trans = {}
    for sym in factors[0].extended_alphabet:
        if kind is Kind.PFAP:
            mat = absorbed[0].transitions[sym]
            for f in absorbed[1:]:
                mat = tensor_product(mat, f.transitions[sym])
            trans[sym] = mat
        else:
            ops = [op.matrix for op in absorbed[0].transitions[sym].ops]
            for f in absorbed[1:]:
                ops = [tensor_product(a, op.matrix) for a in ops for op in f.transitions[sym].ops]
            trans[sym] = Superoperator(tuple(KrausOp(e) for e in ops if np.any(e)))
    return Machine(kind=kind, alphabet=factors[0].alphabet, states=tuple(states),
                   initial=initial, transitions=trans)


def union(m1, m2, materialize: bool = True, cap: int = DEFAULT_STATE_CAP):
    if materialize and isinstance(m1, Machine) and isinstance(m2, Machine):
        return tensor_machines([m1, m2], _union_role, cap)
    return VirtualComposite("union", (m1, m2))


def intersect(m1, m2, materialize: bool = True, cap: int = DEFAULT_STATE_CAP):
    if materialize and isinstance(m1, Machine) and isinstance(m2, Machine):
        return tensor_machines([m1, m2], _intersection_role, cap)
    return VirtualComposite("intersection", (m1, m2))


def tensor_power(m: Machine, k: int, cap: int = DEFAULT_STATE_CAP) -> Machine:
    return tensor_machines([m] * k, _power_role, cap)


# -- amplification -----------------------------------------------------------

@dataclass(frozen=True)
class AmplificationPlan:
    eps_in: Fraction
    k: int
    eps_out_bound: Fraction

    def __post_init__(self):
        r = self.eps_in / (1 - self.eps_in)
        if r ** self.k > self.eps_out_bound / (1 - self.eps_out_bound):
            raise ValueError("k too small for the promised error bound")


def amplification_k(eps) -> int:
    """Copies needed to square the error bound: ``1 + ceil(log(1/e + 1) / log(1/e - 1))``.

    The float formula is confirmed against the exact inequality
    ``(e/(1-e))**k <= e**2/(1-e**2)`` and corrected if rounding moved it.
    """
    eps = Fraction(eps)
    if not (0 < eps < Fraction(1, 2)):
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    k = 1 + math.ceil(math.log(1 / eps + 1) / math.log(1 / eps - 1))
    r = eps / (1 - eps)
    target = eps ** 2 / (1 - eps ** 2)
    while r ** k > target:
        k += 1
    while k > 1 and r ** (k - 1) <= target:
        k -= 1
    return k


def amplify(m, eps_in, materialize: bool = False, cap: int = DEFAULT_STATE_CAP):
    """Tensor power squaring the error bound; returns ``(plan, machine_or_composite)``."""
    eps_in = Fraction(eps_in)
    k = amplification_k(eps_in)
    plan = AmplificationPlan(eps_in, k, eps_in ** 2)
    if materialize:
        return plan, tensor_power(m, k, cap)
    return plan, VirtualComposite("tensor_power", (m,), {"k": k})


# -- Riga -> standard ----------------------------------------------------------

def support_nfa(m: Machine) -> Machine:
    """Drop probabilities: edge iff positive probability; post states accept."""
    if m.kind is not Kind.RIGA_PFAP and m.kind is not Kind.PFAP:
        raise TransformError("support_nfa needs a classical postselection machine")
    a = absorbing(m)
    trans = {}
    for sym, mat in a.transitions.items():
        out = _zeros(m.n)
        for (i, j), v in np.ndenumerate(mat):
            if v != 0:
                out[i, j] = Fraction(1)
        trans[sym] = out
    states = tuple((n, Role.ACCEPT if r in (Role.POST_ACCEPT, Role.POST_REJECT) else Role.CONTINUING)
                   for n, r in m.states)
    return Machine(kind=Kind.NFA, alphabet=m.alphabet, states=states,
                   initial=m.initial, transitions=trans)


def _subset_construction(nfa: Machine):
    """Phase-aware subset construction over ``END_L w END_R``.

    DFA states are ``(phase, subset)`` with phase 0 before ``END_L``, 1 inside
    the input, 2 after ``END_R``; out-of-order markers self-loop.  Only
    reachable states are built, named ``d0, d1, ...`` in discovery order.
    Returns ``(dfa, done)`` where ``done`` flags the phase-2 states.
    """
    ext = nfa.extended_alphabet
    start = (0, frozenset({nfa.index[nfa.initial]}))
    order = [start]
    seen = {start: 0}
    edges = {}
    i = 0
    while i < len(order):
        phase, subset = order[i]
        for sym in ext:
            legal = (phase == 0 and sym == END_L) or (phase == 1 and sym != END_L)
            if legal:
                mat = nfa.transitions[sym]
                image = frozenset(r for c in subset for r in range(nfa.n) if mat[r, c] != 0)
                tgt = (2 if sym == END_R else 1, image)
            else:
                tgt = (phase, subset)
            if tgt not in seen:
                seen[tgt] = len(order)
                order.append(tgt)
            edges[(i, sym)] = seen[tgt]
        i += 1
    n = len(order)
    accepting = {q for q in range(nfa.n) if nfa.roles[q] is Role.ACCEPT}
    states = tuple((f"d{k}", Role.ACCEPT if ph == 2 and s & accepting else Role.CONTINUING)
                   for k, (ph, s) in enumerate(order))
    trans = {}
    for sym in ext:
        mat = _zeros(n)
        for k in range(n):
            mat[edges[(k, sym)], k] = Fraction(1)
        trans[sym] = mat
    dfa = Machine(kind=Kind.DFA, alphabet=nfa.alphabet, states=states, initial="d0",
                  transitions=trans)
    return dfa, [ph == 2 for ph, _ in order]


def determinize(nfa: Machine) -> Machine:
    if nfa.kind not in (Kind.NFA, Kind.DFA):
        raise TransformError("determinize needs an nfa")
    return _subset_construction(nfa)[0]


def complement_dfa(dfa: Machine, done=None) -> Machine:
    """Flip acceptance of the states where a run can end (all states if unknown)."""
    if done is None:
        done = [True] * dfa.n
    states = tuple(
        (n, (Role.CONTINUING if r is Role.ACCEPT else Role.ACCEPT) if d else r)
        for (n, r), d in zip(dfa.states, done))
    return dfa.replace(states=states)


def riga_to_standard(m: Machine) -> Machine:
    """Standard PFAP deciding exactly like a Riga PFAP, zero-mass strings included.

    The support NFA of ``m`` accepts the strings with nonzero postselection
    mass; its determinized complement ``D`` recognizes the zero-mass set L'.
    The product ``m ⊗ D`` decides L' strings from ``chi`` and the rest by
    ordinary postselection.
    """
    if m.kind is not Kind.RIGA_PFAP:
        raise TransformError("riga_to_standard needs a riga_pfap")
    dfa, done = _subset_construction(support_nfa(m))
    dfa = complement_dfa(dfa, done)
    a = absorbing(m)
    post = (Role.POST_ACCEPT, Role.POST_REJECT)
    # roles apply only once D has read END_R
    roles = []
    names = []
    for (qn, qr) in m.states:
        for (dn, dr), fin in zip(dfa.states, done):
            names.append(f"({qn},{dn})")
            if not fin:
                roles.append(Role.CONTINUING)
                continue
            in_ad = dr is Role.ACCEPT
            if in_ad:
                if qr in post:
                    role = Role.NONPOST_HALT  # carries no mass by construction
                else:
                    role = Role.POST_ACCEPT if m.chi == "A" else Role.POST_REJECT
            else:
                if qr is Role.POST_ACCEPT:
                    role = Role.POST_ACCEPT
                elif qr is Role.POST_REJECT:
                    role = Role.POST_REJECT
                else:
                    role = Role.NONPOST_HALT
            roles.append(role)
    mats = {sym: tensor_product(a.transitions[sym], dfa.transitions[sym])
            for sym in m.extended_alphabet}
    init = m.index[m.initial] * dfa.n + dfa.index[dfa.initial]
    # keep only states reachable from the initial state
    keep = {init}
    frontier = [init]
    while frontier:
        j = frontier.pop()
        for mat in mats.values():
            for i in range(mat.shape[0]):
                if mat[i, j] != 0 and i not in keep:
                    keep.add(i)
                    frontier.append(i)
    keep = sorted(keep)
    trans = {sym: mat[np.ix_(keep, keep)] for sym, mat in mats.items()}
    states = tuple((names[i], roles[i]) for i in keep)
    return Machine(kind=Kind.PFAP, alphabet=m.alphabet, states=states,
                   initial=names[init], transitions=trans)


# -- cutpoint-zero constructions -----------------------------------------------

def _stochastic_columns(m: Machine, sym: str, j: int) -> dict:
    """Uniform distribution over the automaton successors of state ``j``."""
    mat = m.transitions[sym]
    succ = [i for i in range(m.n) if mat[i, j] != 0]
    if not succ:
        return {}
    p = Fraction(1, len(succ))
    return {i: p for i in succ}


class _Builder:
    """Accumulates named states and sparse stochastic columns."""

    def __init__(self, alphabet):
        self.alphabet = tuple(alphabet)
        self.states = []
        self.index = {}
        self.cols = {}  # (sym, state) -> {target: prob}

    def add(self, name: str, role: Role) -> str:
        self.index[name] = len(self.states)
        self.states.append((name, role))
        return name

    def set(self, sym, src, dist):
        self.cols[(sym, src)] = dict(dist)

    def build(self, kind: Kind, initial: str, chi=None) -> Machine:
        n = len(self.states)
        trans = {}
        for sym in (END_L, *self.alphabet, END_R):
            mat = _zeros(n)
            for j, (name, _) in enumerate(self.states):
                dist = self.cols.get((sym, name), {name: Fraction(1)})
                for tgt, p in dist.items():
                    mat[self.index[tgt], j] += p
            trans[sym] = mat
        return Machine(kind=kind, alphabet=self.alphabet, states=tuple(self.states),
                       initial=initial, transitions=trans, chi=chi)


def _embed_automaton(b: _Builder, m: Machine, prefix: str, at_end: dict, weight=Fraction(1)):
    """Copy an automaton as continuing states of ``b``.

    Returns the distribution reached from the start after ``END_L``.  On
    ``END_R`` mass landing in accept states goes to ``at_end['accept']``,
    the rest to ``at_end['other']``; dead ends go to ``at_end['dead']``.
    """
    for name in m.names:
        b.add(prefix + name, Role.CONTINUING)
    for j, name in enumerate(m.names):
        for sym in m.alphabet:
            dist = _stochastic_columns(m, sym, j)
            b.set(sym, prefix + name,
                  {prefix + m.names[i]: p for i, p in dist.items()} or {at_end["dead"]: Fraction(1)})
        dist = _stochastic_columns(m, END_R, j)
        out = {}
        for i, p in dist.items():
            tgt = at_end["accept"] if m.roles[i] is Role.ACCEPT else at_end["other"]
            out[tgt] = out.get(tgt, 0) + p
        b.set(END_R, prefix + name, out or {at_end["dead"]: Fraction(1)})
    first = _stochastic_columns(m, END_L, m.index[m.initial])
    if not first:
        return {at_end["dead"]: weight}
    return {prefix + m.names[i]: weight * p for i, p in first.items()}


def _check_cutpoint_input(*ms):
    for m in ms:
        if not m.kind.automaton:
            raise TransformError(f"cutpoint-zero input must be a dfa or nfa, got {m.kind.value}")
    if len({m.alphabet for m in ms}) != 1 or len({m.kind for m in ms}) != 1:
        raise TransformError("inputs must share kind and alphabet")


def errorfree_from_cutpoint_pair(m1: Machine, m2: Machine) -> Machine:
    """Zero-error PFAP from cutpoint-0 machines for L (``m1``) and its complement (``m2``).

    Both are run in parallel branches of weight 1/2; an accept of ``m1``
    post-accepts, an accept of ``m2`` post-rejects, anything else halts
    outside the postselection set.
    """
    _check_cutpoint_input(m1, m2)
    b = _Builder(m1.alphabet)
    b.add("start", Role.CONTINUING)
    b.add("accept", Role.POST_ACCEPT)
    b.add("reject", Role.POST_REJECT)
    b.add("discard", Role.NONPOST_HALT)
    half = Fraction(1, 2)
    d1 = _embed_automaton(b, m1, "L:", {"accept": "accept", "other": "discard", "dead": "discard"}, half)
    d2 = _embed_automaton(b, m2, "C:", {"accept": "reject", "other": "discard", "dead": "discard"}, half)
    start = dict(d1)
    for k, v in d2.items():
        start[k] = start.get(k, 0) + v
    b.set(END_L, "start", start)
    return b.build(Kind.PFAP, "start")


def riga_errorfree_from_cutpoint0(m: Machine, side: str = "L") -> Machine:
    """Zero-error Riga PFAP from one cutpoint-0 machine.

    ``side="L"``: accepts of ``m`` post-accept, chi = R.  ``side="coL"``:
    ``m`` recognizes the complement; its accepts post-reject, chi = A.
    """
    _check_cutpoint_input(m)
    if side not in ("L", "coL"):
        raise TransformError("side must be 'L' or 'coL'")
    b = _Builder(m.alphabet)
    b.add("start", Role.CONTINUING)
    hit = b.add("hit", Role.POST_ACCEPT if side == "L" else Role.POST_REJECT)
    b.add("discard", Role.NONPOST_HALT)
    d = _embed_automaton(b, m, "M:", {"accept": hit, "other": "discard", "dead": "discard"})
    b.set(END_L, "start", d)
    return b.build(Kind.RIGA_PFAP, "start", chi="R" if side == "L" else "A")


# -- postselection -> standard -------------------------------------------------

def to_unbounded_standard(m: Machine) -> Machine:
    """Standard machine accepting with probability ``p_a + p_nh/2``.

    Mass ending in nonpostselection halting states is split evenly between
    a new accept and a new reject state at the end of the input.
    """
    if m.kind not in (Kind.PFAP, Kind.QFAP):
        raise TransformError(f"to_unbounded_standard needs pfap or qfap, got {m.kind.value}")
    role_map = {Role.POST_ACCEPT: Role.ACCEPT, Role.POST_REJECT: Role.REJECT,
                Role.NONPOST_HALT: Role.CONTINUING, Role.CONTINUING: Role.CONTINUING}
    a = absorbing(m)
    nh = [i for i, r in enumerate(m.roles) if r is Role.NONPOST_HALT]
    n = m.n
    states = tuple((nm, role_map[r]) for nm, r in m.states) + (
        ("split_accept", Role.ACCEPT), ("split_reject", Role.REJECT))
    trans = {}
    if m.kind is Kind.PFAP:
        half = Fraction(1, 2)
        for sym in m.extended_alphabet:
            mat = _zeros(n + 2)
            mat[:n, :n] = a.transitions[sym]
            mat[n, n] = mat[n + 1, n + 1] = Fraction(1)
            if sym == END_R:
                for h in nh:
                    for j in range(n):
                        p = mat[h, j]
                        if p:
                            mat[h, j] = Fraction(0)
                            mat[n, j] += p * half
                            mat[n + 1, j] += p * half
            trans[sym] = mat
        kind = Kind.PFA
    else:
        def grow(e, with_extra):
            out = np.zeros((n + 2, n + 2), dtype=np.complex128)
            out[:n, :n] = e
            if with_extra:
                out[n, n] = out[n + 1, n + 1] = 1.0
            return out

        keep = np.diag([0.0 if i in nh else 1.0 for i in range(n)] + [1.0, 1.0]).astype(np.complex128)
        post = [keep]
        for h in nh:
            for tgt in (n, n + 1):
                k = np.zeros((n + 2, n + 2), dtype=np.complex128)
                k[tgt, h] = 1 / math.sqrt(2)
                post.append(k)
        for sym in m.extended_alphabet:
            ops = [grow(op.matrix, i == 0) for i, op in enumerate(a.transitions[sym].ops)]
            if sym == END_R:
                ops = [k @ e for k in post for e in ops]
                ops = [e for e in ops if np.any(e)]
            trans[sym] = Superoperator(tuple(KrausOp(e) for e in ops))
        kind = Kind.QFA
    return Machine(kind=kind, alphabet=m.alphabet, states=states, initial=m.initial,
                   transitions=trans)


# -- prefix dispatch -----------------------------------------------------------

def prefix_dispatch(m1, m2, routing: dict, short: dict, materialize: bool = True):
    """Route on the first symbol to ``m1`` or ``m2``, which then read the rest.

    ``routing`` maps each alphabet symbol to 1 or 2 (or to ``m1``/``m2``
    themselves); ``short`` gives the memorized decision (True = accept) for
    the empty string and every one-symbol string.
    """
    machines = (m1, m2)
    alphabet = tuple(m1.alphabet)
    if tuple(m2.alphabet) != alphabet:
        raise TransformError("factor alphabets differ")
    route = {}
    for s in alphabet:
        if s not in routing:
            raise TransformError(f"routing has no entry for symbol {s!r}")
        t = routing[s]
        route[s] = t - 1 if isinstance(t, int) else (0 if t is m1 else 1)
    needed = ["", *alphabet]
    missing = [w for w in needed if w not in short]
    if missing:
        raise TransformError(f"short-input decisions missing for {missing}")
    short = {w: bool(short[w]) for w in needed}
    if not materialize or not all(isinstance(m, Machine) for m in machines):
        return VirtualComposite("prefix_dispatch", machines, {"routing": route, "short": short})
    if any(m.kind is not Kind.PFAP for m in machines):
        raise TransformError("materialized prefix_dispatch supports pfap factors; use materialize=False")
    b = _Builder(alphabet)
    b.add("start", Role.CONTINUING)
    b.add("seen_left", Role.CONTINUING)
    for s in alphabet:
        b.add(f"first_{s}", Role.CONTINUING)
    b.add("memo_accept", Role.POST_ACCEPT)
    b.add("memo_reject", Role.POST_REJECT)
    memo = {True: "memo_accept", False: "memo_reject"}
    absorbed = [absorbing(m) for m in machines]
    for t, m in enumerate(absorbed):
        pre = f"m{t + 1}:"
        for nm, role in m.states:
            b.add(pre + nm, role)
        for j, nm in enumerate(m.names):
            for sym in (*alphabet, END_R):
                col = m.transitions[sym][:, j]
                b.set(sym, pre + nm, {pre + m.names[i]: p for i, p in enumerate(col) if p})
    b.set(END_L, "start", {"seen_left": Fraction(1)})
    b.set(END_R, "seen_left", {memo[short[""]]: Fraction(1)})
    for s in alphabet:
        b.set(s, "seen_left", {f"first_{s}": Fraction(1)})
        b.set(END_R, f"first_{s}", {memo[short[s]]: Fraction(1)})
        t = route[s]
        m = absorbed[t]
        v0 = m.transitions[END_L][:, m.index[m.initial]]
        for tau in alphabet:
            v = m.transitions[tau].dot(v0)
            b.set(tau, f"first_{s}", {f"m{t + 1}:" + m.names[i]: p for i, p in enumerate(v) if p})
    return b.build(Kind.PFAP, "start")


# -- Q x Delta partition -------------------------------------------------------

def partition_states(m: Machine) -> Machine:
    """QFAP on states ``Q x Delta`` whose state type reveals the outcome.

    Operators labelled with the ``l``-th outcome send block ``j`` to block
    ``j + l - 1 (mod |Delta|)``, so from the continuing block they land in
    the correctly categorized block and every block column keeps exactly
    one copy of each operator.
    """
    if m.kind is not Kind.MEASURED_QFA:
        raise TransformError("partition_states needs a measured_qfa")
    outcomes = list(m.outcomes)
    d = len(outcomes)
    n = m.n
    pos = {lab: i for i, lab in enumerate(outcomes)}
    states = []
    for j, tau in enumerate(outcomes):
        role = Role.CONTINUING if j == 0 else outcome_role(tau)
        for nm in m.names:
            states.append((f"{nm}/{tau}", role))
    trans = {}
    for sym in m.extended_alphabet:
        ops = []
        for op in m.transitions[sym].ops:
            if op.outcome is None:
                raise TransformError(f"symbol {sym!r}: unlabeled Kraus operator")
            l = pos[op.outcome]
            big = np.zeros((n * d, n * d), dtype=np.complex128)
            for j in range(d):
                tgt = (j + l) % d
                big[tgt * n:(tgt + 1) * n, j * n:(j + 1) * n] = op.matrix
            ops.append(KrausOp(big))
        trans[sym] = Superoperator(tuple(ops))
    return Machine(kind=Kind.QFAP, alphabet=m.alphabet, states=tuple(states),
                   initial=f"{m.initial}/{outcomes[0]}", transitions=trans)


# -- classical -> quantum -----------------------------------------------------

_QUANTUM_OF = {Kind.PFAP: Kind.QFAP, Kind.RESTART_PFA: Kind.RESTART_QFA,
               Kind.RIGA_PFAP: Kind.RIGA_QFAP, Kind.PFA: Kind.QFA}


def to_quantum(m: Machine) -> Machine:
    """Embed a probabilistic machine: one Kraus operator ``sqrt(p)|i><j|`` per branch."""
    if m.kind not in _QUANTUM_OF:
        raise TransformError(f"no quantum counterpart for {m.kind.value}")
    trans = {}
    for sym, mat in m.transitions.items():
        ops = []
        for (i, j), p in np.ndenumerate(mat):
            if p:
                e = np.zeros((m.n, m.n), dtype=np.complex128)
                e[i, j] = math.sqrt(p)
                ops.append(KrausOp(e))
        trans[sym] = Superoperator(tuple(ops))
    return m.replace(kind=_QUANTUM_OF[m.kind], transitions=trans)
