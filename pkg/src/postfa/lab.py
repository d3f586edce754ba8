"""Witness machines, language oracles and the enumeration classifier."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .machine import END_L, END_R, Kind, KrausOp, Machine, Role, Superoperator
from .numerics import DEFAULT_TOLERANCE, TolerancePolicy, psd_sqrt
from .semantics import (
    ZeroPostselectionMass,
    automaton_accepts,
    decide,
    evaluate_all,
    postselect,
    strings_up_to,
)
from .transforms import VirtualComposite, complement, evaluate_virtual, prefix_dispatch

F = Fraction

# L_pal register scaling and accept weight
LPAL_GAMMA = 7.0
LPAL_KAPPA = 1.0 / 3.0


# -- witnesses -----------------------------------------------------------------

def _pfap(states, initial, cols, alphabet=("a", "b"), kind=Kind.PFAP, chi=None) -> Machine:
    """Build a classical machine from sparse columns ``{sym: {src: {dst: p}}}``.

    Columns not listed are self-loops.
    """
    names = [n for n, _ in states]
    idx = {n: i for i, n in enumerate(names)}
    trans = {}
    for sym in (END_L, *alphabet, END_R):
        mat = np.full((len(names), len(names)), F(0), dtype=object)
        for j, src in enumerate(names):
            for dst, p in cols.get(sym, {}).get(src, {src: 1}).items():
                mat[idx[dst], j] += F(p)
        trans[sym] = mat
    return Machine(kind=kind, alphabet=tuple(alphabet), states=tuple(states),
                   initial=initial, transitions=trans, chi=chi)


def build_leq_pfap(offset: int = 0) -> Machine:
    """PFAP for ``{w : |w|_a - |w|_b = offset}`` (offset 0 is L_eq).

    Three branches after the left marker: an accepting branch that survives
    each symbol with probability 1/2, and two rejecting branches that survive
    one letter with probability 1/4 and the other with probability 1.  The
    ratio ``p_r/p_a`` is ``(4/9)(2^(offset-d) + 2^(d-offset))`` with
    ``d = |w|_a - |w|_b``: 8/9 on the language and at least 10/9 off it.
    """
    w_a = F(9)
    w_r1 = F(4) * F(2) ** offset
    w_r2 = F(4) / F(2) ** offset
    total = w_a + w_r1 + w_r2
    states = [("q0", Role.CONTINUING), ("A", Role.CONTINUING), ("R1", Role.CONTINUING),
              ("R2", Role.CONTINUING), ("ACC", Role.POST_ACCEPT), ("REJ", Role.POST_REJECT),
              ("DEAD", Role.NONPOST_HALT)]
    half, quarter = F(1, 2), F(1, 4)
    cols = {
        END_L: {"q0": {"A": w_a / total, "R1": w_r1 / total, "R2": w_r2 / total}},
        "a": {"q0": {"DEAD": 1}, "A": {"A": half, "DEAD": half},
              "R1": {"R1": quarter, "DEAD": 1 - quarter}},
        "b": {"q0": {"DEAD": 1}, "A": {"A": half, "DEAD": half},
              "R2": {"R2": quarter, "DEAD": 1 - quarter}},
        END_R: {"q0": {"DEAD": 1}, "A": {"ACC": 1}, "R1": {"REJ": 1}, "R2": {"REJ": 1}},
    }
    return _pfap(states, "q0", cols)


def _block(n, rows, cols, sub):
    out = np.zeros((n, n), dtype=np.complex128)
    out[np.ix_(rows, cols)] = sub
    return out


def lpal_step_matrix(sym: str) -> np.ndarray:
    """Unscaled register update on (c, F, R, t): F' = 4F + s c, R' = R + s t, t' = 4t."""
    s = {"a": 1.0, "b": 2.0}[sym]
    return np.array([[1, 0, 0, 0],
                     [s, 4, 0, 0],
                     [0, 0, 1, s],
                     [0, 0, 0, 4]], dtype=np.complex128)


def build_lpal_qfap() -> Machine:
    """QFAP accepting every palindrome with certainty and others with at most 1/4.

    A four-dimensional register holds ``c``, the forward base-4 encoding
    ``F``, the reversed encoding ``R`` and ``t = 4^n`` (all times
    ``gamma^-n / sqrt 2``).  At the right marker the accept amplitude is
    proportional to ``sqrt(kappa) c`` and the reject amplitude to ``F - R``,
    so the postselected accept probability is ``kappa / (kappa + (F-R)^2)``
    in unscaled integers.  Lost norm is completed into four discard states.
    """
    reg = [0, 1, 2, 3]
    nh = [4, 5, 6, 7]
    acc, rej = 8, 9
    n = 10
    states = (("c", Role.CONTINUING), ("F", Role.CONTINUING), ("R", Role.CONTINUING),
              ("t", Role.CONTINUING), ("nh0", Role.NONPOST_HALT), ("nh1", Role.NONPOST_HALT),
              ("nh2", Role.NONPOST_HALT), ("nh3", Role.NONPOST_HALT),
              ("acc", Role.POST_ACCEPT), ("rej", Role.POST_REJECT))
    halting = nh + [acc, rej]
    eye_h = _block(n, halting, halting, np.eye(len(halting)))

    def completed(k_reg: np.ndarray, rows) -> Superoperator:
        """``k_reg`` into ``rows``, its slack into nh, identity on halting states."""
        slack = psd_sqrt(np.eye(4) - k_reg.conj().T @ k_reg)
        return Superoperator((KrausOp(_block(n, rows, reg, k_reg)),
                              KrausOp(_block(n, nh, reg, slack)), KrausOp(eye_h)))

    trans = {}
    r = 1 / math.sqrt(2)
    u = np.eye(n, dtype=np.complex128)
    u[np.ix_([0, 3], [0, 3])] = [[r, -r], [r, r]]
    trans[END_L] = Superoperator((KrausOp(u),))
    for sym in ("a", "b"):
        trans[sym] = completed(lpal_step_matrix(sym) / LPAL_GAMMA, reg)
    k_end = np.zeros((2, 4), dtype=np.complex128)
    k_end[0, 0] = math.sqrt(LPAL_KAPPA) * r
    k_end[1, 1], k_end[1, 2] = r, -r
    trans[END_R] = completed(k_end, [acc, rej])
    return Machine(kind=Kind.QFAP, alphabet=("a", "b"), states=states, initial="c",
                   transitions=trans)


def build_rotation_qfap(theta: float, alphabet=("a",)) -> Machine:
    """Rotate (x, y) by theta per symbol; the right marker measures x -> accept, y -> reject."""
    c, s = math.cos(theta), math.sin(theta)
    rot = np.eye(4, dtype=np.complex128)
    rot[:2, :2] = [[c, -s], [s, c]]
    swap = np.zeros((4, 4), dtype=np.complex128)
    swap[2, 0] = swap[3, 1] = swap[0, 2] = swap[1, 3] = 1.0
    trans = {END_L: Superoperator((KrausOp(np.eye(4, dtype=np.complex128)),)),
             END_R: Superoperator((KrausOp(swap),))}
    for sym in alphabet:
        trans[sym] = Superoperator((KrausOp(rot),))
    states = (("x", Role.CONTINUING), ("y", Role.CONTINUING),
              ("acc", Role.POST_ACCEPT), ("rej", Role.POST_REJECT))
    return Machine(kind=Kind.QFAP, alphabet=tuple(alphabet), states=states, initial="x",
                   transitions=trans)


def build_leqbar_machine(materialize: bool = True):
    """First symbol 'a' runs the L_eq machine on the rest, 'b' runs its complement."""
    leq = build_leq_pfap()
    short = {w: oracle_leqbar()(w) for w in ("", "a", "b")}
    return prefix_dispatch(leq, complement(leq), {"a": 1, "b": 2}, short,
                           materialize=materialize)


def build_riga_demo(chi: str = "A") -> Machine:
    """Riga PFAP whose postselection mass vanishes exactly on strings containing 'b'."""
    states = [("s", Role.CONTINUING), ("t", Role.CONTINUING), ("PA", Role.POST_ACCEPT),
              ("PR", Role.POST_REJECT), ("NH", Role.NONPOST_HALT)]
    cols = {
        "a": {"s": {"s": F(1, 2), "t": F(1, 2)}},
        "b": {"s": {"NH": 1}, "t": {"NH": 1}},
        END_R: {"s": {"PA": 1}, "t": {"PR": 1}},
    }
    return _pfap(states, "s", cols, kind=Kind.RIGA_PFAP, chi=chi)


def build_measured_demo(theta: float = math.pi / 5) -> Machine:
    """measured_qfa on a qubit: each symbol rotates, then reads accept / halt / go on.

    'a' rotates by theta, 'b' by -2 theta; the right marker reads |u> as
    reject and |v> as accept.
    """
    p0 = np.diag([1.0, 0.0]).astype(np.complex128)
    p1 = np.diag([0.0, 1.0]).astype(np.complex128)
    half = math.sqrt(0.5)
    trans = {END_L: Superoperator((KrausOp(np.eye(2, dtype=np.complex128), "go"),)),
             END_R: Superoperator((KrausOp(p0, "rej"), KrausOp(p1, "acc")))}
    for sym, angle in (("a", theta), ("b", -2 * theta)):
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]], dtype=np.complex128)
        trans[sym] = Superoperator((KrausOp(p0 @ rot, "go"), KrausOp(half * p1 @ rot, "acc"),
                                    KrausOp(half * p1 @ rot, "halt")))
    return Machine(kind=Kind.MEASURED_QFA, alphabet=("a", "b"), states=(("u", Role.CONTINUING),
                   ("v", Role.CONTINUING)), initial="u", transitions=trans,
                   outcomes=("go", "acc", "rej", "halt"))


WITNESSES = {
    "leq.pfap.json": build_leq_pfap,
    "lpal.qfap.json": build_lpal_qfap,
    "rotation.qfap.json": lambda: build_rotation_qfap(math.pi / 4),
    "leqbar.pfap.json": build_leqbar_machine,
    "riga_demo.pfap.json": build_riga_demo,
}


# -- oracles -------------------------------------------------------------------

@dataclass(frozen=True)
class LanguageOracle:
    name: str
    membership: Callable[[str], bool]
    alphabet: tuple = ("a", "b")

    def __call__(self, w: str) -> bool:
        return bool(self.membership(w))


def oracle_leq(offset: int = 0) -> LanguageOracle:
    name = "leq" if offset == 0 else f"leq{offset:+d}"
    return LanguageOracle(name, lambda w: w.count("a") - w.count("b") == offset)


def oracle_lpal() -> LanguageOracle:
    return LanguageOracle("lpal", lambda w: w == w[::-1])


def oracle_leqbar() -> LanguageOracle:
    def member(w):
        if not w:
            return False
        balanced = w.count("a", 1) == w.count("b", 1)
        return balanced if w[0] == "a" else not balanced
    return LanguageOracle("leqbar", member)


def oracle_from_dfa(d: Machine, name: str = "dfa") -> LanguageOracle:
    if d.kind is not Kind.DFA:
        raise TypeError(f"oracle_from_dfa needs a dfa, got {d.kind.value}")
    return LanguageOracle(name, lambda w: automaton_accepts(d, w), tuple(d.alphabet))


ORACLES = {"leq": oracle_leq, "lpal": oracle_lpal, "leqbar": oracle_leqbar}


# -- recognition modes ---------------------------------------------------------

class RecognitionMode:
    label = ""
    # acceptance probability members must reach and nonmembers must not exceed
    member_target = 1
    nonmember_target = 0

    def shortfall(self, p, member: bool):
        """How far ``p`` misses the target for its side (0 for strict misses)."""
        return max(self.member_target - p if member else p - self.nonmember_target, 0)

    def member_ok(self, p, tol) -> bool:
        raise NotImplementedError

    def nonmember_ok(self, p, tol) -> bool:
        raise NotImplementedError

    def __repr__(self):
        return f"<mode {self.label}>"


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True, repr=False)
class StrictCutpoint(RecognitionMode):
    lam: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lam", _frac(self.lam))
        if not 0 <= self.lam <= 1:
            raise ValueError("cutpoint must lie in [0, 1]")

    @property
    def label(self):
        return f"cutpoint:{self.lam}"

    @property
    def member_target(self):
        return self.lam

    @property
    def nonmember_target(self):
        return self.lam

    def member_ok(self, p, tol):
        return p > self.lam - tol

    def nonmember_ok(self, p, tol):
        return p <= self.lam + tol


@dataclass(frozen=True, repr=False)
class NonstrictCutpoint(StrictCutpoint):
    @property
    def label(self):
        return f"ncutpoint:{self.lam}"

    def member_ok(self, p, tol):
        return p >= self.lam - tol

    def nonmember_ok(self, p, tol):
        return p < self.lam + tol


@dataclass(frozen=True, repr=False)
class BoundedError(RecognitionMode):
    eps: Fraction

    def __post_init__(self):
        object.__setattr__(self, "eps", _frac(self.eps))
        if not 0 <= self.eps < F(1, 2):
            raise ValueError("error bound must lie in [0, 1/2)")

    @property
    def label(self):
        return f"bounded:{self.eps}"

    @property
    def member_target(self):
        return 1 - self.eps

    @property
    def nonmember_target(self):
        return self.eps

    def member_ok(self, p, tol):
        return p >= 1 - self.eps - tol

    def nonmember_ok(self, p, tol):
        return p <= self.eps + tol


@dataclass(frozen=True, repr=False)
class OneSided(BoundedError):
    """Bounded error where one side is decided without error.

    ``side="nonmember"``: nonmembers are accepted with probability 0.
    ``side="member"``: members are accepted with probability 1.
    ``None`` accepts either.
    """

    side: Optional[str] = None

    def __post_init__(self):
        super().__post_init__()
        if self.side not in (None, "member", "nonmember"):
            raise ValueError("side must be 'member', 'nonmember' or None")

    @property
    def label(self):
        return f"onesided:{self.eps}"

    def sided(self, side):
        return OneSided(self.eps, side)

    @property
    def member_target(self):
        return 1 if self.side == "member" else 1 - self.eps

    @property
    def nonmember_target(self):
        return 0 if self.side == "nonmember" else self.eps

    def member_ok(self, p, tol):
        if self.side == "member":
            return p >= 1 - tol
        return p >= 1 - self.eps - tol

    def nonmember_ok(self, p, tol):
        if self.side == "nonmember":
            return p <= tol
        return p <= self.eps + tol


class ErrorFree(RecognitionMode):
    label = "exact"

    def member_ok(self, p, tol):
        return p >= 1 - tol

    def nonmember_ok(self, p, tol):
        return p <= tol


class Nondeterministic(RecognitionMode):
    label = "nondet"

    def member_ok(self, p, tol):
        return p > tol

    def nonmember_ok(self, p, tol):
        return p <= tol


def parse_mode(text: str) -> RecognitionMode:
    """Parse ``bounded:9/19``, ``cutpoint:1/2``, ``ncutpoint:1/2``, ``onesided:1/4``, ``exact``, ``nondet``."""
    from .numerics import parse_rational

    name, _, arg = text.strip().partition(":")
    simple = {"exact": ErrorFree, "nondet": Nondeterministic}
    withval = {"bounded": BoundedError, "cutpoint": StrictCutpoint,
               "ncutpoint": NonstrictCutpoint, "onesided": OneSided}
    if name in simple:
        if arg:
            raise ValueError(f"mode {name!r} takes no argument")
        return simple[name]()
    if name not in withval or not arg:
        raise ValueError(f"bad mode label {text!r}")
    return withval[name](parse_rational(arg))


# -- classifier ----------------------------------------------------------------

@dataclass(frozen=True)
class RecognitionVerdict:
    holds: bool
    max_len_checked: int
    worst_member: Optional[tuple]
    worst_nonmember: Optional[tuple]
    counterexample: Optional[str] = None

    def __post_init__(self):
        if self.holds == (self.counterexample is not None):
            raise ValueError("counterexample must be present exactly when the verdict fails")


def accept_probabilities(m, max_len: int):
    """Yield ``(w, P_accept)`` in length-lex order; ``None`` when postselection mass is zero."""
    if isinstance(m, VirtualComposite):
        for w in strings_up_to(m.alphabet, max_len):
            try:
                yield w, postselect(evaluate_virtual(m, w)).accept_prob
            except ZeroPostselectionMass:
                yield w, None
        return
    if m.kind.automaton:
        for w in strings_up_to(m.alphabet, max_len):
            yield w, F(int(automaton_accepts(m, w)))
        return
    for w, o in evaluate_all(m, max_len):
        try:
            yield w, decide(m, o).accept_prob
        except ZeroPostselectionMass:
            yield w, None


def _is_quantum(m) -> bool:
    return m.quantum if isinstance(m, VirtualComposite) else m.kind.quantum


def _scan(probs, oracle, mode, tol):
    """Worst cases and the most violating string (earliest on ties)."""
    worst_m = worst_n = None
    counter, gap = None, None
    for w, p in probs:
        member = oracle(w)
        if p is None:
            miss = math.inf
        else:
            if member:
                if worst_m is None or p < worst_m[1]:
                    worst_m = (w, p)
                ok = mode.member_ok(p, tol)
            else:
                if worst_n is None or p > worst_n[1]:
                    worst_n = (w, p)
                ok = mode.nonmember_ok(p, tol)
            if ok:
                continue
            miss = mode.shortfall(p, member)
        if gap is None or miss > gap:
            counter, gap = w, miss
    return worst_m, worst_n, counter


def classify(m, oracle: LanguageOracle, mode: RecognitionMode, max_len: int,
             tol: TolerancePolicy = DEFAULT_TOLERANCE) -> RecognitionVerdict:
    """Check ``mode`` on every string up to ``max_len`` against ``oracle``.

    Classical machines are compared exactly, quantum ones with
    ``tol.eps_compare`` slack.  The counterexample is the first failing
    string in length-lex order; zero postselection mass counts as failure.
    """
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    if tuple(oracle.alphabet) != tuple(m.alphabet):
        raise ValueError(f"alphabet mismatch: oracle {oracle.alphabet}, machine {m.alphabet}")
    slack = tol.eps_compare if _is_quantum(m) else 0
    probs = list(accept_probabilities(m, max_len))
    if isinstance(mode, OneSided) and mode.side is None:
        results = [_scan(probs, oracle, mode.sided(s), slack) for s in ("nonmember", "member")]
        passing = [r for r in results if r[2] is None]
        worst_m, worst_n, counter = passing[0] if passing else results[0]
    else:
        worst_m, worst_n, counter = _scan(probs, oracle, mode, slack)
    return RecognitionVerdict(counter is None, max_len, worst_m, worst_n, counter)
