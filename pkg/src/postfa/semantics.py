"""Running machines on input strings.

Evaluation always processes ``END_L``, the input, then ``END_R``.  Mass that
enters a halting state is frozen there: classical vectors stop evolving on
halting coordinates, and quantum states are split by the projective
halting/continuing measurement after every step.  When the halting states of
a machine already act as the identity this coincides with a single
measurement at the end of the input.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

import numpy as np

from .machine import END_L, END_R, ROLE_BIN, Kind, Machine, Role

Prob = Union[Fraction, float]

__all__ = [
    "EvaluationOutcome",
    "PostselectedDecision",
    "McReport",
    "ZeroPostselectionMass",
    "SymbolError",
    "evaluate",
    "evaluate_pfap",
    "evaluate_qfap",
    "evaluate_measured",
    "evaluate_all",
    "strings_up_to",
    "postselect",
    "riga_decide",
    "restart_closed_form",
    "decide",
    "simulate_restart",
    "check_error_ratio",
    "automaton_accepts",
    "outcome_role",
]


class ZeroPostselectionMass(ArithmeticError):
    """p_a + p_r = 0: postselection (or restart) has nothing to normalize."""


class SymbolError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationOutcome:
    p_a: Prob
    p_r: Prob
    p_nh: Prob
    p_cont: Prob = 0

    @property
    def exact(self) -> bool:
        return isinstance(self.p_a, Fraction)

    @property
    def post_mass(self) -> Prob:
        return self.p_a + self.p_r


@dataclass(frozen=True)
class PostselectedDecision:
    accept_prob: Prob
    reject_prob: Prob


@dataclass(frozen=True)
class McReport:
    rounds_run: int
    accept_freq: float
    mean_rounds_per_decision: float
    seed: int
    runs: int = 0
    undecided: int = 0


# -- compiled step functions ------------------------------------------------

def _check_word(m: Machine, w) -> None:
    for ch in w:
        if ch not in m.alphabet:
            raise SymbolError(f"symbol {ch!r} not in alphabet {list(m.alphabet)}")


class _Classical:
    """Sparse column form of a classical machine with absorbing halting states."""

    def __init__(self, m: Machine):
        self.m = m
        self.bins = [ROLE_BIN[r] for r in m.roles]
        self.cols = {}
        for sym in m.extended_alphabet:
            mat = m.transitions[sym]
            cols = []
            for j in range(m.n):
                cols.append(tuple((i, mat[i, j]) for i in range(m.n) if mat[i, j] != 0))
            self.cols[sym] = cols

    def start(self):
        return ({self.m.index[self.m.initial]: Fraction(1)},
                Fraction(0), Fraction(0), Fraction(0))

    def step(self, cfg, sym):
        vec, a, r, nh = cfg
        out = {}
        cols = self.cols[sym]
        for j, p in vec.items():
            for i, q in cols[j]:
                out[i] = out.get(i, 0) + p * q
        nxt = {}
        for i, p in out.items():
            b = self.bins[i]
            if b == "cont":
                nxt[i] = p
            elif b == "a":
                a += p
            elif b == "r":
                r += p
            else:
                nh += p
        return nxt, a, r, nh

    def outcome(self, cfg) -> EvaluationOutcome:
        vec, a, r, nh = cfg
        return EvaluationOutcome(a, r, nh, sum(vec.values(), Fraction(0)))


class _Quantum:
    """Density-matrix stepper with per-step halting/continuing measurement.

    The state is kept in factored form ``rho = L L^dag``.  Outcome
    probabilities are then sums of squared amplitudes, which avoids the
    cancellation that reading them off ``rho`` directly suffers when
    amplitudes of very different magnitude interfere.
    """

    def __init__(self, m: Machine):
        self.m = m
        self.measured = m.kind is Kind.MEASURED_QFA
        bins = [ROLE_BIN[r] for r in m.roles]
        self.cont = np.array([b == "cont" for b in bins])
        self.masks = {b: np.array([x == b for x in bins]) for b in ("a", "r", "nh")}
        self.ops = {}
        self.label_bins = {}
        for sym in m.extended_alphabet:
            sop = m.transitions[sym]
            self.ops[sym] = np.stack([op.matrix for op in sop.ops])
            if self.measured:
                self.label_bins[sym] = [_outcome_bin(m, op.outcome) for op in sop.ops]

    def start(self):
        n = self.m.n
        factor = np.zeros((n, 1), dtype=np.complex128)
        factor[self.m.index[self.m.initial], 0] = 1.0
        return factor, 0.0, 0.0, 0.0

    def _compact(self, factor):
        factor = factor[:, np.any(factor != 0, axis=0)]
        n = factor.shape[0]
        if factor.shape[1] > n:
            # rho = L L^dag = R^dag R for L^dag = Q R
            factor = np.linalg.qr(factor.conj().T, mode="r").conj().T
        return factor

    def step(self, cfg, sym):
        factor, a, r, nh = cfg
        images = self.ops[sym] @ factor  # (k, n, cols)
        weights = np.sum(np.abs(images) ** 2, axis=2)  # (k, n)
        if self.measured:
            acc = {"a": 0.0, "r": 0.0, "nh": 0.0}
            keep = []
            for img, w, b in zip(images, weights, self.label_bins[sym]):
                if b == "cont":
                    keep.append(img)
                else:
                    acc[b] += float(w.sum())
            n = factor.shape[0]
            new = np.concatenate(keep, axis=1) if keep else np.zeros((n, 0), dtype=np.complex128)
            return self._compact(new), a + acc["a"], r + acc["r"], nh + acc["nh"]
        rows = weights.sum(axis=0)
        a += float(rows[self.masks["a"]].sum())
        r += float(rows[self.masks["r"]].sum())
        nh += float(rows[self.masks["nh"]].sum())
        new = np.concatenate(list(images), axis=1)
        new[~self.cont, :] = 0
        return self._compact(new), a, r, nh

    def outcome(self, cfg) -> EvaluationOutcome:
        factor, a, r, nh = cfg
        return EvaluationOutcome(a, r, nh, float(np.sum(np.abs(factor) ** 2)))


def _outcome_bin(m: Machine, label) -> str:
    if label == m.outcomes[0]:
        return "cont"
    return ROLE_BIN[outcome_role(label)]


def outcome_role(label: str) -> Role:
    """Role of the states that a measured_qfa outcome label is sorted into."""
    if label in ("a", "pa", "acc", "accept", "post_accept"):
        return Role.POST_ACCEPT
    if label in ("r", "pr", "rej", "reject", "post_reject"):
        return Role.POST_REJECT
    return Role.NONPOST_HALT


_stepper_cache: dict = {}


def _stepper(m: Machine):
    key = id(m)
    hit = _stepper_cache.get(key)
    if hit is not None and hit[0] is m:
        return hit[1]
    if m.kind.automaton:
        raise TypeError(f"{m.kind.value} machines are run with automaton_accepts")
    st = _Quantum(m) if m.kind.quantum else _Classical(m)
    if len(_stepper_cache) > 256:
        _stepper_cache.clear()
    _stepper_cache[key] = (m, st)
    return st


def _run(m: Machine, w) -> EvaluationOutcome:
    _check_word(m, w)
    st = _stepper(m)
    cfg = st.step(st.start(), END_L)
    for ch in w:
        cfg = st.step(cfg, ch)
    return st.outcome(st.step(cfg, END_R))


def evaluate_pfap(m: Machine, w: str) -> EvaluationOutcome:
    """Exact pre-postselection outcome of a classical machine on ``w``."""
    if m.kind.quantum or m.kind.automaton:
        raise TypeError(f"evaluate_pfap needs a probabilistic machine, got {m.kind.value}")
    return _run(m, w)


def evaluate_qfap(m: Machine, w: str) -> EvaluationOutcome:
    if not m.kind.quantum or m.kind is Kind.MEASURED_QFA:
        raise TypeError(f"evaluate_qfap needs a quantum machine, got {m.kind.value}")
    return _run(m, w)


def evaluate_measured(m: Machine, w: str) -> EvaluationOutcome:
    """Outcome of a measured_qfa: the register is observed after every step."""
    if m.kind is not Kind.MEASURED_QFA:
        raise TypeError("evaluate_measured needs a measured_qfa")
    return _run(m, w)


def evaluate(m: Machine, w: str) -> EvaluationOutcome:
    return _run(m, w)


def strings_up_to(alphabet, max_len: int) -> Iterator[str]:
    """All strings of length <= max_len in length-lexicographic order."""
    for n in range(max_len + 1):
        for t in itertools.product(alphabet, repeat=n):
            yield "".join(t)


def evaluate_all(m: Machine, max_len: int) -> Iterator[tuple]:
    """Yield ``(w, outcome)`` for every |w| <= max_len, in length-lex order.

    Configurations are shared between strings with a common prefix.
    """
    st = _stepper(m)
    layer = [("", st.step(st.start(), END_L))]
    for n in range(max_len + 1):
        for w, cfg in layer:
            yield w, st.outcome(st.step(cfg, END_R))
        if n == max_len:
            break
        layer = [(w + s, st.step(cfg, s)) for w, cfg in layer for s in m.alphabet]


# -- decisions --------------------------------------------------------------

def _normalize(p_a, p_r) -> PostselectedDecision:
    total = p_a + p_r
    if total == 0:
        raise ZeroPostselectionMass("p_a + p_r = 0")
    if isinstance(total, Fraction):
        acc = p_a / total
        return PostselectedDecision(acc, 1 - acc)
    return PostselectedDecision(p_a / total, p_r / total)


def postselect(o: EvaluationOutcome) -> PostselectedDecision:
    """Normalize over the postselected (accept + reject) mass."""
    return _normalize(o.p_a, o.p_r)


def restart_closed_form(o: EvaluationOutcome) -> PostselectedDecision:
    """Overall decision of a restart machine from single-round probabilities.

    The geometric series over rounds sums to the same normalization used by
    :func:`postselect`, so both go through one code path.
    """
    return _normalize(o.p_a, o.p_r)


def riga_decide(m: Machine, o: EvaluationOutcome) -> PostselectedDecision:
    if not m.kind.riga:
        raise TypeError("riga_decide needs a Riga machine")
    if o.p_a + o.p_r > 0:
        return postselect(o)
    one, zero = (Fraction(1), Fraction(0)) if o.exact else (1.0, 0.0)
    return PostselectedDecision(one, zero) if m.chi == "A" else PostselectedDecision(zero, one)


def decide(m: Machine, o: EvaluationOutcome) -> PostselectedDecision:
    """Final accept/reject probabilities under the machine kind's semantics."""
    if m.kind.riga:
        return riga_decide(m, o)
    if m.kind.postselection or m.kind is Kind.MEASURED_QFA:
        return postselect(o)
    if m.kind.restart:
        return restart_closed_form(o)
    return PostselectedDecision(o.p_a, 1 - o.p_a)


def check_error_ratio(o: EvaluationOutcome, member: bool, eps) -> bool:
    """Ratio form of the bounded-error test for one string.

    Members need p_r/p_a <= eps/(1-eps), nonmembers p_a/p_r <= eps/(1-eps).
    Compared cross-multiplied so a zero denominator means an infinite ratio.
    """
    if not (0 <= eps < Fraction(1, 2)):
        raise ValueError(f"eps must lie in [0, 1/2), got {eps}")
    if o.p_a + o.p_r == 0:
        raise ZeroPostselectionMass("p_a + p_r = 0")
    num, den = (o.p_r, o.p_a) if member else (o.p_a, o.p_r)
    return num * (1 - eps) <= eps * den


# -- Monte Carlo ------------------------------------------------------------

_CHUNK = 4096


def _cumulative(m: Machine) -> dict:
    out = {}
    halting = [i for i, r in enumerate(m.roles) if r.halting]
    for sym in m.extended_alphabet:
        mat = np.array([[float(v) for v in row] for row in m.transitions[sym]])
        for h in halting:
            mat[:, h] = 0.0
            mat[h, h] = 1.0
        out[sym] = np.cumsum(mat, axis=0)
    return out


def _simulate_chunk(cum, word, init, accept, reject, size, round_cap, seed, chunk_index):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk_index,))))
    n = next(iter(cum.values())).shape[0]
    active = np.arange(size)
    result = np.full(size, -1, dtype=np.int8)  # 1 accept, 0 reject, -1 undecided
    rounds_used = np.zeros(size, dtype=np.int64)
    r = 0
    while active.size and r < round_cap:
        r += 1
        state = np.full(active.size, init, dtype=np.int64)
        for sym in word:
            u = rng.random(active.size)
            c = cum[sym][:, state]  # (n, active)
            state = np.minimum((c < u).sum(axis=0), n - 1)
        rounds_used[active] += 1
        acc = accept[state]
        rej = reject[state]
        result[active[acc]] = 1
        result[active[rej]] = 0
        active = active[~(acc | rej)]
    return result, rounds_used


def simulate_restart(m: Machine, w: str, rounds: int, seed: int,
                     round_cap: int = 10**6, workers: int = 1) -> McReport:
    """Sample ``rounds`` independent restart runs of ``m`` on ``w``.

    Each run repeats rounds until it reaches an accept or reject state; any
    other ending (restart, or mass still continuing) starts a new round.
    Runs that hit ``round_cap`` are reported as undecided.  Runs are batched
    into fixed chunks, each with its own Philox stream derived from
    ``(seed, chunk index)``, so results do not depend on ``workers``.
    """
    if m.kind is not Kind.RESTART_PFA:
        raise TypeError("simulate_restart needs a restart_pfa (use restart_closed_form otherwise)")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    _check_word(m, w)
    cum = _cumulative(m)
    word = [END_L, *w, END_R]
    init = m.index[m.initial]
    roles = m.roles
    accept = np.array([r is Role.ACCEPT for r in roles])
    reject = np.array([r is Role.REJECT for r in roles])
    sizes = [min(_CHUNK, rounds - s) for s in range(0, rounds, _CHUNK)]
    jobs = [(cum, word, init, accept, reject, size, round_cap, seed, i)
            for i, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _simulate_chunk(*j), jobs))
    else:
        parts = [_simulate_chunk(*j) for j in jobs]
    result = np.concatenate([p[0] for p in parts])
    used = np.concatenate([p[1] for p in parts])
    decided = result >= 0
    n_dec = int(decided.sum())
    freq = float((result == 1).sum() / n_dec) if n_dec else float("nan")
    mean_rounds = float(used[decided].sum() / n_dec) if n_dec else float("nan")
    return McReport(rounds_run=int(used.sum()), accept_freq=freq,
                    mean_rounds_per_decision=mean_rounds, seed=seed,
                    runs=rounds, undecided=rounds - n_dec)


def automaton_accepts(m: Machine, w: str) -> bool:
    """Run a DFA/NFA over ``END_L w END_R``; accept iff an accept state is reachable."""
    if not m.kind.automaton:
        raise TypeError("automaton_accepts needs a dfa or nfa")
    _check_word(m, w)
    current = {m.index[m.initial]}
    for sym in [END_L, *w, END_R]:
        mat = m.transitions[sym]
        current = {i for j in current for i in range(m.n) if mat[i, j] != 0}
    return any(m.roles[i] is Role.ACCEPT for i in current)
