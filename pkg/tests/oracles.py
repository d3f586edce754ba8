"""Reference computations that do not touch the package's evaluators."""
from fractions import Fraction
from itertools import product

F = Fraction


def leq_branches(w, offset=0):
    """(p_a, p_r) of the balanced-count witness by enumerating every survive/die path.

    Each branch walks the string symbol by symbol and forks into a surviving
    and a dying path; only the fully surviving path reaches the end marker.
    """
    weights = {"A": F(9), "R1": F(4) * 2 ** offset if offset >= 0 else F(4) / 2 ** -offset,
               "R2": F(4) / 2 ** offset if offset >= 0 else F(4) * 2 ** -offset}
    total = sum(weights.values())
    survive = {
        "A": {"a": F(1, 2), "b": F(1, 2)},
        "R1": {"a": F(1, 4), "b": F(1)},
        "R2": {"a": F(1), "b": F(1, 4)},
    }
    p_a = p_r = F(0)
    for branch, wt in weights.items():
        for fates in product((True, False), repeat=len(w)):
            p = wt / total
            for ch, alive in zip(w, fates):
                s = survive[branch][ch]
                p *= s if alive else 1 - s
            if all(fates):
                if branch == "A":
                    p_a += p
                else:
                    p_r += p
    return p_a, p_r


def leq_closed_form(w):
    n = len(w)
    return F(9, 17) / 2 ** n, F(4, 17) * (F(1, 4) ** w.count("a") + F(1, 4) ** w.count("b"))


def lpal_integers(w):
    """Forward and reversed base-4 encodings with digits a=1, b=2."""
    digits = [{"a": 1, "b": 2}[c] for c in w]
    fwd = rev = 0
    for d in digits:
        fwd = 4 * fwd + d
    for d in reversed(digits):
        rev = 4 * rev + d
    return fwd, rev


def lpal_accept(w, kappa=F(1, 3)):
    fwd, rev = lpal_integers(w)
    return kappa / (kappa + (fwd - rev) ** 2)


def words(alphabet, max_len):
    for n in range(max_len + 1):
        for t in product(alphabet, repeat=n):
            yield "".join(t)
