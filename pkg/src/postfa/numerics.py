"""Scalar and matrix helpers shared by the machine semantics.

Probabilistic machines carry ``fractions.Fraction`` entries in numpy object
arrays so every probability stays exact.  Quantum machines use ``complex128``
arrays and a :class:`TolerancePolicy` for comparisons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "TolerancePolicy",
    "DEFAULT_TOLERANCE",
    "ScalarKindError",
    "NotPSDError",
    "parse_rational",
    "format_rational",
    "rational_matrix",
    "complex_matrix",
    "is_rational",
    "identity",
    "tensor_product",
    "dagger",
    "jacobi_eigh",
    "psd_sqrt",
]


@dataclass(frozen=True)
class TolerancePolicy:
    eps_validate: float = 1e-12
    eps_compare: float = 1e-9

    def __post_init__(self):
        if not (0 < self.eps_validate <= self.eps_compare < 1):
            raise ValueError(
                f"need 0 < eps_validate <= eps_compare < 1, got "
                f"{self.eps_validate}, {self.eps_compare}")


DEFAULT_TOLERANCE = TolerancePolicy()


class ScalarKindError(TypeError):
    """Raised when rational and complex matrices are mixed."""


class NotPSDError(ValueError):
    pass


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"`` or ``"p"`` (also accepts ints and Fractions)."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int) and not isinstance(text, bool):
        return Fraction(text)
    if not isinstance(text, str):
        raise ValueError(f"rational must be a string 'p/q', got {text!r}")
    s = text.strip()
    if "/" in s:
        num, den = s.split("/", 1)
        if not den.strip().lstrip("+").isdigit():
            raise ValueError(f"bad rational {text!r}")
        return Fraction(int(num), int(den))
    if "." in s or "e" in s.lower():
        raise ValueError(f"rational must not be a decimal: {text!r}")
    return Fraction(int(s))


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def rational_matrix(rows) -> np.ndarray:
    """Build an object array of Fractions from nested rows."""
    data = [[parse_rational(v) if not isinstance(v, Fraction) else v for v in row]
            for row in rows]
    if not data:
        return np.empty((0, 0), dtype=object)
    width = len(data[0])
    if any(len(r) != width for r in data):
        raise ValueError("ragged matrix rows")
    out = np.empty((len(data), width), dtype=object)
    for i, row in enumerate(data):
        for j, v in enumerate(row):
            out[i, j] = v
    return out


def complex_matrix(rows) -> np.ndarray:
    m = np.asarray(rows, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def is_rational(m: np.ndarray) -> bool:
    return m.dtype == object


def identity(n: int, rational: bool = True) -> np.ndarray:
    if rational:
        out = np.full((n, n), Fraction(0), dtype=object)
        for i in range(n):
            out[i, i] = Fraction(1)
        return out
    return np.eye(n, dtype=np.complex128)


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; entry ``[i*b.rows + k, j*b.cols + l] = a[i,j]*b[k,l]``."""
    if is_rational(a) != is_rational(b):
        raise ScalarKindError("cannot tensor a rational matrix with a complex one")
    ar, ac = a.shape
    br, bc = b.shape
    out = np.empty((ar * br, ac * bc), dtype=a.dtype)
    for i in range(ar):
        for j in range(ac):
            out[i * br:(i + 1) * br, j * bc:(j + 1) * bc] = a[i, j] * b
    return out


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conjugate(m).T


def _max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def jacobi_eigh(sym: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decompose a real symmetric matrix with cyclic Jacobi rotations.

    Returns ``(eigenvalues, V)`` with ``sym ≈ V @ diag(w) @ V.T``.  Sweeps stop
    once the off-diagonal Frobenius norm drops below ``tol``.
    """
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p, q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.diag(a).copy(), v


def psd_sqrt(m: np.ndarray, tol: TolerancePolicy = DEFAULT_TOLERANCE) -> np.ndarray:
    """Hermitian square root of a positive-semidefinite matrix.

    The complex Hermitian input ``A + iB`` is embedded as the real symmetric
    matrix ``[[A, -B], [B, A]]``; functions of the embedding are embeddings of
    the corresponding function, so the square root is read back from the
    upper-left and lower-left blocks.  Eigenvalues in ``[-eps_validate, 0)``
    are clamped to zero.
    """
    m = np.asarray(m, dtype=np.complex128)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("psd_sqrt needs a square matrix")
    if _max_abs(m - dagger(m)) > tol.eps_validate:
        raise NotPSDError("matrix is not Hermitian")
    h = (m + dagger(m)) / 2
    real = np.block([[h.real, -h.imag], [h.imag, h.real]])
    w, v = jacobi_eigh(real, tol=tol.eps_validate)
    if n and w.min() < -tol.eps_validate:
        raise NotPSDError(f"eigenvalue {w.min():.3e} below -{tol.eps_validate}")
    w = np.sqrt(np.clip(w, 0.0, None))
    root = (v * w) @ v.T
    s = root[:n, :n] + 1j * root[n:, :n]
    return (s + dagger(s)) / 2
