from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from postfa.numerics import (
    NotPSDError,
    ScalarKindError,
    TolerancePolicy,
    format_rational,
    identity,
    jacobi_eigh,
    parse_rational,
    psd_sqrt,
    rational_matrix,
    tensor_product,
)


@pytest.mark.parametrize("text, value", [
    ("9/17", F(9, 17)), ("3", F(3)), ("-2/4", F(-1, 2)), (" 1/3 ", F(1, 3)), (7, F(7)),
])
def test_parse_rational(text, value):
    assert parse_rational(text) == value


@pytest.mark.parametrize("bad", ["0.5", "1/x", "1e3", 0.5, None])
def test_parse_rational_rejects(bad):
    with pytest.raises(ValueError):
        parse_rational(bad)


def test_format_rational_lowest_terms():
    assert format_rational(F(8, 68)) == "2/17"
    assert format_rational(F(4, 2)) == "2"
    assert format_rational(F(0)) == "0"


@given(st.fractions())
def test_rational_roundtrip(x):
    assert parse_rational(format_rational(x)) == x


def test_tolerance_policy_ordering():
    with pytest.raises(ValueError):
        TolerancePolicy(eps_validate=1e-6, eps_compare=1e-9)


def test_tensor_product_matches_kron():
    a = rational_matrix([["1/2", "1/3"], ["1/2", "2/3"]])
    b = rational_matrix([["1", "1/4"], ["0", "3/4"]])
    got = tensor_product(a, b)
    want = np.kron(a.astype(float), b.astype(float))
    assert got.dtype == object
    assert np.allclose(got.astype(float), want)
    assert got[1, 3] == F(1, 3) * F(3, 4)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-2, 2)),
       arrays(np.float64, (2, 3), elements=st.floats(-2, 2)))
def test_tensor_product_complex_property(a, b):
    a = a.astype(np.complex128)
    b = b.astype(np.complex128)
    assert np.allclose(tensor_product(a, b), np.kron(a, b))


def test_tensor_product_kind_mismatch():
    with pytest.raises(ScalarKindError):
        tensor_product(identity(2), np.eye(2, dtype=np.complex128))


def _random_hermitian(rng, n):
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return x + x.conj().T


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_jacobi_agrees_with_eigh(n):
    rng = np.random.default_rng(n)
    s = rng.normal(size=(n, n))
    s = s + s.T
    w, v = jacobi_eigh(s)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(s), atol=1e-10)
    assert np.allclose(v @ np.diag(w) @ v.T, s, atol=1e-10)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_psd_sqrt_squares_back(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    p = x @ x.conj().T
    s = psd_sqrt(p)
    assert np.allclose(s, s.conj().T, atol=1e-12)
    assert np.allclose(s @ s, p, atol=1e-9 * max(1.0, np.abs(p).max()))
    assert np.linalg.eigvalsh(s).min() > -1e-9


def test_psd_sqrt_against_eigh_oracle():
    rng = np.random.default_rng(7)
    h = _random_hermitian(rng, 4)
    p = h @ h
    w, v = np.linalg.eigh(p)
    want = v @ np.diag(np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    assert np.allclose(psd_sqrt(p), want, atol=1e-9)


def test_psd_sqrt_clamps_tiny_negative_eigenvalue():
    p = np.diag([1.0, -1e-14]).astype(np.complex128)
    assert np.allclose(psd_sqrt(p), np.diag([1.0, 0.0]))


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.diag([1.0, -0.5]))


def test_psd_sqrt_rejects_non_hermitian():
    with pytest.raises(NotPSDError):
        psd_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))
