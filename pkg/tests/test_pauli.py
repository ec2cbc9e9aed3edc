import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_word_letters
from thermaldrift.operator_kit import expm_hermitian
from thermaldrift.pauli import (
    DimensionError,
    PauliWord,
    apply_word,
    inverse_permutation,
    materialize,
    pauli_exponential,
    permute_sites,
    strip_identity,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)

words = st.text(alphabet="IXYZ", min_size=1, max_size=5).map(PauliWord)


def test_masks_follow_letters():
    w = PauliWord("IXYZ")
    assert w.x_mask == 0b0110
    assert w.z_mask == 0b0011
    assert PauliWord("xz") == PauliWord("XZ")


def test_invalid_letters_rejected():
    with pytest.raises(ValueError):
        PauliWord("XA")
    with pytest.raises(ValueError):
        PauliWord("")


def test_materialize_examples():
    assert np.allclose(materialize(PauliWord("Z")), np.diag([1, -1]))
    assert np.allclose(materialize(PauliWord("XZ")), np.kron(X, Z))
    assert np.allclose(materialize(PauliWord("III")), np.eye(8))


def test_materialize_dense_limit():
    with pytest.raises(DimensionError):
        materialize(PauliWord("X" * 5), dense_limit=4)


def test_apply_word_examples():
    assert np.allclose(apply_word(PauliWord("X"), np.array([1, 0])), [0, 1])
    assert np.allclose(apply_word(PauliWord("Y"), np.array([1, 0])), [0, 1j])
    with pytest.raises(DimensionError):
        apply_word(PauliWord("XX"), np.ones(2))


def test_apply_word_matches_dense_on_random_pairs(rng):
    for _ in range(100):
        n = int(rng.integers(1, 7))
        w = PauliWord("".join(rng.choice(list("IXYZ"), n)))
        v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
        assert np.allclose(apply_word(w, v), materialize(w) @ v, atol=1e-12)
        m = rng.standard_normal((1 << n, 3))
        assert np.allclose(apply_word(w, m), materialize(w) @ m, atol=1e-12)


@given(words)
def test_words_are_hermitian_involutions(w):
    m = materialize(w)
    assert np.allclose(m @ m, np.eye(w.dim), atol=1e-12)
    assert np.allclose(m, m.conj().T, atol=1e-12)


@given(words, words)
def test_commutation_matches_matrices(a, b):
    if a.n != b.n:
        return
    ma, mb = materialize(a), materialize(b)
    assert a.commutes_with(b) == np.allclose(ma @ mb, mb @ ma)


def test_pauli_exponential_examples(rng):
    assert np.allclose(pauli_exponential(PauliWord("XY"), 0.0), np.eye(4))
    tau = 0.2
    assert np.allclose(pauli_exponential(PauliWord("Z"), -2 * tau), np.diag([np.exp(-tau), np.exp(tau)]))
    w = PauliWord(random_word_letters(2, rng))
    assert np.allclose(pauli_exponential(w, 0.3), expm_hermitian(0.15 * materialize(w)), atol=1e-12)


@given(words, st.floats(-5, 5))
def test_pauli_exponential_inverse(w, s):
    prod = pauli_exponential(w, s) @ pauli_exponential(w, -s)
    assert np.allclose(prod, np.eye(w.dim), atol=1e-12 * np.cosh(s) ** 2)


def test_strip_identity_examples():
    assert strip_identity(PauliWord("IXI")) == (PauliWord("X"), (1, 0, 2))
    assert strip_identity(PauliWord("ZZ")) == (PauliWord("ZZ"), (0, 1))
    assert strip_identity(PauliWord("IIYZ")) == (PauliWord("YZ"), (2, 3, 0, 1))
    with pytest.raises(ValueError):
        strip_identity(PauliWord("II"))


@given(words)
def test_strip_identity_round_trip(w):
    if w.is_identity:
        return
    reduced, perm = strip_identity(w)
    padded = np.kron(materialize(reduced), np.eye(1 << (w.n - reduced.n)))
    assert np.allclose(permute_sites(padded, inverse_permutation(perm)), materialize(w))


def test_permute_sites_reorders_kronecker_factors(rng):
    a, b, c = (rng.standard_normal((2, 2)) for _ in range(3))
    op = np.kron(np.kron(a, b), c)
    assert np.allclose(permute_sites(op, (2, 0, 1)), np.kron(np.kron(c, a), b))
