import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density, random_word_letters
from thermaldrift.drift_channel import (
    DriftStepSpec,
    NumericalError,
    apply_drift,
    apply_drift_forced,
    branch_probabilities,
)
from thermaldrift.operator_kit import gibbs_state, maximally_mixed
from thermaldrift.pauli import DimensionError, PauliWord, materialize, pauli_exponential

seeds = st.integers(0, 2**32 - 1)
taus = st.floats(1e-3, 3.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        DriftStepSpec(PauliWord("Z"), 0.0)
    with pytest.raises(ValueError):
        DriftStepSpec(PauliWord("II"), 0.5)
    spec = DriftStepSpec(PauliWord("Z"), 0.4)
    assert spec.mu == pytest.approx(1 / math.cosh(0.4), abs=1e-12)


def test_branch_probability_examples(rng):
    tau = 0.4
    spec = DriftStepSpec(PauliWord("Z"), tau)
    assert branch_probabilities(DriftStepSpec(PauliWord("XYZ"), tau), maximally_mixed(3)) == pytest.approx((0.5, 0.5))
    p0 = np.diag([1.0, 0.0]).astype(complex)
    c = 2 * math.cosh(tau)
    assert branch_probabilities(spec, p0) == pytest.approx((math.exp(-tau) / c, math.exp(tau) / c))
    w = PauliWord(random_word_letters(3, rng))
    rho = random_density(3, rng)
    s3 = DriftStepSpec(w, tau)
    dense_plus = np.trace(pauli_exponential(w, -2 * tau) @ rho).real / c
    dense_minus = np.trace(pauli_exponential(w, 2 * tau) @ rho).real / c
    assert branch_probabilities(s3, rho) == pytest.approx((dense_plus, dense_minus), abs=1e-12)
    with pytest.raises(DimensionError):
        branch_probabilities(s3, maximally_mixed(2))


def test_forced_examples():
    tau = 0.3
    spec = DriftStepSpec(PauliWord("Z"), tau)
    p0 = np.diag([1.0, 0.0]).astype(complex)
    assert np.allclose(apply_drift_forced(spec, p0, 1).post_state, p0)
    out = apply_drift_forced(spec, maximally_mixed(1), 1)
    assert np.allclose(out.post_state, gibbs_state(materialize(PauliWord("Z")), tau), atol=1e-14)
    with pytest.raises(ValueError):
        apply_drift_forced(spec, p0, 0)


def test_forward_and_back_cancel(rng):
    spec = DriftStepSpec(PauliWord("XZY"), 0.7)
    rho = random_density(3, rng)
    up = apply_drift_forced(spec, rho, 1)
    back = apply_drift_forced(spec, up.post_state, -1)
    assert np.allclose(back.post_state, rho, atol=1e-12)


def test_branch_underflow_is_reported():
    spec = DriftStepSpec(PauliWord("Z"), 400.0)
    with pytest.raises(NumericalError):
        apply_drift_forced(spec, np.diag([1.0, 0.0]).astype(complex), 1)


@given(seeds, taus)
def test_probabilities_sum_to_one(seed, tau):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    p, q = branch_probabilities(DriftStepSpec(PauliWord(random_word_letters(n, rng)), tau), random_density(n, rng))
    assert p + q == pytest.approx(1, abs=1e-12)
    assert 0 < p < 1


@given(seeds, taus)
def test_instrument_matches_dense_branches(seed, tau):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    w = PauliWord(random_word_letters(n, rng))
    rho = random_density(n, rng)
    spec = DriftStepSpec(w, tau)
    mu = spec.mu
    for m in (1, -1):
        out = apply_drift_forced(spec, rho, m)
        f = pauli_exponential(w, -m * tau)
        # p_m * post_m = (mu / 2) * F_m rho F_m with F_m = exp(-m tau sigma / 2)
        assert np.allclose(out.branch_prob * out.post_state, mu / 2 * f @ rho @ f, atol=1e-12)


@given(seeds, taus)
def test_eigenstates_are_fixed_points(seed, tau):
    rng = np.random.default_rng(seed)
    w = PauliWord(random_word_letters(2, rng))
    vals, vecs = np.linalg.eigh(materialize(w))
    v = vecs[:, 0]
    rho = np.outer(v, v.conj())
    for m in (1, -1):
        assert np.allclose(apply_drift_forced(DriftStepSpec(w, tau), rho, m).post_state, rho, atol=1e-10)


@given(seeds)
def test_commuting_sequences_are_exactly_thermal(seed):
    rng = np.random.default_rng(seed)
    words = [PauliWord(s) for s in ("ZZI", "IZZ", "ZIZ", "ZII")]
    tau = float(rng.uniform(0.01, 1.0))
    rho = maximally_mixed(3)
    h = np.zeros((8, 8), dtype=complex)
    for _ in range(int(rng.integers(1, 40))):
        j = int(rng.integers(len(words)))
        m = int(rng.choice([1, -1]))
        rho = apply_drift_forced(DriftStepSpec(words[j], tau), rho, m).post_state
        h += m * materialize(words[j])
    assert np.allclose(rho, gibbs_state(h, tau), atol=1e-10)


@pytest.mark.slow
def test_sampled_outcome_frequency(rng):
    spec = DriftStepSpec(PauliWord("XZ"), 0.8)
    rho = random_density(2, rng)
    p_plus, _ = branch_probabilities(spec, rho)
    draws = 100_000
    hits = sum(apply_drift(spec, rho, rng).m == 1 for _ in range(draws))
    sigma = math.sqrt(p_plus * (1 - p_plus) / draws)
    assert abs(hits / draws - p_plus) < 3 * sigma
