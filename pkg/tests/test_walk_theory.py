import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from thermaldrift.operator_kit import log_partition
from thermaldrift.pauli import PauliWord
from thermaldrift.sampler import Ensemble, SamplerConfig, build_grid_ensemble, replay, run
from thermaldrift.walk_theory import (
    ReplayMismatchError,
    WalkLaw,
    exact_endpoint_law,
    gaussian_endpoint_density,
    lattice_bins,
    log_likelihood_ratio,
    log_reweight,
    reach_parity,
    reweighted_lattice_law,
    theoretical_marginal,
    total_variation,
    weighted_histogram,
)


def brute_force_law(law):
    """Enumerate every path of 2L-way moves; independent of the multinomial grouping."""
    moves = [(j, s) for j in range(law.L) for s in (1, -1)]
    out = {}
    for path in itertools.product(range(len(moves)), repeat=law.steps):
        x = [0] * law.L
        prob = 1.0
        for k in path:
            j, s = moves[k]
            x[j] += s
            prob *= law.probs[j] / 2
        out[tuple(x)] = out.get(tuple(x), 0.0) + prob
    return out


def test_walk_law_validation():
    with pytest.raises(ValueError):
        WalkLaw(4, (0.5, 0.6))
    with pytest.raises(ValueError):
        WalkLaw(4, (1.0, 0.0))
    with pytest.raises(ValueError):
        WalkLaw(-1, (1.0,))
    assert WalkLaw(9, (0.25, 0.75)).std == pytest.approx([1.5, math.sqrt(6.75)])


def test_reach_parity_examples():
    assert reach_parity((1, 0), 3) == 2
    assert reach_parity((1, 0), 2) == 0
    assert reach_parity((2, 2), 3) == 0
    assert reach_parity((-2, 1), 5) == 2


def test_gaussian_density_examples():
    law = WalkLaw(10, (1.0,))
    assert gaussian_endpoint_density(law, [0]) == pytest.approx(2 / math.sqrt(2 * math.pi * 10))
    assert gaussian_endpoint_density(law, [1]) == 0.0
    two = WalkLaw(2, (1.0,))
    exact = exact_endpoint_law(two)
    assert exact[(0,)] == pytest.approx(0.5) and exact[(2,)] == pytest.approx(0.25)
    for x, p in exact.items():
        assert abs(gaussian_endpoint_density(two, x) - p) < 0.15


def test_vectorized_density_matches_scalar():
    law = WalkLaw(12, (0.3, 0.7))
    pts = np.array([[0, 0], [1, 1], [2, -4], [3, 0]])
    vec = gaussian_endpoint_density(law, pts)
    assert np.allclose(vec, [gaussian_endpoint_density(law, p) for p in pts])


@pytest.mark.parametrize("probs", [(1.0,), (0.5, 0.5), (0.2, 0.8)])
@pytest.mark.parametrize("steps", [1, 2, 5, 6])
def test_exact_law_matches_brute_force(probs, steps):
    law = WalkLaw(steps, probs)
    a, b = exact_endpoint_law(law), brute_force_law(law)
    assert a.keys() == b.keys()
    for x in a:
        assert a[x] == pytest.approx(b[x], abs=1e-14)
    assert sum(a.values()) == pytest.approx(1.0)


@pytest.mark.parametrize("probs", [(1 / 3, 1 / 3, 1 / 3), (0.2, 0.3, 0.5), (0.5, 0.5), (1.0,)])
def test_gaussian_mass_over_reachable_lattice(probs):
    law = WalkLaw(120, probs)
    r = [np.arange(-int(6 * s) - 1, int(6 * s) + 2) for s in law.std]
    pts = np.array(list(itertools.product(*r)))
    inside = np.sum(pts**2 / (law.steps * np.asarray(probs)), axis=1) <= 36
    assert gaussian_endpoint_density(law, pts[inside]).sum() == pytest.approx(1.0, abs=0.02)


def _err(law, x):
    return abs(exact_endpoint_law(law).get(tuple(x), 0.0) - gaussian_endpoint_density(law, x))


def test_gaussian_error_shrinks_with_steps():
    for probs in [(1.0,), (0.5, 0.5), (0.25, 0.75)]:
        small, large = WalkLaw(4, probs), WalkLaw(12, probs)
        e_small = max(_err(small, x) for x in exact_endpoint_law(small))
        e_large = max(_err(large, x) for x in exact_endpoint_law(large))
        assert e_large < e_small


def test_log_likelihood_examples():
    ens = Ensemble((PauliWord("Z"),), (1.0,))
    one = replay(ens, SamplerConfig(0.5, 1), [0], [1])
    beta = 0.5
    tau = 0.5
    ll = log_likelihood_ratio(ens, beta, one)
    assert ll == pytest.approx(0.0, abs=1e-15)
    two = replay(ens, SamplerConfig(1.0, 2), [0, 0], [1, 1])
    tau = 1.0 / 2
    # first step from I/2 is a fair coin; the second sees <Z> = -tanh(tau)
    p2 = (1 + math.tanh(tau) ** 2) / 2
    assert log_likelihood_ratio(ens, 1.0, two) == pytest.approx(math.log(2 * p2), abs=1e-14)
    assert two.log_likelihood == pytest.approx(math.log(2 * p2), abs=1e-14)


def test_log_likelihood_detects_mismatch():
    ens = build_grid_ensemble("heisenberg", 1, 2)
    smp = run(ens, SamplerConfig(1.0, 50, seed=1))
    smp.outcomes = -smp.outcomes
    with pytest.raises(ReplayMismatchError):
        log_likelihood_ratio(ens, 1.0, smp)


def test_single_word_likelihood_is_exact_reweight():
    # for one commuting word the path likelihood equals cosh(tau x) / cosh(tau)^N exactly
    ens = Ensemble((PauliWord("Z"),), (2.0,))
    beta, steps = 1.5, 40
    smp = run(ens, SamplerConfig(beta, steps, seed=2))
    tau = ens.lam * beta / steps
    x = smp.endpoint[0]
    assert log_likelihood_ratio(ens, beta, smp) == pytest.approx(math.log(math.cosh(tau * x)) - steps * math.log(math.cosh(tau)))


def test_log_reweight_matches_dense():
    ens = build_grid_ensemble("tfim", 1, 3)
    rng = np.random.default_rng(0)
    c = rng.normal(size=(5, ens.size))
    got = log_reweight(ens, 1.3, c, chunk=2)
    want = [log_partition(ens.hamiltonian(ci), 1.3) - ens.n * math.log(2) for ci in c]
    assert np.allclose(got, want)


def test_reweighted_lattice_law_normalized():
    ens = Ensemble((PauliWord("Z"),), (1.0,))
    pts = np.arange(-20, 21, 2)[:, None]
    w = reweighted_lattice_law(ens, 2.0, 20, pts)
    assert w.sum() == pytest.approx(1.0)
    assert np.allclose(w, w[::-1])


def test_lattice_bins_align_with_lattice():
    values = np.array([0.0, 0.1, 0.2, 0.2, -0.3])
    edges = lattice_bins(values, 0.1, width=0.2)
    assert np.allclose(np.diff(edges), 0.2)
    half = edges / 0.1 + 0.5
    assert np.allclose(half, np.round(half), atol=1e-9)
    assert edges[0] < values.min() and edges[-1] > values.max()


def test_total_variation():
    e = np.array([0.0, 1.0, 2.0])
    a = weighted_histogram(np.array([0.5, 0.5]), np.ones(2), e)
    b = weighted_histogram(np.array([1.5]), np.ones(1), e)
    assert total_variation(a, a) == 0
    assert total_variation(a, b) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        total_variation(a, weighted_histogram(np.array([0.5]), np.ones(1), e * 2))


def test_zero_temperature_weighting_is_plain_gaussian():
    ens = Ensemble((PauliWord("XZ"), PauliWord("ZI")), (1.0, 3.0))
    steps = 400
    edges = np.linspace(-3, 3, 25)
    h = theoretical_marginal(ens, 1e-12, steps, 1, 40_000, np.random.default_rng(1), edges=edges)
    std = ens.lam * math.sqrt(steps * 0.75) / steps
    from scipy.stats import norm

    ref = np.diff(norm.cdf(edges, scale=std))
    assert np.abs(h.masses - ref / ref.sum()).sum() / 2 < 0.02


def test_single_word_marginal_matches_quadrature():
    ens = Ensemble((PauliWord("Z"),), (1.0,))
    beta, steps = 2.0, 100
    edges = np.linspace(-0.6, 0.6, 13)
    h = theoretical_marginal(ens, beta, steps, 0, 200_000, np.random.default_rng(3), edges=edges)
    s = ens.lam / math.sqrt(steps)

    def dens(c):
        return math.cosh(beta * c) * math.exp(-c * c / (2 * s * s))

    ref = np.array([quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    assert np.abs(h.masses - ref / ref.sum()).sum() / 2 < 0.01
    with pytest.raises(ValueError):
        theoretical_marginal(ens, beta, steps, 0, 0, np.random.default_rng(3))


@given(st.integers(1, 9), st.lists(st.integers(-9, 9), min_size=1, max_size=3))
def test_parity_zero_means_zero_density(steps, x):
    law = WalkLaw(steps, tuple([1 / len(x)] * len(x)))
    if reach_parity(x, steps) == 0:
        assert gaussian_endpoint_density(law, x) == 0.0
