"""Random-walk view of the sampled labels.

Under the fair-coin reference measure the endpoint x (with x_j the signed count
of steps on word j) is a lattice walk with P(step = +-e_j) = p_j / 2, p_j = h_j / lambda.
The true sampler reweights that law by 2^-n tr exp(-beta H(x)), H(x) = (lambda / N) sum_j x_j sigma_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .drift_channel import DriftStepSpec, apply_drift_forced
from .operator_kit import maximally_mixed, trace_distance
from .sampler import Ensemble, ThermalSample


class ReplayMismatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class WalkLaw:
    steps: int
    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if any(not p > 0 for p in probs):
            raise ValueError("step probabilities must be positive")
        if abs(math.fsum(probs) - 1) > 1e-12:
            raise ValueError("step probabilities must sum to 1")
        if self.steps < 0:
            raise ValueError("step count must be non-negative")

    @classmethod
    def from_ensemble(cls, ensemble: Ensemble, steps: int) -> "WalkLaw":
        return cls(steps, tuple(ensemble.probs))

    @property
    def L(self) -> int:
        return len(self.probs)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.steps * np.asarray(self.probs))


def reach_parity(x, steps: int) -> int:
    total = int(np.abs(np.asarray(x)).sum())
    return 2 if total <= steps and (steps - total) % 2 == 0 else 0


def gaussian_endpoint_density(law: WalkLaw, x) -> float | np.ndarray:
    """Leading-order lattice Gaussian for P_Q(X_N = x).

    ``x`` may be a single point of length L or an array of points with shape (M, L).
    """
    x = np.asarray(x)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    p = np.asarray(law.probs)
    n = law.steps
    total = np.abs(pts).sum(axis=1)
    a = np.where((total <= n) & ((n - total) % 2 == 0), 2.0, 0.0)
    norm = (2 * np.pi * n) ** (law.L / 2) * np.sqrt(np.prod(p))
    dens = a / norm * np.exp(-np.sum(pts.astype(float) ** 2 / p, axis=1) / (2 * n))
    return float(dens[0]) if single else dens


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def exact_endpoint_law(law: WalkLaw) -> dict[tuple[int, ...], float]:
    """Exact P_Q(X_N = x) by enumerating the multiset of step directions.

    Each path is a sequence over the 2L moves +-e_j with probabilities p_j / 2; paths
    are grouped by their move counts and weighted by the multinomial coefficient.
    """
    n = law.steps
    log_q = np.log(np.repeat(np.asarray(law.probs) / 2, 2))
    out: dict[tuple[int, ...], float] = {}
    for counts in _compositions(n, 2 * law.L):
        c = np.asarray(counts)
        logp = gammaln(n + 1) - gammaln(c + 1).sum() + float(c @ log_q)
        x = tuple(int(c[2 * j] - c[2 * j + 1]) for j in range(law.L))
        out[x] = out.get(x, 0.0) + math.exp(logp)
    return out


def log_likelihood_ratio(
    ensemble: Ensemble,
    beta: float,
    sample: ThermalSample,
    initial_state: np.ndarray | None = None,
    tol: float = 1e-8,
) -> float:
    """Exact log of P(path) / P_Q(path) by replaying the path with forced outcomes.

    The replayed final state must reproduce ``sample.state`` to within ``tol`` in
    trace distance.
    """
    rho = maximally_mixed(ensemble.n) if initial_state is None else np.array(initial_state, dtype=complex)
    tau = ensemble.lam * beta / sample.steps
    specs = [DriftStepSpec(w, tau) for w in ensemble.words]
    total = 0.0
    for j, m in zip(sample.indices, sample.outcomes):
        out = apply_drift_forced(specs[j], rho, int(m))
        total += math.log(2 * out.branch_prob)
        rho = out.post_state
    dist = trace_distance(rho, sample.state)
    if dist > tol:
        raise ReplayMismatchError(f"replayed state differs from the sample by {dist:.3e}")
    return total


def log_reweight(ensemble: Ensemble, beta: float, coefficients: np.ndarray, chunk: int = 512) -> np.ndarray:
    """``log(2^-n tr exp(-beta H(c)))`` for each row of ``coefficients``."""
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    d = 1 << ensemble.n
    basis = np.stack([ensemble.hamiltonian(np.eye(ensemble.size)[j]) for j in range(ensemble.size)])
    out = np.empty(len(coefficients))
    for start in range(0, len(coefficients), chunk):
        c = coefficients[start : start + chunk]
        h = np.tensordot(c, basis, axes=1)
        w = np.linalg.eigvalsh(h)
        out[start : start + chunk] = logsumexp(-beta * w, axis=1) - math.log(d)
    return out


def reweighted_lattice_law(ensemble: Ensemble, beta: float, steps: int, points) -> np.ndarray:
    """Normalized weights proportional to 2^-n tr exp(-beta H(x)) * D(x) over ``points``."""
    points = np.atleast_2d(np.asarray(points))
    law = WalkLaw.from_ensemble(ensemble, steps)
    dens = gaussian_endpoint_density(law, points)
    logw = log_reweight(ensemble, beta, ensemble.lam * points / steps)
    with np.errstate(divide="ignore"):
        logp = np.log(dens) + logw
    logp -= logsumexp(logp)
    return np.exp(logp)


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.widths


def lattice_bins(values: np.ndarray, spacing: float, width: float | None = None) -> np.ndarray:
    """Bin edges on half-lattice offsets, with a width that is a whole number of
    lattice spacings (Freedman-Diaconis by default)."""
    values = np.asarray(values, dtype=float)
    if width is None:
        q75, q25 = np.percentile(values, [75, 25])
        width = 2 * (q75 - q25) / len(values) ** (1 / 3)
    mult = max(1, int(round(width / spacing)))
    w = mult * spacing
    lo = spacing * (math.floor(values.min() / spacing) - 0.5)
    nbins = int(math.ceil((values.max() - lo) / w)) + 1
    return lo + w * np.arange(nbins + 1)


def weighted_histogram(values, weights, edges) -> Histogram:
    mass, _ = np.histogram(values, bins=edges, weights=weights)
    mass = mass / mass.sum()
    return Histogram(edges=np.asarray(edges), density=mass / np.diff(edges))


def theoretical_marginal(
    ensemble: Ensemble,
    beta: float,
    steps: int,
    axis: int,
    mc_count: int,
    rng: np.random.Generator,
    edges: np.ndarray | None = None,
) -> Histogram:
    """Monte-Carlo marginal of c_axis under the reweighted Gaussian law.

    Endpoints are drawn from the continuous Gaussian D (variance N p_j per axis),
    weighted by 2^-n tr exp(-beta H(x)) and histogrammed in c = lambda x / N.
    """
    if mc_count < 1:
        raise ValueError("mc_count must be positive")
    law = WalkLaw.from_ensemble(ensemble, steps)
    x = rng.standard_normal((mc_count, law.L)) * law.std
    c = ensemble.lam * x / steps
    logw = log_reweight(ensemble, beta, c)
    w = np.exp(logw - logsumexp(logw))
    if edges is None:
        edges = lattice_bins(c[:, axis], ensemble.lam / steps)
    return weighted_histogram(c[:, axis], w, edges)


def total_variation(a: Histogram, b: Histogram) -> float:
    if not np.allclose(a.edges, b.edges):
        raise ValueError("histograms must share bin edges")
    return 0.5 * float(np.abs(a.masses - b.masses).sum())

