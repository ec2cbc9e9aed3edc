"""Measurement-controlled sampling of thermal states with Hamiltonian labels.

Each of the N steps picks a word sigma_j with probability h_j / lambda, applies a
thermal-drift step of strength tau = lambda * beta / N and records the outcome.
The label is H = (lambda / N) * sum_k m_k sigma_{j_k}, and for the maximally
mixed start the final state approximates exp(-beta H) / Z.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernel
from .drift_channel import MIN_BRANCH_PROB, NumericalError
from .operator_kit import gibbs_state, maximally_mixed, trace_distance
from .pauli import PauliWord

THREADS_ENV = "THERMALDRIFT_THREADS"


@dataclass(frozen=True)
class Ensemble:
    words: tuple[PauliWord, ...]
    bounds: tuple[float, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "bounds", tuple(float(h) for h in self.bounds))
        if not self.words:
            raise ValueError("ensemble needs at least one word")
        if len(self.words) != len(self.bounds):
            raise ValueError("words and bounds differ in length")
        n = self.words[0].n
        if any(w.n != n for w in self.words):
            raise ValueError("all words must act on the same number of qubits")
        if any(w.is_identity for w in self.words):
            raise ValueError("the all-identity word cannot be an ensemble generator")
        if len(set(self.words)) != len(self.words):
            raise ValueError("ensemble words must be pairwise distinct")
        if any(not h > 0 for h in self.bounds):
            raise ValueError("coefficient bounds must be strictly positive")

    @property
    def n(self) -> int:
        return self.words[0].n

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def lam(self) -> float:
        return math.fsum(self.bounds)

    @cached_property
    def probs(self) -> np.ndarray:
        h = np.asarray(self.bounds)
        return h / h.sum()

    @cached_property
    def x_masks(self) -> np.ndarray:
        return np.array([w.x_mask for w in self.words], dtype=np.int64)

    @cached_property
    def phases(self) -> np.ndarray:
        return np.stack([w.phases for w in self.words])

    @cached_property
    def global_phases(self) -> np.ndarray:
        return np.array([1j ** bin(w.x_mask & w.z_mask).count("1") for w in self.words], dtype=complex)

    @cached_property
    def signs(self) -> np.ndarray:
        return np.ascontiguousarray((self.phases / self.global_phases[:, None]).real)

    def hamiltonian(self, coefficients) -> np.ndarray:
        """Dense ``sum_j c_j sigma_j``."""
        coefficients = np.asarray(coefficients, dtype=float)
        d = 1 << self.n
        cols = np.arange(d)
        h = np.zeros((d, d), dtype=complex)
        for c, x, ph in zip(coefficients, self.x_masks, self.phases):
            if c:
                h[cols ^ x, cols] += c * ph
        return h


@dataclass(frozen=True)
class SamplerConfig:
    beta: float
    steps: int
    seed: int = 0
    initial_state: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    def tau(self, ensemble: Ensemble) -> float:
        return ensemble.lam * self.beta / self.steps


@dataclass
class ThermalSample:
    coefficients: np.ndarray
    endpoint: np.ndarray
    state: np.ndarray
    indices: np.ndarray
    outcomes: np.ndarray
    beta: float
    steps: int
    seed: int
    run_index: int | None = None
    log_likelihood: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def path(self) -> list[tuple[int, int]]:
        return list(zip(self.indices.tolist(), self.outcomes.tolist()))


@dataclass
class BatchResult:
    samples: list[ThermalSample]
    failures: dict[int, NumericalError]

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def run_rng(seed: int, run_index: int | None = None) -> np.random.Generator:
    """Generator for a single run; batch runs get child streams keyed by run index."""
    if run_index is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index,)))


def weighted_index(ensemble: Ensemble, rng: np.random.Generator, size=None):
    return rng.choice(ensemble.size, size=size, p=ensemble.probs)


def endpoint_from_path(size: int, indices, outcomes) -> np.ndarray:
    return np.bincount(np.asarray(indices), weights=np.asarray(outcomes), minlength=size).astype(np.int64)


def label_coefficients(ensemble: Ensemble, endpoint, steps: int) -> np.ndarray:
    return ensemble.lam * np.asarray(endpoint, dtype=float) / steps


def _initial_state(ensemble: Ensemble, config: SamplerConfig) -> np.ndarray:
    if config.initial_state is None:
        return maximally_mixed(ensemble.n)
    rho = np.array(config.initial_state, dtype=complex, order="C")
    d = 1 << ensemble.n
    if rho.shape != (d, d):
        raise ValueError(f"initial state has shape {rho.shape}, expected {(d, d)}")
    return rho


def _drive(ensemble, config, indices, uniforms, forced, kernel, check_every):
    rho = _initial_state(ensemble, config)
    tau = config.tau(ensemble)
    steps = len(indices)
    out_m = np.zeros(steps, dtype=np.int64)
    chunk = check_every or steps
    log_lik = 0.0
    buf = np.empty_like(rho)
    for start in range(0, steps, chunk):
        sl = slice(start, min(start + chunk, steps))
        m_view = out_m[sl]
        f = forced[sl] if len(forced) else forced
        if kernel == "numba":
            status, bad, ll = _kernel.drift_loop(
                rho, buf, ensemble.x_masks, ensemble.signs, ensemble.global_phases, indices[sl], uniforms[sl], f, tau, MIN_BRANCH_PROB, m_view
            )
        elif kernel == "numpy":
            status, bad, ll = _kernel.numpy_drift_loop(
                rho, ensemble.x_masks, ensemble.phases, indices[sl], uniforms[sl], f, tau, MIN_BRANCH_PROB, m_view
            )
        else:
            raise ValueError(f"unknown kernel {kernel!r}")
        if status != _kernel.OK:
            raise NumericalError("branch probability underflow", step=start + bad)
        log_lik += ll
        if check_every:
            _spot_check(rho, sl.stop)
    return rho, out_m, log_lik


def _spot_check(rho, step, tol=1e-8):
    from .operator_kit import InvalidStateError, check_density_matrix

    try:
        check_density_matrix(rho, tol)
    except (InvalidStateError, ValueError) as exc:
        raise NumericalError(f"invalid state: {exc}", step=step) from exc


def _assemble(ensemble, config, indices, outcomes, rho, log_lik, diagnostics, run_index):
    endpoint = endpoint_from_path(ensemble.size, indices, outcomes)
    sample = ThermalSample(
        coefficients=label_coefficients(ensemble, endpoint, config.steps),
        endpoint=endpoint,
        state=rho,
        indices=np.asarray(indices, dtype=np.int64),
        outcomes=np.asarray(outcomes, dtype=np.int64),
        beta=config.beta,
        steps=config.steps,
        seed=config.seed,
        run_index=run_index,
        log_likelihood=log_lik,
    )
    if diagnostics:
        target = gibbs_state(ensemble.hamiltonian(sample.coefficients), config.beta)
        sample.diagnostics["trace_distance"] = trace_distance(rho, target)
    return sample


def run(
    ensemble: Ensemble,
    config: SamplerConfig,
    *,
    diagnostics: bool = False,
    kernel: str = "numba",
    check_every: int | None = None,
    run_index: int | None = None,
) -> ThermalSample:
    """Execute the N-step sampling loop and return the labelled state.

    With ``check_every`` set, the state is validated (Hermitian, unit trace,
    PSD within 1e-8) after every block of that many steps.
    """
    rng = run_rng(config.seed, run_index)
    indices = np.asarray(weighted_index(ensemble, rng, size=config.steps), dtype=np.int64)
    uniforms = rng.random(config.steps)
    forced = np.zeros(0, dtype=np.int64)
    rho, outcomes, log_lik = _drive(ensemble, config, indices, uniforms, forced, kernel, check_every)
    return _assemble(ensemble, config, indices, outcomes, rho, log_lik, diagnostics, run_index)


def replay(
    ensemble: Ensemble,
    config: SamplerConfig,
    indices,
    outcomes,
    *,
    diagnostics: bool = False,
    kernel: str = "numba",
) -> ThermalSample:
    """Apply a prescribed path ``(j_k, m_k)`` deterministically."""
    indices = np.asarray(indices, dtype=np.int64)
    forced = np.asarray(outcomes, dtype=np.int64)
    if len(indices) != config.steps or len(forced) != config.steps:
        raise ValueError("path length must equal the step count")
    if not np.all(np.abs(forced) == 1):
        raise ValueError("outcomes must be +1 or -1")
    uniforms = np.zeros(config.steps)
    rho, outcomes, log_lik = _drive(ensemble, config, indices, uniforms, forced, kernel, None)
    return _assemble(ensemble, config, indices, outcomes, rho, log_lik, diagnostics, None)


def default_concurrency() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_batch(
    ensemble: Ensemble,
    config: SamplerConfig,
    count: int,
    concurrency: int | None = None,
    *,
    diagnostics: bool = False,
) -> BatchResult:
    """``count`` independent runs; run i draws from the child seed stream (seed, i).

    Results are ordered by run index whatever the scheduling. Numerical failures
    are collected per run rather than aborting the batch.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    workers = concurrency or default_concurrency()

    def one(i):
        try:
            return run(ensemble, config, diagnostics=diagnostics, run_index=i)
        except NumericalError as exc:
            return exc

    if workers == 1:
        results = [one(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(count)))
    samples = [r for r in results if isinstance(r, ThermalSample)]
    failures = {i: r for i, r in enumerate(results) if isinstance(r, NumericalError)}
    return BatchResult(samples=samples, failures=failures)


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """Open-boundary nearest-neighbour pairs of a row-major grid (0-based sites)."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            s = r * cols + c
            if c + 1 < cols:
                edges.append((s, s + 1))
            if r + 1 < rows:
                edges.append((s, s + cols))
    return edges


def build_grid_ensemble(model: str, rows: int, cols: int, h: float = 1.0) -> Ensemble:
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    if not h > 0:
        raise ValueError("bound h must be positive")
    n = rows * cols
    edges = grid_edges(rows, cols)
    words = []
    if model == "heisenberg":
        for i, j in edges:
            for p in "XYZ":
                words.append(PauliWord.from_sites(n, {i: p, j: p}))
    elif model == "tfim":
        for i, j in edges:
            words.append(PauliWord.from_sites(n, {i: "Z", j: "Z"}))
        for i in range(n):
            words.append(PauliWord.from_sites(n, {i: "X"}))
    else:
        raise ValueError(f"unknown model {model!r}")
    return Ensemble(tuple(words), (h,) * len(words), name=f"{model}-{rows}x{cols}")


def step_count(constant: float, beta: float, k: float) -> int:
    """N = round(C * beta**k), at least one step."""
    return max(1, int(round(constant * beta**k)))


def error_trend(n: int, steps: int, tau: float, delta: float = 0.01) -> float:
    """Constant-free error bound K0^(3/2) N^(3/2) tau^3 with K0 = (n+2) log 2 + log(N / delta)."""
    k0 = (n + 2) * math.log(2) + math.log(steps / delta)
    return k0**1.5 * steps**1.5 * tau**3
