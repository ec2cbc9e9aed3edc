"""Closed-form thermal-drift instrument.

One step along a Pauli word sigma with strength tau picks an outcome m in {+1, -1}
and applies

    rho -> F_m rho F_m / tr(F_m^2 rho),   F_m = exp(-m tau sigma / 2)
                                              = cosh(tau/2) I - m sinh(tau/2) sigma

with probability tr(exp(-m tau sigma) rho) / (2 cosh tau). Outcome m = +1 drifts
toward exp(-tau sigma), so accumulating m_k sigma_{j_k} yields the Hamiltonian
whose Gibbs state the walk approximates.

The channel normalization is fixed to mu = 1 / cosh(tau), the only value that
makes the two-branch instrument trace preserving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pauli import DimensionError, PauliWord, apply_word

MIN_BRANCH_PROB = 1e-300


def sech(x: float) -> float:
    """``1 / cosh(x)`` without overflow for large |x|."""
    e = math.exp(-abs(x))
    return 2 * e / (1 + e * e)


class NumericalError(RuntimeError):
    """A drift step could not be completed in floating point."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class DriftStepSpec:
    word: PauliWord
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.word.is_identity:
            raise ValueError("the all-identity word does not define a drift step")

    @property
    def mu(self) -> float:
        return sech(self.tau)


@dataclass(frozen=True)
class DriftOutcome:
    m: int
    post_state: np.ndarray
    branch_prob: float
    rounds: int = 1


def pauli_expectation(word: PauliWord, rho: np.ndarray) -> float:
    """``tr(sigma rho)`` in O(d)."""
    d = word.dim
    j = np.arange(d)
    # tr(sigma rho) = sum_j sigma[j ^ x, j] rho[j, j ^ x]
    return float(np.real(np.sum(word.phases * rho[j, j ^ word.x_mask])))


def _check_dims(spec: DriftStepSpec, rho: np.ndarray) -> None:
    if rho.shape != (spec.word.dim, spec.word.dim):
        raise DimensionError(f"state has shape {rho.shape}, word acts on dimension {spec.word.dim}")


def branch_probabilities(spec: DriftStepSpec, rho: np.ndarray) -> tuple[float, float]:
    _check_dims(spec, rho)
    t = math.tanh(spec.tau) * pauli_expectation(spec.word, rho)
    return (1 - t) / 2, (1 + t) / 2


def drift_unnormalized(word: PauliWord, tau: float, m: int, rho: np.ndarray) -> np.ndarray:
    """``F_m rho F_m`` using the signed-permutation action of sigma on rows and columns."""
    a = math.cosh(tau / 2)
    b = -m * math.sinh(tau / 2)
    s_rho = apply_word(word, rho)
    rho_s = apply_word(word, rho.conj().T).conj().T
    s_rho_s = apply_word(word, s_rho.conj().T).conj().T
    return a * a * rho + a * b * (s_rho + rho_s) + b * b * s_rho_s


def apply_drift_forced(spec: DriftStepSpec, rho: np.ndarray, m: int) -> DriftOutcome:
    if m not in (1, -1):
        raise ValueError(f"outcome must be +1 or -1, got {m}")
    p_plus, p_minus = branch_probabilities(spec, rho)
    p = p_plus if m == 1 else p_minus
    if p < MIN_BRANCH_PROB:
        raise NumericalError(f"branch m={m:+d} has probability {p:.3e}")
    # F rho F / tr(F^2 rho) with tr(F^2 rho) = 2 cosh(tau) p_m; the coefficients
    # cosh^2(tau/2), sinh^2(tau/2), sinh(tau) are divided by 2 cosh(tau) up front
    s = sech(spec.tau)
    s_rho = apply_word(spec.word, rho)
    rho_s = apply_word(spec.word, rho.conj().T).conj().T
    s_rho_s = apply_word(spec.word, s_rho.conj().T).conj().T
    out = ((1 + s) * rho - m * math.tanh(spec.tau) * (s_rho + rho_s) + (1 - s) * s_rho_s) / (4 * p)
    return DriftOutcome(m=m, post_state=out, branch_prob=p)


def apply_drift(spec: DriftStepSpec, rho: np.ndarray, rng: np.random.Generator) -> DriftOutcome:
    p_plus, _ = branch_probabilities(spec, rho)
    m = 1 if rng.random() < p_plus else -1
    return apply_drift_forced(spec, rho, m)
