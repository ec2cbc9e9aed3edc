"""Dense Hermitian linear algebra used throughout the package.

Density matrices and Hermitian operators are plain complex ``ndarray`` objects;
``check_density_matrix`` and ``check_hermitian`` enforce the invariants where a
caller needs them. Every eigendecomposition hermitizes its input first, since
long drift sequences accumulate asymmetry at the rounding level.

Trace distance here is the full trace norm ``||a - b||_1`` (range [0, 2]), not
the halved convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

HERMITIAN_TOL = 1e-10


class NotHermitianError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


def hermitize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    return (a + a.conj().T) / 2


def check_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {a.shape}")
    dev = np.max(np.abs(a - a.conj().T), initial=0.0)
    if dev > tol:
        raise NotHermitianError(f"matrix deviates from Hermitian by {dev:.3e}")
    return a


def check_density_matrix(rho: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity (all within ``tol``)."""
    rho = check_hermitian(rho, tol)
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise InvalidStateError(f"trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(hermitize(rho))[0]
    if lo < -tol:
        raise InvalidStateError(f"smallest eigenvalue {lo:.3e} is negative")
    return rho


def num_qubits(a: np.ndarray) -> int:
    d = np.asarray(a).shape[0]
    n = d.bit_length() - 1
    if d != 1 << n:
        raise ValueError(f"dimension {d} is not a power of two")
    return n


def maximally_mixed(n: int) -> np.ndarray:
    d = 1 << n
    return np.eye(d, dtype=complex) / d


def eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(hermitize(a))


def expm_hermitian(a: np.ndarray) -> np.ndarray:
    check_hermitian(a)
    w, u = eigh(a)
    return (u * np.exp(w)) @ u.conj().T


def gibbs_state(h: np.ndarray, beta: float) -> np.ndarray:
    """``exp(-beta h) / tr exp(-beta h)``, computed with a shifted spectrum."""
    w, u = eigh(h)
    e = -beta * w
    p = np.exp(e - e.max())
    p /= p.sum()
    rho = (u * p) @ u.conj().T
    return hermitize(rho)


def log_partition(h: np.ndarray, beta: float) -> float:
    w = np.linalg.eigvalsh(hermitize(h))
    return float(logsumexp(-beta * w))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(np.linalg.eigvalsh(hermitize(a - b))).sum())


def operator_norm(h: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvalsh(hermitize(h))).max())


@dataclass(frozen=True)
class ModularSpectrum:
    """Modular Hamiltonian ``K = -log rho`` restricted to levels above the floor."""

    operator: np.ndarray
    levels: np.ndarray
    excluded: int


def modular_hamiltonian(rho: np.ndarray, floor: float = 1e-14) -> ModularSpectrum:
    w, u = eigh(rho)
    keep = w > floor
    if not keep.any():
        raise InvalidStateError(f"all eigenvalues are below the floor {floor}")
    levels = -np.log(w[keep])
    uk = u[:, keep]
    k = (uk * levels) @ uk.conj().T
    return ModularSpectrum(operator=hermitize(k), levels=np.sort(levels), excluded=int((~keep).sum()))
