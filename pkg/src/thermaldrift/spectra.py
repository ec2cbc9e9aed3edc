"""Unfolding-free level statistics of density matrices.

Levels are the modular energies xi = -log p of a state's eigenvalues. Adjacent
spacings delta_n = xi_{n+1} - xi_n give ratios r_n = min/max of neighbouring
spacings, compared against the Poisson law 2 / (1 + r)^2 and the Wigner-like
surmises for GOE and GUE.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .operator_kit import eigh, modular_hamiltonian
from .pauli import PauliWord, materialize

MERGE_REL_TOL = 1e-6
DEFAULT_BINS = 20

# normalization constants of P(r~) = (r~ + r~^2)^b / (Z (1 + r~ + r~^2)^(1 + 3b/2)) on [0, inf)
_SURMISE = {
    "goe": (1, 8 / 27),
    "gue": (2, 4 * np.pi / (81 * np.sqrt(3))),
}
REFERENCE_MEANS = {"poisson": 2 * np.log(2) - 1, "goe": 4 - 2 * np.sqrt(3), "gue": 2 * np.sqrt(3) / np.pi - 0.5}


class TooFewLevelsError(ValueError):
    pass


@dataclass
class GapRatioStats:
    ratios: np.ndarray
    mean_r: float
    edges: np.ndarray
    density: np.ndarray
    excluded_levels: int = 0
    merged_levels: int = 0

    @property
    def count(self) -> int:
        return len(self.ratios)


def merge_levels(levels, rel_tol: float = MERGE_REL_TOL) -> tuple[np.ndarray, int]:
    """Collapse near-degenerate levels onto the lowest member of each cluster.

    A level joins the current cluster when its distance to the cluster's
    representative is at most ``rel_tol * max(|rep|, |level|, 1)``.
    Returns the representatives and the number of levels removed.
    """
    xi = np.sort(np.asarray(levels, dtype=float))
    if len(xi) == 0:
        return xi, 0
    reps = [xi[0]]
    for v in xi[1:]:
        rep = reps[-1]
        if v - rep > rel_tol * max(abs(rep), abs(v), 1.0):
            reps.append(v)
    return np.asarray(reps), len(xi) - len(reps)


def _histogram(ratios, bins):
    density, edges = np.histogram(ratios, bins=bins, range=(0.0, 1.0), density=True)
    return edges, density


def gap_ratios(levels, merge_rel_tol: float = MERGE_REL_TOL, bins: int = DEFAULT_BINS) -> GapRatioStats:
    merged, removed = merge_levels(levels, merge_rel_tol)
    if len(merged) < 4:
        raise TooFewLevelsError(f"{len(merged)} distinct levels after merging, need at least 4")
    delta = np.diff(merged)
    lo = np.minimum(delta[:-1], delta[1:])
    hi = np.maximum(delta[:-1], delta[1:])
    ratios = lo / hi
    edges, density = _histogram(ratios, bins)
    return GapRatioStats(ratios, float(ratios.mean()), edges, density, merged_levels=removed)


def modular_gap_ratios(
    rho, merge_rel_tol: float = MERGE_REL_TOL, floor: float = 1e-14, bins: int = DEFAULT_BINS
) -> GapRatioStats:
    spec = modular_hamiltonian(rho, floor)
    # log-eigenvalue-ratio spacings must coincide with the modular spacings
    p = np.sort(eigh(rho)[0])[::-1]
    p = p[p > floor]
    log_spacings = np.log(p[:-1] / p[1:])
    if not np.allclose(log_spacings, np.diff(spec.levels), rtol=1e-8, atol=1e-9):
        raise RuntimeError("modular spacings disagree with log eigenvalue ratios")
    stats = gap_ratios(spec.levels, merge_rel_tol, bins)
    stats.excluded_levels = spec.excluded
    return stats


def pool(stats: list[GapRatioStats], bins: int = DEFAULT_BINS) -> GapRatioStats:
    """Aggregate ratios across samples (pooled, not averaged per sample)."""
    ratios = np.concatenate([s.ratios for s in stats])
    edges, density = _histogram(ratios, bins)
    return GapRatioStats(
        ratios,
        float(ratios.mean()),
        edges,
        density,
        excluded_levels=sum(s.excluded_levels for s in stats),
        merged_levels=sum(s.merged_levels for s in stats),
    )


def global_parities(words) -> list[PauliWord]:
    """Mutually commuting members of {X^n, Y^n, Z^n} that commute with every word."""
    words = list(words)
    n = words[0].n
    found: list[PauliWord] = []
    for letter in "XYZ":
        p = PauliWord(letter * n)
        if all(p.commutes_with(w) for w in words) and all(p.commutes_with(q) for q in found):
            found.append(p)
    return found


def symmetry_sectors(symmetries, n: int) -> list[np.ndarray]:
    """Orthonormal bases (columns) of the joint +-1 eigenspaces of commuting Pauli words."""
    blocks = [np.eye(1 << n, dtype=complex)]
    for p in symmetries:
        sigma = materialize(p)
        split = []
        for b in blocks:
            w, v = np.linalg.eigh(b.conj().T @ sigma @ b)
            for sign in (-1, 1):
                cols = np.abs(w - sign) < 1e-8
                if cols.any():
                    split.append(b @ v[:, cols])
        blocks = split
    return blocks


def sector_gap_ratios(
    rho, sectors: list[np.ndarray], merge_rel_tol: float = MERGE_REL_TOL, floor: float = 1e-14, tol: float = 1e-8
) -> list[GapRatioStats]:
    """Modular gap ratios computed separately inside each symmetry sector.

    Levels from different sectors are uncorrelated, so mixing them drives the
    statistics toward Poisson whatever the dynamics inside each block.
    """
    rho = np.asarray(rho)
    off = 0.0
    for i, a in enumerate(sectors):
        for b in sectors[i + 1 :]:
            off = max(off, float(np.abs(a.conj().T @ rho @ b).max()))
    if off > tol:
        raise ValueError(f"state is not block diagonal in the given sectors (leak {off:.2e})")
    out = []
    for b in sectors:
        block = b.conj().T @ rho @ b
        block = block / np.trace(block).real
        out.append(modular_gap_ratios(block, merge_rel_tol, floor))
    return out


def reference_density(kind: str, r):
    """Density of the folded ratio r in [0, 1] for poisson, goe or gue."""
    r = np.asarray(r, dtype=float)
    if kind == "poisson":
        return 2.0 / (1.0 + r) ** 2
    if kind not in _SURMISE:
        raise ValueError(f"unknown reference {kind!r}")
    b, z = _SURMISE[kind]
    return 2.0 * (r + r * r) ** b / (z * (1.0 + r + r * r) ** (1 + 1.5 * b))


@lru_cache(maxsize=None)
def _bin_average(kind: str, lo: float, hi: float) -> float:
    return quad(lambda t: float(reference_density(kind, t)), lo, hi)[0] / (hi - lo)


def binned_reference(kind: str, edges) -> np.ndarray:
    return np.array([_bin_average(kind, float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])])


def l1_distance(stats: GapRatioStats, kind: str) -> float:
    """Integral of |histogram - reference| over [0, 1], reference averaged per bin."""
    ref = binned_reference(kind, stats.edges)
    return float(np.sum(np.abs(stats.density - ref) * np.diff(stats.edges)))


def reference_mean(kind: str) -> float:
    return quad(lambda t: t * float(reference_density(kind, t)), 0.0, 1.0)[0]
