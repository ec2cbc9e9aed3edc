"""n-qubit Pauli words in the symplectic (x, z) bit-mask encoding.

Site 1 is the leftmost letter and the most significant bit of a basis index,
so ``materialize`` agrees with the Kronecker product taken in site order.
A word acts on a computational basis state as

    sigma |j> = phase(j) |j ^ x_mask>,   phase(j) = i**n_y * (-1)**popcount(j & z_mask)

which is what ``apply_word`` and the sampler kernel exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DENSE_LIMIT = 12

_LETTERS = "IXYZ"
_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class DimensionError(ValueError):
    """Raised when an operand does not fit the word's Hilbert space."""


@dataclass(frozen=True)
class PauliWord:
    letters: str
    x_mask: int = field(init=False, repr=False, compare=False)
    z_mask: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or any(c not in _LETTERS for c in letters):
            raise ValueError(f"invalid Pauli word {self.letters!r}")
        object.__setattr__(self, "letters", letters)
        n = len(letters)
        x = z = 0
        for site, c in enumerate(letters):
            bit = 1 << (n - 1 - site)
            if c in "XY":
                x |= bit
            if c in "YZ":
                z |= bit
        object.__setattr__(self, "x_mask", x)
        object.__setattr__(self, "z_mask", z)

    @classmethod
    def from_sites(cls, n: int, ops: dict[int, str]) -> "PauliWord":
        """Build a word from ``{site: letter}`` with 0-based sites."""
        letters = ["I"] * n
        for site, c in ops.items():
            letters[site] = c
        return cls("".join(letters))

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def dim(self) -> int:
        return 1 << self.n

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    @cached_property
    def phases(self) -> np.ndarray:
        """``phase(j)`` for every basis index j, so that sigma[j ^ x, j] = phase(j)."""
        idx = np.arange(self.dim, dtype=np.int64)
        parity = np.zeros(self.dim, dtype=np.int64)
        masked = idx & self.z_mask
        while masked.any():
            parity ^= masked & 1
            masked >>= 1
        n_y = bin(self.x_mask & self.z_mask).count("1")
        return (1j ** n_y) * (1 - 2 * parity).astype(complex)

    def commutes_with(self, other: "PauliWord") -> bool:
        overlap = (self.x_mask & other.z_mask) ^ (self.z_mask & other.x_mask)
        return bin(overlap).count("1") % 2 == 0

    def __str__(self) -> str:
        return self.letters


def materialize(w: PauliWord, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
    if w.n > dense_limit:
        raise DimensionError(f"{w.n} qubits exceeds the dense limit of {dense_limit}")
    out = np.ones((1, 1), dtype=complex)
    for c in w.letters:
        out = np.kron(out, _SINGLE[c])
    return out


def apply_word(w: PauliWord, v: np.ndarray) -> np.ndarray:
    """Return ``sigma @ v`` for a vector (or matrix, acting on its rows) in O(d)."""
    v = np.asarray(v)
    if v.shape[0] != w.dim:
        raise DimensionError(f"operand has leading size {v.shape[0]}, expected {w.dim}")
    src = np.arange(w.dim) ^ w.x_mask
    ph = w.phases[src]
    if v.ndim == 1:
        return ph * v[src]
    return ph[:, None] * v[src]


def pauli_exponential(w: PauliWord, s: float) -> np.ndarray:
    """Dense ``exp(s * sigma / 2) = cosh(s/2) I + sinh(s/2) sigma``."""
    return np.cosh(s / 2) * np.eye(w.dim, dtype=complex) + np.sinh(s / 2) * materialize(w)


def strip_identity(w: PauliWord) -> tuple[PauliWord, tuple[int, ...]]:
    """Restrict ``w`` to its support.

    Returns the reduced word and a site permutation ``perm`` (0-based) listing
    the original sites in their new order: support sites first, in increasing
    order, then the identity sites. ``perm[k]`` is the original site placed at
    position k.
    """
    if w.is_identity:
        raise ValueError("all-identity word has no support")
    support = [s for s, c in enumerate(w.letters) if c != "I"]
    rest = [s for s, c in enumerate(w.letters) if c == "I"]
    reduced = PauliWord("".join(w.letters[s] for s in support))
    return reduced, tuple(support + rest)


def permute_sites(op: np.ndarray, perm: tuple[int, ...]) -> np.ndarray:
    """Reorder the tensor factors of a 2^n x 2^n operator so that factor k of
    the result is factor ``perm[k]`` of ``op``."""
    n = len(perm)
    t = op.reshape((2,) * (2 * n))
    axes = list(perm) + [n + p for p in perm]
    return t.transpose(axes).reshape(op.shape)


def inverse_permutation(perm: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for k, p in enumerate(perm):
        inv[p] = k
    return tuple(inv)
