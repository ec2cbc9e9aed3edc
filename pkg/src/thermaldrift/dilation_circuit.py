"""Gate-level dilation of the thermal-drift instrument.

Registers are ordered A_1..A_m, B_1..B_m, S_1..S_m (then any identity sites of
the system, which the circuit never touches). One shot runs

    T^dag on S;  U_tau on AB;  SWAP(B_i, S_i);  U_tau^dag on AB;  V on ABS;  T on S

and measures A_m, B_m:  A_m = 1 is the loop outcome (state unchanged),
A_m = 0 with B_m = 0 / 1 are the up / down outcomes (m = +1 / -1).
Here U_tau = prod_i CNOT(A_i, B_i) prod_{i<m} CNOT(A_i, A_m) (H^{m-1} x RY(2 theta)),
V = prod_{i<m} CNOT(B_i, B_m) prod_i CNOT(B_i, S_i) CZ(A_i, S_i) prod_{i<m} CNOT(A_m, A_i)
and T is the per-site Clifford with T Z^m T^dag = sigma.

Simulation is exact: the circuit is reduced to its isometry from the system
into (ancilla x system), and mixed inputs are handled by linearity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .drift_channel import DriftOutcome
from .operator_kit import HERMITIAN_TOL, hermitize
from .pauli import DimensionError, PauliWord, inverse_permutation, permute_sites, strip_identity

MAX_ROUNDS = 40
MAX_SYSTEM_QUBITS = 4

UP, DOWN, LOOP = "up", "down", "loop"

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.diag([1, 1j]).astype(complex)
_CLIFFORD = {"X": _H, "Y": _S @ _H}  # Z needs no basis change
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


class CircuitFailure(RuntimeError):
    """Every round of a repeat-until-success run returned the loop outcome."""


def theta_for(tau: float) -> float:
    return math.acos(math.sqrt(math.exp(-tau / 2) / (2 * math.cosh(tau / 2))))


def loop_probability(tau: float) -> float:
    return 1.0 / (2 * math.cosh(tau / 2) ** 2)


def _ry(phi: float) -> np.ndarray:
    c, s = math.cos(phi / 2), math.sin(phi / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    name: str  # H, RY, CNOT, CZ, SWAP, T, TDG
    qubits: tuple[int, ...]
    angle: float = 0.0
    basis: str = ""

    def matrix(self) -> np.ndarray:
        if self.name == "H":
            return _H
        if self.name == "RY":
            return _ry(self.angle)
        if self.name == "CNOT":
            return _CNOT
        if self.name == "CZ":
            return _CZ
        if self.name == "T":
            return _CLIFFORD.get(self.basis, np.eye(2, dtype=complex))
        if self.name == "TDG":
            return _CLIFFORD.get(self.basis, np.eye(2, dtype=complex)).conj().T
        raise ValueError(f"gate {self.name} has no single matrix")

    def primitive(self) -> list["Gate"]:
        """SWAP expands to three CNOTs; everything else is already primitive."""
        if self.name == "SWAP":
            a, b = self.qubits
            return [Gate("CNOT", (a, b)), Gate("CNOT", (b, a)), Gate("CNOT", (a, b))]
        return [self]


def _u_tau_gates(m: int, theta: float) -> list[Gate]:
    a = list(range(m))
    b = [m + i for i in range(m)]
    gates = [Gate("H", (a[i],)) for i in range(m - 1)]
    gates.append(Gate("RY", (a[-1],), 2 * theta))
    gates += [Gate("CNOT", (a[i], a[-1])) for i in range(m - 1)]
    gates += [Gate("CNOT", (a[i], b[i])) for i in range(m)]
    return gates


def _dagger(gates: list[Gate]) -> list[Gate]:
    # every gate in U_tau is self-inverse except the rotation
    return [Gate(g.name, g.qubits, -g.angle) if g.name == "RY" else g for g in reversed(gates)]


@dataclass(frozen=True)
class DilationCircuit:
    word: PauliWord
    tau: float
    theta: float
    gates: tuple[Gate, ...]

    @property
    def m(self) -> int:
        return self.word.n

    @property
    def num_qubits(self) -> int:
        return 3 * self.m

    @property
    def gate_count(self) -> int:
        return len(self.gates)

    @property
    def loop_qubit(self) -> int:
        return self.m - 1

    @property
    def direction_qubit(self) -> int:
        return 2 * self.m - 1

    def projector(self, outcome: str) -> np.ndarray:
        """Diagonal of the PVM element over the full 3m-qubit register."""
        q = self.num_qubits
        idx = np.arange(1 << q)
        a_bit = (idx >> (q - 1 - self.loop_qubit)) & 1
        b_bit = (idx >> (q - 1 - self.direction_qubit)) & 1
        if outcome == LOOP:
            return (a_bit == 1).astype(float)
        if outcome == UP:
            return ((a_bit == 0) & (b_bit == 0)).astype(float)
        if outcome == DOWN:
            return ((a_bit == 0) & (b_bit == 1)).astype(float)
        raise ValueError(f"unknown outcome {outcome!r}")

    @cached_property
    def branch_operators(self) -> dict[str, np.ndarray]:
        """Per outcome, the stack of operators K with post-state sum_K K rho K^dag.

        Obtained by pushing every system basis state through the circuit with
        ancillas in |0> and slicing the result by ancilla index.
        """
        m = self.m
        d = 1 << m
        psi = np.zeros((d * d, d, d), dtype=complex)
        psi[0, np.arange(d), np.arange(d)] = 1.0  # [ancilla, system out, system in]
        out = simulate(self, psi.reshape(d**3, d))
        blocks = out.reshape(d, d, d, d)  # [A, B, S_out, S_in]
        ops = {}
        a_last = np.arange(d) & 1
        for name, a_val, b_val in ((LOOP, 1, None), (UP, 0, 0), (DOWN, 0, 1)):
            a_sel = np.flatnonzero(a_last == a_val)
            b_sel = np.arange(d) if b_val is None else np.flatnonzero((np.arange(d) & 1) == b_val)
            ops[name] = blocks[np.ix_(a_sel, b_sel)].reshape(-1, d, d)
        return ops


def build_circuit(word: PauliWord, tau: float, theta_offset: float = 0.0) -> DilationCircuit:
    """Gate list of one shot for a word with no identity sites.

    ``theta_offset`` perturbs the rotation angle and exists only to check that
    verification detects a corrupted circuit.
    """
    if not tau >= 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if "I" in word.letters:
        raise ValueError("word has identity sites; strip them first (see embed_state)")
    m = word.n
    theta = theta_for(tau) + theta_offset
    a = list(range(m))
    b = [m + i for i in range(m)]
    s = [2 * m + i for i in range(m)]
    u = _u_tau_gates(m, theta)
    gates = [Gate("TDG", (s[i],), basis=word.letters[i]) for i in range(m)]
    gates += u
    gates += [Gate("SWAP", (b[i], s[i])) for i in range(m)]
    gates += _dagger(u)
    gates += [Gate("CNOT", (a[-1], a[i])) for i in range(m - 1)]
    for i in range(m):
        gates += [Gate("CZ", (a[i], s[i])), Gate("CNOT", (b[i], s[i]))]
    gates += [Gate("CNOT", (b[i], b[-1])) for i in range(m - 1)]
    gates += [Gate("T", (s[i],), basis=word.letters[i]) for i in range(m)]
    return DilationCircuit(word=word, tau=float(tau), theta=theta, gates=tuple(gates))


def expected_gate_count(m: int) -> int:
    """T^dag + U_tau + SWAPs + U_tau^dag + V + T = m + (3m-1) + m + (3m-1) + (4m-2) + m."""
    return 13 * m - 4


def _apply(psi: np.ndarray, gate: Gate, q: int) -> np.ndarray:
    u = gate.matrix()
    if len(gate.qubits) == 1:
        (a,) = gate.qubits
        return np.moveaxis(np.tensordot(u, psi, axes=([1], [a])), 0, a)
    a, b = gate.qubits
    t = np.tensordot(u.reshape(2, 2, 2, 2), psi, axes=([2, 3], [a, b]))
    return np.moveaxis(t, [0, 1], [a, b])


def simulate(c: DilationCircuit, states: np.ndarray) -> np.ndarray:
    """Apply the circuit to state vectors given as columns of a (2^q, batch) array."""
    q = c.num_qubits
    states = np.asarray(states, dtype=complex)
    if states.shape[0] != 1 << q:
        raise DimensionError(f"state has {states.shape[0]} amplitudes, circuit needs {1 << q}")
    batch = states.shape[1]
    psi = states.reshape((2,) * q + (batch,))
    for g in c.gates:
        for p in g.primitive():
            psi = _apply(psi, p, q)
    return psi.reshape(1 << q, batch)


def _check_state(c: DilationCircuit, rho: np.ndarray) -> None:
    d = 1 << c.m
    if rho.shape != (d, d):
        raise DimensionError(f"state has shape {rho.shape}, circuit acts on dimension {d}")


def branch_analysis(c: DilationCircuit, rho: np.ndarray) -> dict[str, tuple[float, np.ndarray]]:
    """Exact probability and normalized system post-state for each PVM outcome."""
    rho = np.asarray(rho, dtype=complex)
    _check_state(c, rho)
    out = {}
    for name, ks in c.branch_operators.items():
        unnorm = hermitize(np.einsum("kij,jl,kml->im", ks, rho, ks.conj()))
        p = float(np.trace(unnorm).real)
        out[name] = (p, unnorm / p if p > 0 else unnorm)
    return out


def _embed(word: PauliWord, rho: np.ndarray):
    reduced, perm = strip_identity(word)
    return reduced, perm, permute_sites(np.asarray(rho, dtype=complex), perm)


def embedded_branch_analysis(word: PauliWord, tau: float, rho: np.ndarray, theta_offset: float = 0.0):
    """``branch_analysis`` for a word that may carry identity sites.

    The system is permuted so the support comes first; the circuit acts on the
    support and the remaining qubits ride along untouched.
    """
    if rho.shape != (word.dim, word.dim):
        raise DimensionError(f"state has shape {rho.shape}, word acts on dimension {word.dim}")
    reduced, perm, rho_p = _embed(word, rho)
    c = build_circuit(reduced, tau, theta_offset)
    rest = word.n - reduced.n
    ks_all = c.branch_operators
    inv = inverse_permutation(perm)
    out = {}
    eye = np.eye(1 << rest)
    for name, ks in ks_all.items():
        big = np.stack([np.kron(k, eye) for k in ks])
        unnorm = hermitize(np.einsum("kij,jl,kml->im", big, rho_p, big.conj()))
        p = float(np.trace(unnorm).real)
        post = permute_sites(unnorm / p if p > 0 else unnorm, inv)
        out[name] = (p, post)
    return out


def run_single_shot(c: DilationCircuit, rho_s: np.ndarray, rng: np.random.Generator) -> tuple[str, np.ndarray]:
    branches = branch_analysis(c, rho_s)
    names = (UP, DOWN, LOOP)
    probs = np.array([branches[k][0] for k in names])
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs) / probs.sum(), u, side="right"))
    name = names[min(idx, 2)]
    return name, branches[name][1]


def run_until_success(
    c: DilationCircuit, rho_s: np.ndarray, rng: np.random.Generator, max_rounds: int = MAX_ROUNDS
) -> DriftOutcome:
    """Repeat single shots until a directional outcome; up maps to m = +1."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    state = np.asarray(rho_s, dtype=complex)
    for rounds in range(1, max_rounds + 1):
        branches = branch_analysis(c, state)
        p_up, p_down, p_loop = (branches[k][0] for k in (UP, DOWN, LOOP))
        u = rng.random()
        if u < p_loop:
            state = branches[LOOP][1]
            continue
        name = UP if u < p_loop + p_up else DOWN
        success = p_up + p_down
        return DriftOutcome(
            m=1 if name == UP else -1,
            post_state=branches[name][1],
            branch_prob=branches[name][0] / success,
            rounds=rounds,
        )
    raise CircuitFailure(f"all {max_rounds} rounds returned the loop outcome")


def u_tau_matrix(m: int, tau: float) -> np.ndarray:
    """Dense U_tau on the 2m ancilla qubits (A first)."""
    gates = _u_tau_gates(m, theta_for(tau))
    q = 2 * m
    psi = np.eye(1 << q, dtype=complex).reshape((2,) * q + (1 << q,))
    for g in gates:
        psi = _apply(psi, g, q)
    return psi.reshape(1 << q, 1 << q)


def kraus_extract(u: np.ndarray, j: int, k: int) -> np.ndarray:
    """``G_jk = tr_A[U |0,0><j,k| U^dag]`` for U on registers A x B of equal size."""
    u = np.asarray(u, dtype=complex)
    dim = u.shape[0]
    d = math.isqrt(dim)
    if u.shape != (dim, dim) or d * d != dim:
        raise DimensionError(f"expected a square unitary on two equal registers, got shape {u.shape}")
    if not np.allclose(u.conj().T @ u, np.eye(dim), atol=HERMITIAN_TOL):
        raise ValueError("operator is not unitary")
    ket = u[:, 0].reshape(d, d)  # [A, B]
    bra = u[:, j * d + k].reshape(d, d)
    return ket.T @ bra.conj()
