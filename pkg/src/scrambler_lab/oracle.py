"""Dense statevector reference simulator for cross-checking the tableau (n <= 12)."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .circuit import CircuitSchedule
from .clifford2 import clifford_word

MAX_QUBITS = 12

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0 + 0j, -1.0])
I2 = np.eye(2, dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
Q = CZ @ np.kron(H, H)

_GENERATORS = [np.kron(H, I2), np.kron(I2, H), np.kron(S, I2), np.kron(I2, S), CZ]


class OracleError(ValueError):
    pass


@dataclass
class DenseState:
    amps: np.ndarray  # shape (2,)*n; axis q is qubit q

    @property
    def n(self) -> int:
        return self.amps.ndim

    @classmethod
    def zeros(cls, n: int) -> "DenseState":
        if not 1 <= n <= MAX_QUBITS:
            raise OracleError(f"oracle supports 1..{MAX_QUBITS} qubits")
        a = np.zeros((2,) * n, dtype=complex)
        a[(0,) * n] = 1.0
        return cls(a)

    def vector(self) -> np.ndarray:
        return self.amps.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def copy(self) -> "DenseState":
        return DenseState(self.amps.copy())


def clifford2_matrix(label: int) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for g in clifford_word(label):
        u = _GENERATORS[g] @ u
    return u


def oracle_apply_gate(state: DenseState, gate: np.ndarray, qubits) -> DenseState:
    gate = np.asarray(gate, dtype=complex)
    qubits = tuple(int(q) for q in np.atleast_1d(qubits))
    k = len(qubits)
    if gate.shape != (2**k, 2**k):
        raise OracleError(f"gate shape {gate.shape} does not act on {k} qubits")
    if np.linalg.norm(gate.conj().T @ gate - np.eye(2**k)) > 1e-10:
        raise OracleError("gate is not unitary")
    if len(set(qubits)) != k or min(qubits) < 0 or max(qubits) >= state.n:
        raise OracleError(f"bad qubits {qubits}")
    g = gate.reshape((2,) * (2 * k))
    amps = np.tensordot(g, state.amps, axes=(list(range(k, 2 * k)), list(qubits)))
    amps = np.moveaxis(amps, list(range(k)), list(qubits))
    return DenseState(amps)


def probability_zero(state: DenseState, qubit: int) -> float:
    a = np.moveaxis(state.amps, qubit, 0)
    return float(np.sum(np.abs(a[0]) ** 2))


def oracle_measure_z(state: DenseState, qubit: int, forced: int | None = None,
                     rng: np.random.Generator | None = None) -> tuple[int, DenseState]:
    """Born-rule Z measurement; ``forced`` (+1/-1) replays a recorded outcome."""
    p0 = probability_zero(state, qubit)
    if forced is None:
        u = (rng or np.random.default_rng()).random()
        outcome = 1 if u < p0 else -1
    else:
        outcome = int(forced)
    p = p0 if outcome == 1 else 1.0 - p0
    if p < 1e-12:
        raise OracleError(f"outcome {outcome} on qubit {qubit} has zero probability")
    a = np.moveaxis(state.amps, qubit, 0).copy()
    a[1 if outcome == 1 else 0] = 0.0
    a /= np.sqrt(p)
    return outcome, DenseState(np.moveaxis(a, 0, qubit))


def _reduced_spectrum(state: DenseState, region) -> np.ndarray:
    region = sorted(set(int(q) for q in region))
    n = state.n
    if not region:
        return np.array([1.0])
    rest = [q for q in range(n) if q not in region]
    m = np.transpose(state.amps, region + rest).reshape(2 ** len(region), -1)
    sv = np.linalg.svd(m, compute_uv=False)
    return sv**2


def oracle_entropy(state: DenseState, region) -> float:
    lam = _reduced_spectrum(state, region)
    lam = lam[lam > 1e-12]
    return float(-np.sum(lam * np.log(lam)))


def oracle_renyi2(state: DenseState, region) -> float:
    lam = _reduced_spectrum(state, region)
    return float(-np.log(np.sum(lam**2)))


def all_regions(n: int):
    """Every nonempty subset of range(n)."""
    for size in range(1, n + 1):
        yield from combinations(range(n), size)


def apply_schedule_layer(state: DenseState, schedule: CircuitSchedule, t: int) -> DenseState:
    """Gates of interaction layer ``t`` (and the trailing phase layer, if any)."""
    pairs = schedule.pairs_at(t)
    if schedule.gate == "q":
        for i, j in pairs:
            state = oracle_apply_gate(state, Q, (i, j))
        if schedule.phase_after(t):
            for q in range(schedule.n_qubits):
                state = oracle_apply_gate(state, S, q)
    else:
        for (i, j), lab in zip(pairs, schedule.gate_choices(t)):
            state = oracle_apply_gate(state, clifford2_matrix(int(lab)), (i, j))
    return state


def bell_reference_state(n_system: int, n_reference: int) -> DenseState:
    st = DenseState.zeros(n_system + n_reference)
    for i in range(n_reference):
        st = oracle_apply_gate(st, H, i)
        st = oracle_apply_gate(st, CNOT, (i, n_system + i))
    return st
