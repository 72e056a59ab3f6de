"""Stabilizer-tableau simulation of monitored Clifford circuits.

The tableau stores ``2n`` generator rows (destabilizers then stabilizers) packed
qubit-major; see :mod:`scrambler_lab._kernels` for the layout.  Qubits
``0..n_system-1`` are the circuit's system, any further qubits are reference
qubits that are never touched by the circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .circuit import (
    _STREAM_GATES,
    _STREAM_MEASURE,
    _STREAM_OUTCOMES,
    CircuitSchedule,
    Model,
    build_thermalizer,
    layer_rng,
)
from .clifford2 import clifford_tables

LN2 = math.log(2.0)

_STREAM_CLIFFORD = 0x5243
_AA_CHUNK = 128


class TableauError(ValueError):
    pass


class Tableau:
    """Destabilizer/stabilizer tableau of an ``n``-qubit stabilizer state.

    ``track_signs=False`` skips all phase bookkeeping: entropies are unchanged
    (they never read signs) but deterministic measurement outcomes are no
    longer available.
    """

    def __init__(self, n: int, n_system: int | None = None, track_signs: bool = True):
        if n < 1:
            raise TableauError("need at least one qubit")
        self.n = n
        self.n_system = n if n_system is None else n_system
        self.track_signs = track_signs
        W = (n + 63) // 64
        self.dx = np.zeros((n, W), dtype=np.uint64)
        self.dz = np.zeros((n, W), dtype=np.uint64)
        self.sx = np.zeros((n, W), dtype=np.uint64)
        self.sz = np.zeros((n, W), dtype=np.uint64)
        self.sr = np.zeros(W, dtype=np.uint64)

    @property
    def _arrays(self):
        return self.dx, self.dz, self.sx, self.sz, self.sr

    def copy(self) -> "Tableau":
        other = Tableau.__new__(Tableau)
        other.n, other.n_system, other.track_signs = self.n, self.n_system, self.track_signs
        other.dx, other.dz = self.dx.copy(), self.dz.copy()
        other.sx, other.sz, other.sr = self.sx.copy(), self.sz.copy(), self.sr.copy()
        return other

    def _check(self, *qubits):
        for q in qubits:
            if not 0 <= q < self.n:
                raise TableauError(f"qubit {q} out of range for n={self.n}")
        if len(qubits) == 2 and qubits[0] == qubits[1]:
            raise TableauError("two-qubit gate needs distinct qubits")

    # -- gates -----------------------------------------------------------

    def h(self, q: int) -> "Tableau":
        self._check(q)
        K.gate_h(*self._arrays, q)
        return self

    def s(self, q: int) -> "Tableau":
        self._check(q)
        K.gate_s(*self._arrays, q)
        return self

    p = s

    def cz(self, a: int, b: int) -> "Tableau":
        self._check(a, b)
        K.gate_cz(*self._arrays, a, b)
        return self

    def cnot(self, control: int, target: int) -> "Tableau":
        self._check(control, target)
        K.gate_cnot(*self._arrays, control, target)
        return self

    def q_gate(self, a: int, b: int) -> "Tableau":
        """Q_ab = CZ_ab H_a H_b."""
        self._check(a, b)
        K.gate_q(*self._arrays, a, b)
        return self

    def clifford2(self, a: int, b: int, label: int) -> "Tableau":
        """Conjugate by element ``label`` of the enumerated two-qubit Clifford group."""
        self._check(a, b)
        outs, sgns = clifford_tables()
        K.gate_table(*self._arrays, a, b, outs[label], sgns[label])
        return self

    def random_clifford2(self, a: int, b: int, rng: np.random.Generator) -> int:
        label = int(rng.integers(0, len(clifford_tables()[0])))
        self.clifford2(a, b, label)
        return label

    # -- measurement -----------------------------------------------------

    def measure_z(self, q: int, coin: int | None = None, rng: np.random.Generator | None = None):
        """Measure Z on ``q``; returns ``(eigenvalue, was_random)``.

        ``coin`` (0 or 1) fixes the outcome bit used if the result is random;
        otherwise one is drawn from ``rng``.
        """
        self._check(q)
        if coin is None:
            coin = int((rng or np.random.default_rng()).integers(0, 2))
        bit, was_random = K.measure(*self._arrays, q, np.uint8(coin), self.track_signs)
        if not was_random and not self.track_signs:
            return None, False
        return (-1 if bit else 1), bool(was_random)

    def is_deterministic(self, q: int) -> bool:
        return not self.sx[q].any()

    # -- entropies -------------------------------------------------------

    def region_rank(self, region: Iterable[int]) -> int:
        reg = _region_array(region, self.n)
        if reg.size == 0:
            return 0
        return int(K.region_rank(self.sx, self.sz, reg))

    def entropy_bits(self, region: Iterable[int]) -> int:
        """Entanglement entropy of ``region`` in units of ln 2 (an integer)."""
        reg = _region_array(region, self.n)
        if reg.size == 0:
            return 0
        return int(K.region_rank(self.sx, self.sz, reg)) - reg.size

    def entropy(self, region: Iterable[int]) -> float:
        """Von Neumann (= Renyi-2) entropy of ``region`` in nats."""
        return self.entropy_bits(region) * LN2

    def mutual_information_bits(self, a, b) -> int:
        a, b = _disjoint(a, b)
        return self.entropy_bits(a) + self.entropy_bits(b) - self.entropy_bits(a + b)

    def mutual_information(self, a, b) -> float:
        return self.mutual_information_bits(a, b) * LN2

    def tripartite_mi_bits(self, a, b, c) -> int:
        a, b, c = _disjoint(a, b, c)
        S = self.entropy_bits
        return (
            S(a) + S(b) + S(c) - S(a + b) - S(a + c) - S(b + c) + S(a + b + c)
        )

    def tripartite_mi(self, a, b, c) -> float:
        return self.tripartite_mi_bits(a, b, c) * LN2

    # -- inspection ------------------------------------------------------

    def dense(self):
        """Unpacked ``(x, z, r)``: ``x``/``z`` are (2n, n) bool, rows destab then stab.

        Destabilizer signs are not tracked and read as 0.
        """
        n = self.n

        def unpack(cols):
            bits = np.unpackbits(cols.view(np.uint8), axis=1, bitorder="little")[:, :n]
            return bits.T.astype(bool)

        x = np.vstack([unpack(self.dx), unpack(self.sx)])
        z = np.vstack([unpack(self.dz), unpack(self.sz)])
        rs = np.unpackbits(self.sr.view(np.uint8), bitorder="little")[:n].astype(bool)
        r = np.concatenate([np.zeros(n, dtype=bool), rs])
        return x, z, r

    def stabilizers(self) -> list[str]:
        x, z, r = self.dense()
        return [_pauli_str(x[i], z[i], r[i]) for i in range(self.n, 2 * self.n)]

    def destabilizers(self) -> list[str]:
        x, z, _ = self.dense()
        return [_pauli_str(x[i], z[i], False)[1:] for i in range(self.n)]

    def check_invariants(self) -> None:
        """Raise if the symplectic pairing or row independence is broken."""
        x, z, _ = self.dense()
        n = self.n
        xi, zi = x.astype(np.uint8), z.astype(np.uint8)
        gram = (xi @ zi.T + zi @ xi.T) % 2
        expect = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        expect[:n, n:] = np.eye(n, dtype=np.uint8)
        expect[n:, :n] = np.eye(n, dtype=np.uint8)
        # destabilizers need not commute among themselves
        gram[:n, :n] = 0
        if not np.array_equal(gram, expect):
            raise TableauError("symplectic pairing violated")
        if gf2_rank_dense(np.hstack([x, z])) != 2 * n:
            raise TableauError("tableau rows are linearly dependent")

    # -- circuit layers --------------------------------------------------

    def apply_layer(self, schedule: CircuitSchedule, t: int) -> None:
        pairs = schedule.pairs_at(t)
        if schedule.gate == "q":
            K.layer_q(*self._arrays, pairs)
            if schedule.phase_after(t):
                K.layer_s(*self._arrays, np.arange(schedule.n_qubits, dtype=np.int64))
        else:
            outs, sgns = clifford_tables()
            K.layer_table(*self._arrays, pairs, schedule.gate_choices(t), outs, sgns)

    def run_layers(self, schedule: CircuitSchedule, t_first: int, t_last: int,
                   stop_when_pure: Sequence[int] | None = None) -> int | None:
        """Apply layers ``t_first..t_last`` (gates then measurements) in compiled code.

        With ``stop_when_pure`` the walk halts after the first layer at which
        that region has zero entropy and returns its index (``None`` if never).
        """
        if t_last < t_first:
            return None
        ref = np.asarray(sorted(stop_when_pure or ()), dtype=np.int64)
        outs, sgns = clifford_tables()
        p = schedule.params
        common = (
            outs, sgns,
            schedule.key(_STREAM_MEASURE), schedule.key(_STREAM_OUTCOMES),
            schedule.key(_STREAM_GATES), float(p.meas_rate),
        )
        clifford = schedule.gate == "clifford"
        if p.model is not Model.AA:
            period = schedule.periodic_pairs()
            flags = np.array(
                [schedule.phase_after(t) for t in range(1, len(period) + 1)], dtype=np.bool_
            )
            hit = K.run_layers(*self._arrays, period, flags, clifford, *common,
                               t_first, t_last, self.track_signs, ref, -1)
            return None if hit < 0 else int(hit)
        flags = np.zeros(_AA_CHUNK, dtype=np.bool_)
        for start in range(t_first, t_last + 1, _AA_CHUNK):
            stop = min(start + _AA_CHUNK - 1, t_last)
            stack = np.stack([schedule.pairs_at(t) for t in range(start, stop + 1)])
            hit = K.run_layers(*self._arrays, stack, flags, clifford, *common,
                               start, stop, self.track_signs, ref, start)
            if hit >= 0:
                return int(hit)
        return None

    def measure_layer(self, schedule: CircuitSchedule, t: int):
        """Apply the sampled measurements after layer ``t``.

        Returns ``(qubits, outcome_bits, was_random)`` arrays.
        """
        qubits = np.flatnonzero(schedule.measurements(t)).astype(np.int64)
        coins = schedule.outcome_bits(t)[qubits]
        outcomes = np.zeros(qubits.size, dtype=np.uint8)
        randoms = np.zeros(qubits.size, dtype=np.bool_)
        if qubits.size:
            K.measure_many(*self._arrays, qubits, coins, self.track_signs, outcomes, randoms)
        return qubits, outcomes, randoms


def _region_array(region, n) -> np.ndarray:
    reg = np.asarray(sorted(set(int(q) for q in region)), dtype=np.int64)
    if reg.size and (reg[0] < 0 or reg[-1] >= n):
        raise TableauError(f"region {region!r} out of range for n={n}")
    return reg


def _disjoint(*regions):
    lists = [list(r) for r in regions]
    seen: set[int] = set()
    for r in lists:
        s = set(r)
        if len(s) != len(r) or seen & s:
            raise TableauError("regions must be disjoint and free of duplicates")
        seen |= s
    return lists


def _pauli_str(x, z, r) -> str:
    ops = "".join("IXZY"[int(a) + 2 * int(b)] for a, b in zip(x, z))
    return ("-" if r else "+") + ops


def gf2_rank_dense(m: np.ndarray) -> int:
    """GF(2) rank of a dense 0/1 matrix (any shape)."""
    m = np.asarray(m, dtype=bool)
    if m.size == 0:
        return 0
    W = (m.shape[1] + 63) // 64
    padded = np.zeros((m.shape[0], W * 64), dtype=bool)
    padded[:, : m.shape[1]] = m
    packed = np.packbits(padded, axis=1, bitorder="little").view(np.uint64)
    return int(K.rank_of_vectors(np.ascontiguousarray(packed)))


# ---------------------------------------------------------------- states


def init_z_polarized(n: int, track_signs: bool = True) -> Tableau:
    t = Tableau(n, track_signs=track_signs)
    for q in range(n):
        t.dx[q, q >> 6] |= np.uint64(1) << np.uint64(q & 63)
        t.sz[q, q >> 6] |= np.uint64(1) << np.uint64(q & 63)
    return t


def init_bell_reference(n_system: int, n_reference: int, track_signs: bool = True) -> Tableau:
    """System qubit i is maximally entangled with reference qubit n_system + i for i < n_reference."""
    if n_reference > n_system:
        raise TableauError("more reference qubits than system qubits")
    t = init_z_polarized(n_system + n_reference, track_signs)
    t.n_system = n_system
    for i in range(n_reference):
        t.h(i)
        t.cnot(i, n_system + i)
    return t


def reference_qubits(t: Tableau) -> list[int]:
    return list(range(t.n_system, t.n))


# ---------------------------------------------------------------- trajectories

Observable = Callable[[Tableau], float]


def entropy_of(region: Sequence[int]) -> Observable:
    region = list(region)
    return lambda t: t.entropy(region)


def reference_entropy(t: Tableau) -> float:
    return t.entropy(reference_qubits(t))


def quarters(n: int) -> tuple[list[int], list[int], list[int], list[int]]:
    q = n // 4
    return tuple(list(range(i * q, (i + 1) * q)) for i in range(4))  # type: ignore[return-value]


def tmi_observable(n_system: int) -> Observable:
    a, b, c, _ = quarters(n_system)
    return lambda t: t.tripartite_mi(a, b, c)


@dataclass
class MeasurementRecord:
    entries: list[tuple[int, int, int, bool]] = field(default_factory=list)

    def append(self, t: int, qubit: int, outcome: int, was_random: bool) -> None:
        self.entries.append((t, qubit, outcome, was_random))

    def to_json(self) -> list[dict]:
        return [
            {"t": t, "qubit": q, "outcome": o, "random": r} for t, q, o, r in self.entries
        ]


@dataclass
class TrajectoryResult:
    rows: list[tuple[int, str, float]]
    record: MeasurementRecord
    final: Tableau

    def series(self, name: str) -> list[tuple[int, float]]:
        return [(t, v) for t, n, v in self.rows if n == name]


def run_trajectory(
    schedule: CircuitSchedule,
    initial: Tableau,
    observables: Mapping[str, Observable] | None = None,
    times: Iterable[int] | None = None,
    record: bool = False,
    copy: bool = True,
    debug: bool = False,
) -> TrajectoryResult:
    """Walk ``schedule`` on ``initial``: gates of layer t, then its measurements.

    ``times`` selects the layers after which ``observables`` are evaluated
    (0 means the initial state); default is after the final layer only.
    """
    if initial.n_system != schedule.n_qubits:
        raise TableauError(
            f"schedule acts on {schedule.n_qubits} qubits, tableau system has {initial.n_system}"
        )
    tab = initial.copy() if copy else initial
    observables = dict(observables or {})
    T = schedule.n_layers
    when = {T} if times is None else set(times)
    rows: list[tuple[int, str, float]] = []
    rec = MeasurementRecord()

    def evaluate(t):
        for name, fn in observables.items():
            rows.append((t, name, fn(tab)))

    if 0 in when:
        evaluate(0)
    if not (record or debug):
        done = 0
        for t in sorted(x for x in when if 1 <= x <= T):
            tab.run_layers(schedule, done + 1, t)
            done = t
            evaluate(t)
        return TrajectoryResult(rows, rec, tab)
    for t in range(1, T + 1):
        tab.apply_layer(schedule, t)
        qubits, outs, rnd = tab.measure_layer(schedule, t)
        if record:
            for q, o, r in zip(qubits.tolist(), outs.tolist(), rnd.tolist()):
                rec.append(t, q, -1 if o else 1, r)
        if debug:
            tab.check_invariants()
        if t in when:
            evaluate(t)
    return TrajectoryResult(rows, rec, tab)


def thermalize(tab: Tableau, n_layers: int, seed: int) -> Tableau:
    """Scramble the system with an unmonitored random-Clifford NN brickwork (in place)."""
    sched = build_thermalizer(tab.n_system, n_layers, seed)
    tab.run_layers(sched, 1, n_layers)
    return tab


def purification_time(
    schedule: CircuitSchedule,
    initial: Tableau,
    max_layers: int | None = None,
) -> int | None:
    """First layer after which the reference entropy is zero; ``None`` if censored.

    ``schedule`` must have at least ``max_layers`` layers (default: all of them).
    """
    if initial.n_system != schedule.n_qubits:
        raise TableauError("schedule and tableau system sizes differ")
    tab = initial.copy()
    ref = reference_qubits(tab)
    if not ref:
        raise TableauError("purification needs reference qubits")
    limit = schedule.n_layers if max_layers is None else min(max_layers, schedule.n_layers)
    return tab.run_layers(schedule, 1, limit, stop_when_pure=ref)


def purification_setup(n_system: int, seed: int, thermalizer_layers: int | None = None,
                       track_signs: bool = False) -> Tableau:
    """One reference qubit Bell-paired with qubit 0, then 4N thermalizing layers."""
    tab = init_bell_reference(n_system, 1, track_signs=track_signs)
    layers = 4 * n_system if thermalizer_layers is None else thermalizer_layers
    if layers:
        thermalize(tab, layers, seed)
    return tab


def random_clifford_stream(seed: int, index: int) -> np.random.Generator:
    return layer_rng(seed, _STREAM_CLIFFORD, index)
