"""Gate schedules for monitored PWR2_k, nearest-neighbour and all-to-all circuits.

Qubits are 0-based and the chain is periodic.  A schedule is a pure function of
its parameters.  Measurement masks, outcome coins and random Clifford labels
are stateless hashes of ``(seed, stream, layer, index)``; AA matchings come
from a generator keyed by ``(seed, layer)``.  Any single layer can therefore
be regenerated without replaying the ones before it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from . import _rng

# stream tags for the keyed generators
_STREAM_MEASURE = 0x4D45
_STREAM_MATCHING = 0x4141
_STREAM_GATES = 0x4754
_STREAM_OUTCOMES = 0x4F55

N_CLIFFORD2 = 11520


class Model(str, Enum):
    PWR2 = "PWR2"
    NN = "NN"
    AA = "AA"


class ScheduleError(ValueError):
    pass


def is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def layer_rng(seed: int, stream: int, layer: int) -> np.random.Generator:
    """Independent generator for one (seed, stream, layer) cell."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream, int(layer)])


@dataclass(frozen=True)
class CircuitParams:
    n_qubits: int
    k: int = 1
    model: Model = Model.PWR2
    n_layers: int = 1
    meas_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if not is_power_of_two(self.n_qubits):
            raise ScheduleError(f"n_qubits must be a power of two >= 2, got {self.n_qubits}")
        if not 1 <= self.k <= self.log2_n:
            raise ScheduleError(f"k must lie in [1, log2 N = {self.log2_n}], got {self.k}")
        if self.n_layers <= 0:
            raise ScheduleError(f"n_layers must be positive, got {self.n_layers}")
        if not 0.0 <= self.meas_rate <= 1.0:
            raise ScheduleError(f"meas_rate must lie in [0, 1], got {self.meas_rate}")
        if not 0 <= self.seed < 2**64:
            raise ScheduleError("seed must be a 64-bit unsigned integer")

    @property
    def log2_n(self) -> int:
        return self.n_qubits.bit_length() - 1

    @property
    def complete(self) -> bool:
        return self.model is Model.PWR2 and self.k == self.log2_n


@dataclass(frozen=True)
class GateLayer:
    pairs: tuple[tuple[int, int], ...]
    layer_index: int

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class CircuitSchedule:
    """Interaction layers plus the measurement/gate randomness of a run.

    ``gate`` is ``"q"`` for the deterministic CZ*H*H gate and ``"clifford"``
    for uniformly random two-qubit Cliffords.  Layers are generated on demand,
    so long schedules cost nothing until they are walked.
    """

    params: CircuitParams
    gate: str = "q"

    @property
    def n_qubits(self) -> int:
        return self.params.n_qubits

    @property
    def n_layers(self) -> int:
        return self.params.n_layers

    @cached_property
    def _period(self) -> list[np.ndarray] | None:
        p = self.params
        if p.model is Model.PWR2:
            return [
                np.asarray(pwr2_pairs(p.n_qubits, m, odd), dtype=np.int64)
                for odd in (False, True)
                for m in range(1, p.k + 1)
            ]
        if p.model is Model.NN:
            return [
                np.asarray(nn_pairs(p.n_qubits, odd), dtype=np.int64) for odd in (False, True)
            ]
        return None

    def pairs_at(self, t: int) -> np.ndarray:
        """(N/2, 2) array of the pairs of interaction layer ``t`` (1-based)."""
        if not 1 <= t <= self.n_layers:
            raise ScheduleError(f"layer {t} outside 1..{self.n_layers}")
        period = self._period
        if period is not None:
            return period[(t - 1) % len(period)]
        rng = layer_rng(self.params.seed, _STREAM_MATCHING, t)
        return rng.permutation(self.n_qubits).astype(np.int64).reshape(-1, 2)

    def periodic_pairs(self) -> np.ndarray:
        """(period, N/2, 2) stack of the repeating layer pattern (PWR2 and NN only)."""
        if self._period is None:
            raise ScheduleError("AA schedules have no fixed period")
        return np.stack(self._period)

    def phase_after(self, t: int) -> bool:
        p = self.params
        return p.model is Model.PWR2 and t % (2 * p.k) == 0

    @cached_property
    def layers(self) -> tuple[GateLayer, ...]:
        return tuple(
            GateLayer(tuple((int(i), int(j)) for i, j in self.pairs_at(t)), t)
            for t in range(1, self.n_layers + 1)
        )

    @property
    def phase_layer_after(self) -> frozenset[int]:
        return frozenset(t for t in range(1, self.n_layers + 1) if self.phase_after(t))

    def measurements(self, layer: int) -> np.ndarray:
        return measurement_mask(self.params, layer)

    def key(self, stream: int) -> np.uint64:
        return np.uint64(_rng.stream_key(np.uint64(self.params.seed), np.uint64(stream)))

    def outcome_bits(self, layer: int) -> np.ndarray:
        """Coin flips used for random measurement outcomes after ``layer``."""
        return _rng.bits(self.key(_STREAM_OUTCOMES), layer, self.n_qubits)

    def gate_choices(self, layer: int) -> np.ndarray:
        """Random Clifford labels for the gates of ``layer`` (one per pair)."""
        return _rng.labels(self.key(_STREAM_GATES), layer, self.n_qubits // 2, N_CLIFFORD2)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "n_qubits": p.n_qubits,
            "k": p.k,
            "model": p.model.value,
            "n_layers": p.n_layers,
            "meas_rate": p.meas_rate,
            "seed": p.seed,
            "gate": self.gate,
            "phase_layer_after": sorted(self.phase_layer_after),
            "layers": [self.pairs_at(t).tolist() for t in range(1, p.n_layers + 1)],
            "measurements": {
                str(t): sample_measurements(p, t) for t in range(1, p.n_layers + 1)
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def pwr2_pairs(n: int, m: int, odd: bool) -> tuple[tuple[int, int], ...]:
    """Pairs ``(i, i + 2^(m-1) mod n)`` for all i with floor(i / 2^(m-1)) of the given parity."""
    d = 1 << (m - 1)
    parity = 1 if odd else 0
    return tuple((i, (i + d) % n) for i in range(n) if (i // d) % 2 == parity)


def nn_pairs(n: int, odd: bool) -> tuple[tuple[int, int], ...]:
    start = 1 if odd else 0
    return tuple((i, (i + 1) % n) for i in range(start, n, 2))


def build_schedule(params: CircuitParams) -> CircuitSchedule:
    gate = "q" if params.model is Model.PWR2 else "clifford"
    return CircuitSchedule(params, gate)


def measurement_mask(params: CircuitParams, layer: int) -> np.ndarray:
    """Boolean mask of the qubits measured after ``layer``."""
    if not 1 <= layer <= params.n_layers:
        raise ScheduleError(f"layer {layer} outside 1..{params.n_layers}")
    p = params.meas_rate
    if p <= 0.0:
        return np.zeros(params.n_qubits, dtype=bool)
    if p >= 1.0:
        return np.ones(params.n_qubits, dtype=bool)
    key = np.uint64(_rng.stream_key(np.uint64(params.seed), np.uint64(_STREAM_MEASURE)))
    return _rng.uniforms(key, layer, params.n_qubits) < p


def sample_measurements(params: CircuitParams, layer: int) -> list[int]:
    return np.flatnonzero(measurement_mask(params, layer)).tolist()


def build_thermalizer(n_qubits: int, n_layers: int, seed: int) -> CircuitSchedule:
    """Unmonitored NN brickwork of random two-qubit Cliffords."""
    params = CircuitParams(n_qubits, 1, Model.NN, n_layers, 0.0, seed)
    return build_schedule(params)
