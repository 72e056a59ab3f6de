import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scrambler_lab.circuit import (
    CircuitParams,
    Model,
    ScheduleError,
    build_schedule,
    build_thermalizer,
    measurement_mask,
    sample_measurements,
)


def pairs(sched, t):
    return {tuple(int(x) for x in p) for p in sched.pairs_at(t)}


def test_pwr2_first_layer():
    s = build_schedule(CircuitParams(8, 1, Model.PWR2, 4))
    assert pairs(s, 1) == {(0, 1), (2, 3), (4, 5), (6, 7)}


def test_pwr2_odd_block_wraps():
    s = build_schedule(CircuitParams(8, 1, Model.PWR2, 4))
    assert pairs(s, 2) == {(1, 2), (3, 4), (5, 6), (7, 0)}


def test_pwr2_k2_second_even_layer():
    s = build_schedule(CircuitParams(8, 2, Model.PWR2, 4))
    assert pairs(s, 2) == {(0, 2), (1, 3), (4, 6), (5, 7)}


def test_block_order_and_phase_layers():
    s = build_schedule(CircuitParams(16, 3, Model.PWR2, 14))
    dists = []
    for t in range(1, 7):
        i, j = s.pairs_at(t)[0]
        d = abs(int(i) - int(j))
        dists.append(min(d, 16 - d))
    assert dists == [1, 2, 4, 1, 2, 4]
    assert s.phase_layer_after == frozenset({6, 12})


@pytest.mark.parametrize("n", [2**e for e in range(1, 12)])
def test_pwr2_layers_partition_and_distance(n):
    for k in range(1, int(math.log2(n)) + 1):
        s = build_schedule(CircuitParams(n, k, Model.PWR2, 2 * k))
        for t in range(1, 2 * k + 1):
            p = s.pairs_at(t)
            assert p.shape == (n // 2, 2)
            assert np.array_equal(np.sort(p.ravel()), np.arange(n))
            m = (t - 1) % k + 1
            d = np.abs(p[:, 0] - p[:, 1])
            assert n == 2 or np.all(np.minimum(d, n - d) == 1 << (m - 1))


def test_block_union_is_power_of_two_circulant():
    n, k = 32, 3
    s = build_schedule(CircuitParams(n, k, Model.PWR2, 2 * k))
    edges = set()
    for t in range(1, k + 1):
        edges |= {frozenset(map(int, p)) for p in s.pairs_at(t)}
    for t in range(k + 1, 2 * k + 1):
        edges |= {frozenset(map(int, p)) for p in s.pairs_at(t)}
    expected = {frozenset((i, (i + 2**e) % n)) for i in range(n) for e in range(k)}
    assert edges == expected


def test_nn_brickwork_and_thermalizer():
    th = build_thermalizer(4, 2, 7)
    assert pairs(th, 1) == {(0, 1), (2, 3)}
    assert pairs(th, 2) == {(1, 2), (3, 0)}
    assert th.gate == "clifford" and th.params.meas_rate == 0.0
    big = build_thermalizer(64, 256, 1)
    assert len(big.layers) == 256
    assert all(len(layer.pairs) == 32 for layer in big.layers)


def test_aa_layers_are_matchings_and_vary():
    s = build_schedule(CircuitParams(16, 1, Model.AA, 5, 0.0, 3))
    seen = set()
    for t in range(1, 6):
        p = s.pairs_at(t)
        assert np.array_equal(np.sort(p.ravel()), np.arange(16))
        seen.add(frozenset(frozenset(map(int, x)) for x in p))
    assert len(seen) > 1


@pytest.mark.parametrize("bad", [
    dict(n_qubits=12), dict(n_qubits=8, k=4), dict(n_qubits=8, n_layers=0),
    dict(n_qubits=8, meas_rate=1.5), dict(n_qubits=8, k=0),
])
def test_invalid_params(bad):
    kw = dict(n_qubits=8, k=1, model=Model.PWR2, n_layers=1, meas_rate=0.0)
    kw.update(bad)
    with pytest.raises(ScheduleError):
        CircuitParams(**kw)


def test_measurement_rates():
    assert all(sample_measurements(CircuitParams(8, 1, Model.PWR2, 5, 0.0), t) == [] for t in range(1, 6))
    assert sample_measurements(CircuitParams(8, 1, Model.PWR2, 5, 1.0), 3) == list(range(8))
    params = CircuitParams(1024, 1, Model.PWR2, 50, 0.5, 99)
    for t in range(1, 51):
        assert abs(len(sample_measurements(params, t)) - 512) < 5 * 16


def test_measurement_out_of_range():
    params = CircuitParams(8, 1, Model.PWR2, 5, 0.5)
    with pytest.raises(ScheduleError):
        measurement_mask(params, 0)
    with pytest.raises(ScheduleError):
        measurement_mask(params, 6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), layer=st.integers(1, 20), p=st.floats(0.01, 0.99))
def test_masks_reproducible(seed, layer, p):
    a = CircuitParams(64, 2, Model.PWR2, 20, p, seed)
    b = CircuitParams(64, 2, Model.PWR2, 20, p, seed)
    assert np.array_equal(measurement_mask(a, layer), measurement_mask(b, layer))
    assert sample_measurements(a, layer) == sample_measurements(a, layer)


def test_schedule_json_roundtrip():
    s = build_schedule(CircuitParams(8, 2, Model.PWR2, 5, 0.3, 11))
    d = json.loads(s.to_json())
    for key in ("n_qubits", "k", "model", "n_layers", "meas_rate", "seed", "layers", "measurements"):
        assert key in d
    assert d["layers"][1] == [[0, 2], [1, 3], [4, 6], [5, 7]]
    assert d["measurements"]["2"] == sample_measurements(s.params, 2)
    assert build_schedule(s.params).to_json() == s.to_json()
