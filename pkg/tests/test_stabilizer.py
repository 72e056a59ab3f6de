import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scrambler_lab.circuit import CircuitParams, Model, build_schedule, build_thermalizer
from scrambler_lab.oracle import (
    DenseState, all_regions, apply_schedule_layer, bell_reference_state, clifford2_matrix,
    oracle_apply_gate, oracle_entropy, oracle_measure_z,
)
from scrambler_lab.stabilizer import (
    LN2, TableauError, init_bell_reference, init_z_polarized, purification_setup,
    purification_time, reference_entropy, reference_qubits, run_trajectory, tmi_observable,
)

from helpers import random_clifford_tableau


def ghz(n):
    t = init_z_polarized(n).h(0)
    for q in range(1, n):
        t.cnot(0, q)
    return t


def test_z_polarized_basics():
    assert init_z_polarized(1).entropy([0]) == 0.0
    t = init_z_polarized(4)
    for q in range(4):
        assert t.measure_z(q) == (1, False)
    assert init_z_polarized(2).mutual_information([0], [1]) == 0.0


def test_bell_reference():
    assert init_bell_reference(1, 1).entropy([1]) == pytest.approx(LN2)
    t = init_bell_reference(4, 4)
    assert t.entropy(reference_qubits(t)) == pytest.approx(4 * LN2)
    assert t.entropy(range(8)) == 0.0
    t = init_bell_reference(4, 1)
    assert reference_entropy(t) == pytest.approx(LN2)
    assert t.entropy(range(4)) == pytest.approx(LN2)
    with pytest.raises(TableauError):
        init_bell_reference(2, 3)


def test_gate_rules():
    t = init_z_polarized(1).h(0)
    assert t.stabilizers() == ["+X"]
    t = init_z_polarized(2).h(0).cnot(0, 1)
    assert sorted(t.stabilizers()) == ["+XX", "+ZZ"]
    # CZ on X0: start from |+0>, stabilizers X0, Z1
    t = init_z_polarized(2).h(0).cz(0, 1)
    assert "+XZ" in t.stabilizers()
    t = init_z_polarized(1).h(0).s(0)
    assert t.stabilizers() == ["+Y"]


def test_q_gate_cluster_state():
    t = init_z_polarized(2).q_gate(0, 1)
    assert sorted(t.stabilizers()) == ["+XZ", "+ZX"]
    assert t.entropy([0]) == pytest.approx(LN2)
    ref = init_z_polarized(2).h(0).h(1).cz(0, 1)
    assert sorted(ref.stabilizers()) == sorted(t.stabilizers())


def test_full_q_layer_keeps_purity():
    sched = build_schedule(CircuitParams(16, 2, Model.PWR2, 8))
    t = init_z_polarized(16)
    for layer in range(1, 9):
        t.apply_layer(sched, layer)
        assert t.entropy(range(16)) == 0.0


def test_random_clifford_properties(rng):
    t = init_bell_reference(2, 1)  # qubit 0 entangled with qubit 2
    for _ in range(50):
        t.random_clifford2(0, 1, rng)
        assert t.entropy(range(3)) == 0.0
        assert t.entropy([0, 1]) == pytest.approx(LN2)


def test_random_clifford_outcome_distribution():
    rng = np.random.default_rng(7)
    plus = 0
    n = 10_000
    for _ in range(n):
        t = init_z_polarized(2)
        t.random_clifford2(0, 1, rng)
        o, _ = t.measure_z(0, rng=rng)
        plus += o == 1
    assert abs(plus - n / 2) < 5 * math.sqrt(n) / 2


def test_measurement_examples():
    t = init_z_polarized(1)
    assert t.measure_z(0) == (1, False)
    for coin in (0, 1):
        t = init_z_polarized(1).h(0)
        o, r = t.measure_z(0, coin=coin)
        assert r and o == (1 - 2 * coin)
        assert t.stabilizers() == ["+Z" if o == 1 else "-Z"]
        assert t.measure_z(0) == (o, False)
    for coin in (0, 1):
        t = init_bell_reference(1, 1)
        a, _ = t.measure_z(0, coin=coin)
        b, r = t.measure_z(1)
        assert a == b and not r


def test_entropy_examples(rng):
    assert init_bell_reference(1, 1).entropy([0]) == pytest.approx(LN2)
    t = init_z_polarized(5)
    assert all(t.entropy(r) == 0 for r in all_regions(5))
    for _ in range(3):
        tab, gates = random_clifford_tableau(8, rng)
        st = DenseState.zeros(8)
        for a, b, lab in gates:
            st = oracle_apply_gate(st, clifford2_matrix(lab), (a, b))
        for r in all_regions(8):
            assert abs(tab.entropy(r) - oracle_entropy(st, r)) < 1e-8


def test_mutual_information_examples():
    t = init_bell_reference(1, 1)
    assert t.mutual_information([0], [1]) == pytest.approx(2 * LN2)
    assert ghz(3).mutual_information([0], [1]) == pytest.approx(LN2)
    assert init_z_polarized(4).tripartite_mi([0], [1], [2]) == 0.0
    assert ghz(4).tripartite_mi([0], [1], [2]) == pytest.approx(LN2)
    with pytest.raises(TableauError):
        t.mutual_information([0], [0, 1])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_pure_state_invariants(seed, n):
    rng = np.random.default_rng(seed)
    tab, _ = random_clifford_tableau(n, rng)
    for _ in range(n // 2):
        tab.measure_z(int(rng.integers(n)), rng=rng)
    tab.check_invariants()
    for _ in range(10):
        a = sorted(set(rng.choice(n, int(rng.integers(1, n)), replace=False).tolist()))
        rest = [q for q in range(n) if q not in a]
        s = tab.entropy_bits(a)
        assert 0 <= s <= len(a)
        assert s == tab.entropy_bits(rest)
    if n >= 3:
        a, b, c = [0], [1], list(range(2, n))
        assert tab.tripartite_mi(a, b, c) == pytest.approx(tab.tripartite_mi(c, b, a))


def test_mutual_information_monotone(rng):
    tab = init_bell_reference(8, 8)
    sched = build_schedule(CircuitParams(8, 2, Model.PWR2, 20, 0.2, 5))
    tab = run_trajectory(sched, tab).final
    R = reference_qubits(tab)
    for w in range(1, 8):
        assert tab.mutual_information_bits(list(range(w)), R) <= \
            tab.mutual_information_bits(list(range(w + 1)), R)


def test_trajectory_examples():
    sched = build_schedule(CircuitParams(8, 2, Model.PWR2, 10, 0.0, 1))
    res = run_trajectory(sched, init_z_polarized(8), {"S": lambda t: t.entropy(range(8))},
                         times=range(11))
    assert [v for _, v in res.series("S")] == [0.0] * 11
    res = run_trajectory(sched, init_bell_reference(8, 8), {"SR": reference_entropy},
                         times=range(11))
    assert all(v == pytest.approx(8 * LN2) for _, v in res.series("SR"))
    full = build_schedule(CircuitParams(8, 2, Model.PWR2, 3, 1.0, 1))
    res = run_trajectory(full, purification_setup(8, 3), {"SR": reference_entropy},
                         times=[1])
    assert res.series("SR") == [(1, 0.0)]
    with pytest.raises(TableauError):
        run_trajectory(sched, init_z_polarized(4))


@pytest.mark.parametrize("model", ["PWR2", "NN", "AA"])
def test_compiled_path_matches_layer_path(model):
    params = CircuitParams(32, 2, model, 40, 0.15, 77)
    sched = build_schedule(params)
    obs = {"tmi": tmi_observable(32), "SR": reference_entropy}
    fast = run_trajectory(sched, init_bell_reference(32, 32), obs, times=[5, 17, 40])
    slow = run_trajectory(sched, init_bell_reference(32, 32), obs, times=[5, 17, 40],
                          record=True)
    assert fast.rows == slow.rows
    assert np.array_equal(fast.final.sx, slow.final.sx)
    assert np.array_equal(fast.final.sr, slow.final.sr)


def test_trajectory_is_deterministic():
    params = CircuitParams(16, 3, Model.PWR2, 30, 0.3, 2024)
    a = run_trajectory(build_schedule(params), init_z_polarized(16), record=True)
    b = run_trajectory(build_schedule(params), init_z_polarized(16), record=True)
    assert a.record.entries == b.record.entries
    assert a.final.stabilizers() == b.final.stabilizers()


def test_untracked_signs_keep_entropies():
    params = CircuitParams(16, 2, Model.PWR2, 30, 0.3, 5)
    a = run_trajectory(build_schedule(params), init_bell_reference(16, 16)).final
    b = run_trajectory(build_schedule(params), init_bell_reference(16, 16, track_signs=False)).final
    for w in range(1, 16):
        assert a.entropy_bits(range(w)) == b.entropy_bits(range(w))


def test_purification_examples():
    tab = purification_setup(8, 1)
    assert reference_entropy(tab) == pytest.approx(LN2)
    assert purification_time(build_schedule(CircuitParams(8, 1, Model.PWR2, 5, 1.0, 2)), tab) == 1
    assert purification_time(build_schedule(CircuitParams(8, 1, Model.PWR2, 64, 0.0, 2)), tab) is None
    with pytest.raises(TableauError):
        purification_time(build_schedule(CircuitParams(8, 1, Model.PWR2, 4, 0.5)), init_z_polarized(8))


def _oracle_tau(n, params, rng):
    # dense Monte Carlo: Bell pair on qubit 0 + reference, NN Clifford scrambling, then the circuit
    st = bell_reference_state(n, 1)
    th = build_thermalizer(n, 4 * n, params.seed ^ 0x55)
    for t in range(1, 4 * n + 1):
        st = apply_schedule_layer(st, th, t)
    sched = build_schedule(params)
    for t in range(1, params.n_layers + 1):
        st = apply_schedule_layer(st, sched, t)
        for q in np.flatnonzero(sched.measurements(t)):
            _, st = oracle_measure_z(st, int(q), rng=rng)
        if oracle_entropy(st, [n]) < 1e-8:
            return t
    return None


def test_purification_time_against_oracle():
    n, reps = 8, 1000
    rng = np.random.default_rng(3)
    stab, dense = [], []
    for r in range(reps):
        params = CircuitParams(n, 1, Model.PWR2, 400, 0.5, 1000 + r)
        tab = purification_setup(n, params.seed ^ 0x55)
        stab.append(purification_time(build_schedule(params), tab))
        dense.append(_oracle_tau(n, params, rng))
    assert None not in stab and None not in dense
    a, b = np.array(stab, float), np.array(dense, float)
    se = math.sqrt(a.var(ddof=1) / reps + b.var(ddof=1) / reps)
    assert abs(a.mean() - b.mean()) < 3 * se
