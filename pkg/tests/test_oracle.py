import math

import numpy as np
import pytest

from scrambler_lab.oracle import (
    CNOT, H, Q, DenseState, OracleError, all_regions, bell_reference_state,
    clifford2_matrix, oracle_apply_gate, oracle_entropy, oracle_measure_z, oracle_renyi2,
    probability_zero,
)

from helpers import random_params, replay

LN2 = math.log(2.0)


def bell():
    return oracle_apply_gate(oracle_apply_gate(DenseState.zeros(2), H, 0), CNOT, (0, 1))


def test_gate_examples():
    st = DenseState.zeros(3)
    assert np.allclose(oracle_apply_gate(st, np.eye(4), (0, 2)).vector(), st.vector())
    assert np.allclose(oracle_apply_gate(DenseState.zeros(1), H, 0).vector(), [2**-0.5, 2**-0.5])
    assert np.allclose(oracle_apply_gate(DenseState.zeros(2), Q, (0, 1)).vector(),
                       np.array([1, 1, 1, -1]) / 2)


def test_gate_validation():
    with pytest.raises(OracleError):
        oracle_apply_gate(DenseState.zeros(2), np.ones((4, 4)), (0, 1))
    with pytest.raises(OracleError):
        oracle_apply_gate(DenseState.zeros(2), CNOT, (0, 0))
    with pytest.raises(OracleError):
        DenseState.zeros(13)


def test_measure_examples():
    o, st = oracle_measure_z(DenseState.zeros(1), 0)
    assert o == 1
    plus = oracle_apply_gate(DenseState.zeros(1), H, 0)
    o, st = oracle_measure_z(plus, 0, forced=-1)
    assert o == -1 and np.allclose(st.vector(), [0, 1])
    with pytest.raises(OracleError):
        oracle_measure_z(DenseState.zeros(1), 0, forced=-1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, st = oracle_measure_z(bell(), 0, rng=rng)
        b, _ = oracle_measure_z(st, 1, rng=rng)
        assert a == b


def test_entropy_examples(rng):
    assert abs(oracle_entropy(bell(), [0]) - LN2) < 1e-10
    assert abs(oracle_entropy(DenseState.zeros(3), [0, 2])) < 1e-10
    st = DenseState.zeros(6)
    for _ in range(20):
        a, b = rng.choice(6, 2, replace=False)
        st = oracle_apply_gate(st, clifford2_matrix(int(rng.integers(11520))), (a, b))
    for r in all_regions(6):
        s = oracle_entropy(st, r) / LN2
        assert abs(s - round(s)) < 1e-8
        assert abs(oracle_renyi2(st, r) - oracle_entropy(st, r)) < 1e-8


def test_bell_reference_state():
    st = bell_reference_state(3, 2)
    assert abs(oracle_entropy(st, [3, 4]) - 2 * LN2) < 1e-10
    assert abs(probability_zero(st, 2) - 1) < 1e-12


@pytest.mark.parametrize("seed", range(12))
def test_replay_matches(seed):
    params = random_params(np.random.default_rng(seed))
    assert replay(params) == dict(deterministic=0, coin=0, entropy=0, integer=0)
