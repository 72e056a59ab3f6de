import numpy as np
import pytest

from scrambler_lab.clifford2 import (
    GROUP_ORDER, SYMPLECTIC_ORDER, clifford_tables, clifford_word, compose,
    pauli_matrix, symplectic_part,
)
from scrambler_lab.oracle import clifford2_matrix


def test_group_size_and_distinct():
    outs, sgns = clifford_tables()
    assert outs.shape == sgns.shape == (GROUP_ORDER, 16)
    keys = {o.tobytes() + s.tobytes() for o, s in zip(outs, sgns)}
    assert len(keys) == GROUP_ORDER
    sym = {symplectic_part(o).tobytes() for o in outs}
    assert len(sym) == SYMPLECTIC_ORDER


def test_identity_fixes_paulis():
    outs, sgns = clifford_tables()
    assert np.array_equal(outs[0], np.arange(16)) and not sgns[0].any()
    assert clifford_word(0) == ()


def test_tables_are_permutations_fixing_identity():
    outs, _ = clifford_tables()
    assert np.all(outs[:, 0] == 0)
    assert np.all(np.sort(outs, axis=1) == np.arange(16))


@pytest.mark.parametrize("label", list(range(0, GROUP_ORDER, 97)) + [GROUP_ORDER - 1])
def test_tables_match_matrices(label):
    outs, sgns = clifford_tables()
    U = clifford2_matrix(label)
    for c in range(16):
        want = U @ pauli_matrix(c) @ U.conj().T
        got = pauli_matrix(int(outs[label, c])) * (-1 if sgns[label, c] else 1)
        assert np.allclose(want, got)


def test_compose_is_closed(rng):
    outs, sgns = clifford_tables()
    keys = {o.tobytes() + s.tobytes() for o, s in zip(outs, sgns)}
    for _ in range(200):
        i, j = rng.integers(GROUP_ORDER, size=2)
        o, s = compose((outs[i], sgns[i]), (outs[j], sgns[j]))
        assert o.tobytes() + s.tobytes() in keys
