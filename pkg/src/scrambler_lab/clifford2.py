"""The two-qubit Clifford group (modulo global phase) as Pauli conjugation tables.

A local Pauli on qubits (a, b) is coded as ``xa | za<<1 | xb<<2 | zb<<3`` with
x = z = 1 meaning Y.  A group element is a pair of length-16 arrays: the image
code of every Pauli and the sign acquired under conjugation.  The group is
enumerated once by breadth-first closure over {H_a, H_b, S_a, S_b, CZ_ab}.
"""

from __future__ import annotations

from collections import deque
from functools import lru_cache

import numpy as np

GROUP_ORDER = 11520
SYMPLECTIC_ORDER = 720


def _bits(code):
    return code & 1, (code >> 1) & 1, (code >> 2) & 1, (code >> 3) & 1


def _code(xa, za, xb, zb):
    return xa | (za << 1) | (xb << 2) | (zb << 3)


def _h(code, qubit):
    xa, za, xb, zb = _bits(code)
    if qubit == 0:
        return _code(za, xa, xb, zb), xa & za
    return _code(xa, za, zb, xb), xb & zb


def _s(code, qubit):
    xa, za, xb, zb = _bits(code)
    if qubit == 0:
        return _code(xa, za ^ xa, xb, zb), xa & za
    return _code(xa, za, xb, zb ^ xb), xb & zb


def _cz(code):
    xa, za, xb, zb = _bits(code)
    sign = xa & xb & (za ^ zb)
    return _code(xa, za ^ xb, xb, zb ^ xa), sign


def _generator_tables():
    gens = [
        lambda c: _h(c, 0),
        lambda c: _h(c, 1),
        lambda c: _s(c, 0),
        lambda c: _s(c, 1),
        _cz,
    ]
    tables = []
    for g in gens:
        out = np.zeros(16, dtype=np.uint8)
        sgn = np.zeros(16, dtype=np.uint8)
        for c in range(16):
            out[c], sgn[c] = g(c)
        tables.append((out, sgn))
    return tables


def compose(first, second):
    """Table of ``second`` applied after ``first``."""
    out1, sgn1 = first
    out2, sgn2 = second
    return out2[out1], sgn1 ^ sgn2[out1]


@lru_cache(maxsize=1)
def _enumerate():
    gens = _generator_tables()
    ident = (np.arange(16, dtype=np.uint8), np.zeros(16, dtype=np.uint8))
    seen = {ident[0].tobytes() + ident[1].tobytes(): (ident, ())}
    queue = deque([(ident, ())])
    while queue:
        elem, word = queue.popleft()
        for gi, g in enumerate(gens):
            new = compose(elem, g)
            key = new[0].tobytes() + new[1].tobytes()
            if key not in seen:
                seen[key] = (new, word + (gi,))
                queue.append(seen[key])
    elems = list(seen.values())
    outs = np.stack([e[0][0] for e in elems])
    sgns = np.stack([e[0][1] for e in elems])
    words = [e[1] for e in elems]
    return outs, sgns, words


def clifford_tables() -> tuple[np.ndarray, np.ndarray]:
    """All 11520 elements as ``(outs, signs)`` arrays of shape (11520, 16)."""
    outs, sgns, _ = _enumerate()
    return outs, sgns


def clifford_word(label: int) -> tuple[int, ...]:
    """Generator sequence (indices into H_a, H_b, S_a, S_b, CZ) producing element ``label``."""
    return _enumerate()[2][label]


def symplectic_part(out: np.ndarray) -> np.ndarray:
    """4x4 binary matrix whose columns are the images of Xa, Za, Xb, Zb."""
    cols = [out[1], out[2], out[4], out[8]]
    return np.array([[(c >> r) & 1 for c in cols] for r in range(4)], dtype=np.uint8)


def pauli_matrix(code: int) -> np.ndarray:
    """Dense 4x4 matrix of a coded two-qubit Pauli; qubit a is the high tensor factor."""
    xa, za, xb, zb = _bits(code)
    return np.kron(_single(xa, za), _single(xb, zb))


def _single(x, z):
    if x and z:
        return np.array([[0, -1j], [1j, 0]])
    if x:
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if z:
        return np.array([[1, 0], [0, -1]], dtype=complex)
    return np.eye(2, dtype=complex)
