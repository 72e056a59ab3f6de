"""Numba kernels for the qubit-major bit-packed stabilizer tableau.

Layout: ``x[q, w]`` bit ``b`` is set when tableau row ``64*w + b`` carries an X
(or Y) on qubit ``q``; ``z`` likewise.  Destabilizer and stabilizer halves live
in separate arrays (``dx, dz`` and ``sx, sz``), stabilizer signs in ``sr``.
Destabilizer signs carry no physical information and are not stored.

Every routine here is word-parallel across rows: gates touch two columns,
measurements sweep the columns once.
"""

import numpy as np
from numba import njit

from . import _rng

ONE = np.uint64(1)
ZERO = np.uint64(0)
ALL = np.uint64(0xFFFFFFFFFFFFFFFF)
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@njit(cache=True, inline="always")
def popcount(v):
    v = v - ((v >> ONE) & _M1)
    v = (v & _M2) + ((v >> np.uint64(2)) & _M2)
    v = (v + (v >> np.uint64(4))) & _M4
    return np.int64((v * _H01) >> np.uint64(56))


@njit(cache=True, inline="always")
def lowest_bit(v):
    """Index of the least significant set bit of a nonzero word."""
    idx = 0
    if v & np.uint64(0xFFFFFFFF) == ZERO:
        v >>= np.uint64(32)
        idx += 32
    if v & np.uint64(0xFFFF) == ZERO:
        v >>= np.uint64(16)
        idx += 16
    if v & np.uint64(0xFF) == ZERO:
        v >>= np.uint64(8)
        idx += 8
    if v & np.uint64(0xF) == ZERO:
        v >>= np.uint64(4)
        idx += 4
    if v & np.uint64(0x3) == ZERO:
        v >>= np.uint64(2)
        idx += 2
    if v & ONE == ZERO:
        idx += 1
    return idx


@njit(cache=True, inline="always")
def prefix_parity(v):
    """Bit b of the result is the parity of bits 0..b of ``v``."""
    v ^= v << ONE
    v ^= v << np.uint64(2)
    v ^= v << np.uint64(4)
    v ^= v << np.uint64(8)
    v ^= v << np.uint64(16)
    v ^= v << np.uint64(32)
    return v


# ---------------------------------------------------------------- gates


@njit(cache=True)
def gate_h(dx, dz, sx, sz, sr, a):
    for w in range(sx.shape[1]):
        t = dx[a, w]
        dx[a, w] = dz[a, w]
        dz[a, w] = t
        sr[w] ^= sx[a, w] & sz[a, w]
        t = sx[a, w]
        sx[a, w] = sz[a, w]
        sz[a, w] = t


@njit(cache=True)
def gate_s(dx, dz, sx, sz, sr, a):
    for w in range(sx.shape[1]):
        dz[a, w] ^= dx[a, w]
        sr[w] ^= sx[a, w] & sz[a, w]
        sz[a, w] ^= sx[a, w]


@njit(cache=True)
def gate_cz(dx, dz, sx, sz, sr, a, b):
    for w in range(sx.shape[1]):
        dz[a, w] ^= dx[b, w]
        dz[b, w] ^= dx[a, w]
        sr[w] ^= sx[a, w] & sx[b, w] & (sz[a, w] ^ sz[b, w])
        sz[a, w] ^= sx[b, w]
        sz[b, w] ^= sx[a, w]


@njit(cache=True)
def gate_cnot(dx, dz, sx, sz, sr, c, t):
    for w in range(sx.shape[1]):
        dx[t, w] ^= dx[c, w]
        dz[c, w] ^= dz[t, w]
        sr[w] ^= sx[c, w] & sz[t, w] & ~(sx[t, w] ^ sz[c, w])
        sx[t, w] ^= sx[c, w]
        sz[c, w] ^= sz[t, w]


@njit(cache=True)
def gate_q(dx, dz, sx, sz, sr, a, b):
    """CZ_ab H_a H_b (Hadamards act first)."""
    gate_h(dx, dz, sx, sz, sr, a)
    gate_h(dx, dz, sx, sz, sr, b)
    gate_cz(dx, dz, sx, sz, sr, a, b)


@njit(cache=True, inline="always")
def _table_word(xa, za, xb, zb, out, sgn):
    """Apply a 16-entry two-qubit Pauli map to one word of four columns."""
    nxa = ZERO
    nza = ZERO
    nxb = ZERO
    nzb = ZERO
    flip = ZERO
    for code in range(16):
        m = xa if code & 1 else ~xa
        m &= za if code & 2 else ~za
        m &= xb if code & 4 else ~xb
        m &= zb if code & 8 else ~zb
        if m == ZERO:
            continue
        o = out[code]
        if o & 1:
            nxa |= m
        if o & 2:
            nza |= m
        if o & 4:
            nxb |= m
        if o & 8:
            nzb |= m
        if sgn[code]:
            flip |= m
    return nxa, nza, nxb, nzb, flip


@njit(cache=True)
def gate_table(dx, dz, sx, sz, sr, a, b, out, sgn):
    for w in range(sx.shape[1]):
        nxa, nza, nxb, nzb, _ = _table_word(dx[a, w], dz[a, w], dx[b, w], dz[b, w], out, sgn)
        dx[a, w] = nxa
        dz[a, w] = nza
        dx[b, w] = nxb
        dz[b, w] = nzb
        nxa, nza, nxb, nzb, flip = _table_word(sx[a, w], sz[a, w], sx[b, w], sz[b, w], out, sgn)
        sx[a, w] = nxa
        sz[a, w] = nza
        sx[b, w] = nxb
        sz[b, w] = nzb
        sr[w] ^= flip


@njit(cache=True)
def layer_q(dx, dz, sx, sz, sr, pairs):
    for g in range(pairs.shape[0]):
        gate_q(dx, dz, sx, sz, sr, pairs[g, 0], pairs[g, 1])


@njit(cache=True)
def layer_table(dx, dz, sx, sz, sr, pairs, labels, outs, sgns):
    for g in range(pairs.shape[0]):
        lab = labels[g]
        gate_table(dx, dz, sx, sz, sr, pairs[g, 0], pairs[g, 1], outs[lab], sgns[lab])


@njit(cache=True)
def layer_s(dx, dz, sx, sz, sr, qubits):
    for i in range(qubits.shape[0]):
        gate_s(dx, dz, sx, sz, sr, qubits[i])


# ---------------------------------------------------------------- measurement


@njit(cache=True)
def _measure_random(dx, dz, sx, sz, sr, a, outcome, signs):
    n = sx.shape[0]
    W = sx.shape[1]
    # pivot: first stabilizer row anticommuting with Z_a
    p = -1
    for w in range(W):
        if sx[a, w] != ZERO:
            p = 64 * w + lowest_bit(sx[a, w])
            break
    wp = p >> 6
    bp = ONE << np.uint64(p & 63)
    mask_s = sx[a].copy()
    mask_s[wp] &= ~bp
    mask_d = dx[a].copy()
    c0 = np.zeros(W, dtype=np.uint64)
    c1 = np.zeros(W, dtype=np.uint64)
    for c in range(n):
        px = (sx[c, wp] & bp) != ZERO
        pz = (sz[c, wp] & bp) != ZERO
        if not px and not pz:
            continue
        for w in range(W):
            m = mask_s[w]
            if signs and m != ZERO:
                tx = sx[c, w]
                tz = sz[c, w]
                if px and pz:
                    pos = tz & ~tx
                    neg = tx & ~tz
                elif px:
                    pos = tz & tx
                    neg = tz & ~tx
                else:
                    pos = tx & ~tz
                    neg = tx & tz
                pos &= m
                neg &= m
                carry = c0[w] & pos
                c0[w] ^= pos
                c1[w] ^= carry
                borrow = ~c0[w] & neg
                c0[w] ^= neg
                c1[w] ^= borrow
            if px:
                sx[c, w] ^= m
                dx[c, w] ^= mask_d[w]
            if pz:
                sz[c, w] ^= m
                dz[c, w] ^= mask_d[w]
    if signs:
        rp = ALL if (sr[wp] & bp) != ZERO else ZERO
        for w in range(W):
            sr[w] ^= (c1[w] ^ rp) & mask_s[w]
    # destabilizer p <- old stabilizer p ; stabilizer p <- (-1)^outcome Z_a
    for c in range(n):
        dx[c, wp] = (dx[c, wp] & ~bp) | (sx[c, wp] & bp)
        dz[c, wp] = (dz[c, wp] & ~bp) | (sz[c, wp] & bp)
        sx[c, wp] &= ~bp
        sz[c, wp] &= ~bp
    sz[a, wp] |= bp
    if outcome:
        sr[wp] |= bp
    else:
        sr[wp] &= ~bp


@njit(cache=True)
def _deterministic_outcome(dx, sx, sz, sr, a):
    """Sign bit of the product of stabilizers selected by destabilizer X on ``a``."""
    n = sx.shape[0]
    W = sx.shape[1]
    sel = dx[a]
    e = 0
    for c in range(n):
        carry = ZERO
        nxz = 0
        cross = 0
        px = 0
        pz = 0
        for w in range(W):
            xs = sx[c, w] & sel[w]
            zs = sz[c, w] & sel[w]
            if xs == ZERO and zs == ZERO:
                continue
            nxz += popcount(xs & zs)
            excl = prefix_parity(zs) ^ zs
            if carry != ZERO:
                excl = ~excl
            cross += popcount(xs & excl)
            cz = popcount(zs) & 1
            if cz:
                carry ^= ONE
            px += popcount(xs)
            pz += cz
        e += nxz + 2 * cross - (px & 1) * (pz & 1)
    rs = 0
    for w in range(W):
        rs += popcount(sr[w] & sel[w])
    e = e % 4
    return ((e // 2) + rs) & 1


@njit(cache=True)
def measure(dx, dz, sx, sz, sr, a, coin, signs):
    """Projective Z measurement of qubit ``a``.

    Returns ``(outcome_bit, was_random)``; the eigenvalue is (-1)**outcome_bit.
    Without sign tracking deterministic outcomes are reported as 0.
    """
    W = sx.shape[1]
    anti = False
    for w in range(W):
        if sx[a, w] != ZERO:
            anti = True
            break
    if anti:
        _measure_random(dx, dz, sx, sz, sr, a, coin, signs)
        return coin, True
    if not signs:
        return 0, False
    return _deterministic_outcome(dx, sx, sz, sr, a), False


@njit(cache=True)
def measure_many(dx, dz, sx, sz, sr, qubits, coins, signs, outcomes, randoms):
    for i in range(qubits.shape[0]):
        o, r = measure(dx, dz, sx, sz, sr, qubits[i], coins[i], signs)
        outcomes[i] = o
        randoms[i] = r


# ---------------------------------------------------------------- rank / entropy


@njit(cache=True)
def rank_of_vectors(vecs):
    """GF(2) rank of the rows of a packed (m, W) matrix (copied)."""
    m = vecs.shape[0]
    W = vecs.shape[1]
    nbits = 64 * W
    basis = np.zeros((nbits, W), dtype=np.uint64)
    used = np.zeros(nbits, dtype=np.bool_)
    v = np.empty(W, dtype=np.uint64)
    rank = 0
    for i in range(m):
        for w in range(W):
            v[w] = vecs[i, w]
        while True:
            piv = -1
            for w in range(W):
                if v[w] != ZERO:
                    piv = 64 * w + lowest_bit(v[w])
                    break
            if piv < 0:
                break
            if not used[piv]:
                used[piv] = True
                for w in range(W):
                    basis[piv, w] = v[w]
                rank += 1
                break
            for w in range(piv >> 6, W):
                v[w] ^= basis[piv, w]
        if rank == nbits:
            break
    return rank


@njit(cache=True)
def region_rank(sx, sz, region):
    """Rank of the stabilizer rows restricted to the X and Z columns of ``region``."""
    W = sx.shape[1]
    k = region.shape[0]
    vecs = np.empty((2 * k, W), dtype=np.uint64)
    for i in range(k):
        q = region[i]
        for w in range(W):
            vecs[2 * i, w] = sx[q, w]
            vecs[2 * i + 1, w] = sz[q, w]
    return rank_of_vectors(vecs)


@njit(cache=True)
def contiguous_window_ranks(sx, sz, qubits, extra, size):
    """Region ranks of every circular window of ``size`` consecutive entries of ``qubits``.

    ``extra`` qubits (may be empty) are appended to every window.
    """
    n_sys = qubits.shape[0]
    out = np.empty(n_sys, dtype=np.int64)
    region = np.empty(size + extra.shape[0], dtype=np.int64)
    for e in range(extra.shape[0]):
        region[size + e] = extra[e]
    for off in range(n_sys):
        for i in range(size):
            region[i] = qubits[(off + i) % n_sys]
        out[off] = region_rank(sx, sz, region)
    return out


# ---------------------------------------------------------------- whole runs


@njit(cache=True)
def run_layers(dx, dz, sx, sz, sr, pairs_stack, phase_flags, clifford_gates, outs, sgns,
               key_meas, key_out, key_gate, p, t_first, t_last, signs, ref, stack_offset):
    """Walk layers ``t_first..t_last`` of a schedule with a fixed period of layers.

    Layer t uses ``pairs_stack[(t-1) % period]``, or ``pairs_stack[t - stack_offset]``
    when ``stack_offset >= 0`` (explicit per-layer pairs, e.g. AA matchings).
    Measurement masks, outcome coins and Clifford labels are the stateless
    hashes used by the schedule itself.
    If ``ref`` is nonempty, returns the first layer after which the region
    ``ref`` is pure, else -1.
    """
    n_sys = pairs_stack.shape[1] * 2
    period = pairs_stack.shape[0]
    n_labels = outs.shape[0]
    for t in range(t_first, t_last + 1):
        idx = (t - 1) % period if stack_offset < 0 else t - stack_offset
        pairs = pairs_stack[idx]
        if clifford_gates:
            for g in range(pairs.shape[0]):
                lab = np.int64(_rng.uniform(key_gate, t, g) * n_labels)
                gate_table(dx, dz, sx, sz, sr, pairs[g, 0], pairs[g, 1], outs[lab], sgns[lab])
        else:
            for g in range(pairs.shape[0]):
                gate_q(dx, dz, sx, sz, sr, pairs[g, 0], pairs[g, 1])
            if phase_flags[idx]:
                for q in range(n_sys):
                    gate_s(dx, dz, sx, sz, sr, q)
        if p > 0.0:
            for q in range(n_sys):
                if p >= 1.0 or _rng.uniform(key_meas, t, q) < p:
                    coin = np.uint8(_rng.hash_u64(key_out, t, q) >> np.uint64(63))
                    measure(dx, dz, sx, sz, sr, q, coin, signs)
        if ref.shape[0] > 0:
            if region_rank(sx, sz, ref) == ref.shape[0]:
                return t
    return -1
