"""Code properties of the mixed-phase steady state.

The system Q starts maximally entangled with a reference R (one reference
qubit per system qubit).  After the monitored evolution the remaining
entanglement with R counts logical qubits, and the smallest contiguous
window of Q that shares information with R bounds the contiguous distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from . import _kernels as K
from .circuit import CircuitParams, build_schedule
from .stabilizer import LN2, Tableau, init_bell_reference, reference_qubits, run_trajectory

NO_CODE = None
LOG2_3 = math.log2(3.0)


class CodeError(ValueError):
    pass


def code_rate(tab: Tableau, n_system: int | None = None) -> float:
    """r_code = S_R / (N ln 2)."""
    n = tab.n_system if n_system is None else n_system
    return tab.entropy_bits(reference_qubits(tab)) / n


@njit(cache=True)
def _insert(basis, used, vec, W):
    v = vec.copy()
    while True:
        piv = -1
        for w in range(W):
            if v[w] != 0:
                piv = 64 * w + K.lowest_bit(v[w])
                break
        if piv < 0:
            return 0
        if not used[piv]:
            used[piv] = True
            for w in range(W):
                basis[piv, w] = v[w]
            return 1
        for w in range(W):
            v[w] ^= basis[piv, w]


@njit(cache=True)
def _min_window(sx, sz, n_sys, ref, need_bits):
    """Smallest w such that some circular window of w system qubits has I(A,R) >= need_bits."""
    W = sx.shape[1]
    nbits = 64 * W
    base = np.zeros((nbits, W), dtype=np.uint64)
    base_used = np.zeros(nbits, dtype=np.bool_)
    r_rank = 0
    for q in ref:
        r_rank += _insert(base, base_used, sx[q], W)
        r_rank += _insert(base, base_used, sz[q], W)
    best = n_sys + 1
    ba = np.zeros((nbits, W), dtype=np.uint64)
    ua = np.zeros(nbits, dtype=np.bool_)
    bar = np.zeros((nbits, W), dtype=np.uint64)
    uar = np.zeros(nbits, dtype=np.bool_)
    for off in range(n_sys):
        ua[:] = False
        uar[:] = base_used
        bar[:, :] = base
        ra = 0
        rar = r_rank
        for w in range(1, best):
            q = (off + w - 1) % n_sys
            ra += _insert(ba, ua, sx[q], W)
            ra += _insert(ba, ua, sz[q], W)
            rar += _insert(bar, uar, sx[q], W)
            rar += _insert(bar, uar, sz[q], W)
            if ra + r_rank - rar >= need_bits:
                best = w
                break
    return best if best <= n_sys else -1


def contiguous_code_distance(tab: Tableau, threshold: float = LN2) -> int | None:
    """Smallest contiguous (circular) window size |A| with max over offsets I(A,R) >= threshold.

    Returns ``NO_CODE`` (None) when no window, not even the whole system, reaches it.
    """
    ref = np.asarray(reference_qubits(tab), dtype=np.int64)
    if ref.size == 0:
        raise CodeError("tableau has no reference qubits")
    need = max(1, math.ceil(threshold / LN2 - 1e-9))
    d = int(_min_window(tab.sx, tab.sz, tab.n_system, ref, need))
    return NO_CODE if d < 0 else d


def mutual_information_profile(tab: Tableau, offset: int = 0) -> np.ndarray:
    """I(A,R)/ln2 for windows A = offset..offset+w-1, w = 0..N."""
    N = tab.n_system
    R = reference_qubits(tab)
    out = np.zeros(N + 1, dtype=np.int64)
    for w in range(1, N + 1):
        A = [(offset + i) % N for i in range(w)]
        out[w] = tab.mutual_information_bits(A, R)
    return out


# ------------------------------------------------------------ GF(2) algebra


def _rref(m: np.ndarray) -> tuple[np.ndarray, list[int]]:
    m = (np.asarray(m, dtype=np.uint8) & 1).copy()
    rows, cols = m.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.flatnonzero(m[r:, c])
        if hit.size == 0:
            continue
        i = r + hit[0]
        m[[r, i]] = m[[i, r]]
        others = np.flatnonzero(m[:, c])
        others = others[others != r]
        m[others] ^= m[r]
        pivots.append(c)
        r += 1
    return m[:r], pivots


def gf2_rank(m: np.ndarray) -> int:
    m = np.atleast_2d(m)
    if m.size == 0:
        return 0
    return len(_rref(m)[1])


def gf2_nullspace(m: np.ndarray) -> np.ndarray:
    """Basis (rows) of {v : m v = 0} over GF(2)."""
    m = np.atleast_2d(np.asarray(m, dtype=np.uint8))
    cols = m.shape[1]
    red, piv = _rref(m)
    free = [c for c in range(cols) if c not in piv]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for r, p in enumerate(piv):
            basis[i, p] = red[r, f]
    return basis


def _symplectic_form(n: int) -> np.ndarray:
    lam = np.zeros((2 * n, 2 * n), dtype=np.uint8)
    lam[:n, n:] = np.eye(n, dtype=np.uint8)
    lam[n:, :n] = np.eye(n, dtype=np.uint8)
    return lam


def system_stabilizers(tab: Tableau) -> np.ndarray:
    """Generators (rows, x|z over the system) of stabilizers acting trivially on R."""
    x, z, _ = tab.dense()
    n, N = tab.n, tab.n_system
    gx, gz = x[n:].astype(np.uint8), z[n:].astype(np.uint8)
    on_r = np.hstack([gx[:, N:], gz[:, N:]])
    if on_r.shape[1] == 0:
        combos = np.eye(n, dtype=np.uint8)
    else:
        combos = gf2_nullspace(on_r.T)
    if combos.size == 0:
        return np.zeros((0, 2 * N), dtype=np.uint8)
    sq = (combos.astype(np.int64) @ np.hstack([gx[:, :N], gz[:, :N]]).astype(np.int64)) % 2
    red, _ = _rref(sq)
    return red


def localizable_error_count(tab: Tableau, region: Iterable[int]) -> int:
    """log2 of the number of undetectable errors localizable on ``region``, modulo S.

    dim{g in C(S_Q) : g restricted off the region lies in S_Q restricted off
    the region} - dim S_Q, with S_Q the system stabilizers trivial on R.
    """
    N = tab.n_system
    if N > 16:
        raise CodeError("localizable_error_count is meant for small systems (N <= 16)")
    A = sorted(set(int(a) for a in region))
    if any(not 0 <= a < N for a in A):
        raise CodeError("region outside the system")
    S = system_stabilizers(tab)
    dim_s = S.shape[0]
    lam = _symplectic_form(N)
    C = gf2_nullspace((S.astype(np.int64) @ lam % 2).astype(np.uint8)) if dim_s else np.eye(2 * N, dtype=np.uint8)
    units = np.zeros((2 * len(A), 2 * N), dtype=np.uint8)
    for i, a in enumerate(A):
        units[2 * i, a] = 1
        units[2 * i + 1, N + a] = 1
    V = np.vstack([S, units]) if dim_s else units
    dim_c, dim_v = gf2_rank(C), gf2_rank(V) if V.size else 0
    dim_sum = gf2_rank(np.vstack([C, V])) if V.size else dim_c
    return dim_c + dim_v - dim_sum - dim_s


# ------------------------------------------------------------ bounds


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


@dataclass(frozen=True)
class HammingBoundResult:
    w_over_n: float
    bound: float
    variant: str


def hamming_bound(w_over_n: float, variant: str = "all_errors", n: int | None = None) -> HammingBoundResult:
    """Quantum Hamming rate bound for errors of weight w = (w/N) N.

    ``all_errors``: 1 - x log2 3 - H(x), for 0 <= x < 1/2.
    ``contiguous``: 1 - x log2 3 - log2(N - w)/N, needs ``n``.
    """
    x = float(w_over_n)
    if variant == "all_errors":
        if not 0.0 <= x < 0.5:
            raise CodeError("all_errors bound needs 0 <= w/N < 1/2")
        b = 1.0 - x * LOG2_3 - binary_entropy(x)
    elif variant == "contiguous":
        if n is None or n < 1:
            raise CodeError("contiguous bound needs the system size n")
        if not 0.0 <= x < 1.0:
            raise CodeError("contiguous bound needs 0 <= w/N < 1")
        w = x * n
        b = 1.0 - x * LOG2_3 - math.log2(n - w) / n
    else:
        raise CodeError(f"unknown variant {variant!r}")
    return HammingBoundResult(x, b, variant)


# ------------------------------------------------------------ experiments


def code_state(params: CircuitParams, n_layers: int | None = None) -> Tableau:
    """Evolve N Bell pairs (system half) through the monitored circuit; default T = 8N."""
    T = 8 * params.n_qubits if n_layers is None else n_layers
    p = CircuitParams(params.n_qubits, params.k, params.model, T, params.meas_rate, params.seed)
    tab = init_bell_reference(p.n_qubits, p.n_qubits, track_signs=False)
    return run_trajectory(build_schedule(p), tab, copy=False).final


@dataclass
class CodeDiagnostics:
    model: str
    N: int
    k: int
    p: float
    r_code: float
    r_code_err: float
    d_code: float
    d_code_err: float
    n_traj: int
    n_no_code: int

    CSV_HEADER = ("model", "N", "k", "p", "r_code", "r_code_err", "d_code", "d_code_err",
                  "n_traj", "n_no_code")

    def csv_row(self) -> tuple:
        return tuple(getattr(self, name) for name in self.CSV_HEADER)


def _mean_err(vals: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(vals, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    if a.size == 1:
        return float(a[0]), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def summarize(model: str, N: int, k: int, p: float, rates: Sequence[float],
              distances: Sequence[int | None]) -> CodeDiagnostics:
    r, re = _mean_err(rates)
    good = [d for d in distances if d is not NO_CODE]
    d, de = _mean_err(good)
    return CodeDiagnostics(model, N, k, p, r, re, d, de, len(rates), len(distances) - len(good))
