"""Bond-percolation picture of Haar-random monitored circuits.

Each gate becomes a vertex; each qubit worldline segment between consecutive
gates becomes a bond that a measurement cuts.  Bonds are kept with
probability ``q = 1 - p``.  A Newman-Ziff sweep inserts cuttable bonds one by
one in random order, recording the largest cluster after every insertion;
binomial convolution turns those microcanonical numbers into curves in ``p``.

Cluster size counts gate vertices only.  Each qubit has its own virtual
source and sink vertex (weight zero) so boundaries never merge clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _rng
from .circuit import CircuitParams, CircuitSchedule, Model, build_schedule

TRUNCATION = 1e-16
OBSERVABLES = ("c_max", "c_max2", "c_max4", "spanning")


class PercolationError(ValueError):
    pass


@dataclass(frozen=True)
class PercolationNetwork:
    n_qubits: int
    n_layers: int
    n_gates: int
    bonds: np.ndarray  # (n_bonds, 2) int64 vertex ids
    cuttable: np.ndarray  # (n_bonds,) bool
    model: str = "PWR2"
    k: int = 1

    @property
    def n_vertices(self) -> int:
        return self.n_gates + 2 * self.n_qubits

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @property
    def n_cuttable(self) -> int:
        return int(self.cuttable.sum())

    @property
    def input_bonds(self) -> np.ndarray:
        return np.flatnonzero(~self.cuttable)

    @property
    def output_bonds(self) -> np.ndarray:
        return np.arange(self.n_bonds - self.n_qubits, self.n_bonds)

    def source(self, q: int) -> int:
        return self.n_gates + q

    def sink(self, q: int) -> int:
        return self.n_gates + self.n_qubits + q

    def weights(self) -> np.ndarray:
        w = np.zeros(self.n_vertices, dtype=np.int64)
        w[: self.n_gates] = 1
        return w

    def degrees(self) -> np.ndarray:
        return np.bincount(self.bonds.ravel(), minlength=self.n_vertices)


def build_network(schedule: CircuitSchedule) -> PercolationNetwork:
    """Percolation network of ``schedule`` (phase layers do not change topology).

    Bond order: the N input bonds, then for every layer t the N segments
    leaving layer t (those after layer T end on the sinks).
    """
    N, T = schedule.n_qubits, schedule.n_layers
    half = N // 2
    n_gates = half * T
    sources = n_gates + np.arange(N)
    sinks = n_gates + N + np.arange(N)
    bonds = np.empty((N * (T + 1), 2), dtype=np.int64)
    gate_of = np.empty(N, dtype=np.int64)
    prev = sources.copy()
    for t in range(1, T + 1):
        pairs = np.asarray(schedule.pairs_at(t), dtype=np.int64)
        if pairs.shape != (half, 2) or np.unique(pairs).size != N:
            raise PercolationError(f"layer {t} is not a perfect matching")
        ids = (t - 1) * half + np.arange(half)
        gate_of[pairs[:, 0]] = ids
        gate_of[pairs[:, 1]] = ids
        row = (t - 1) * N
        bonds[row : row + N, 0] = prev
        bonds[row : row + N, 1] = gate_of
        prev = gate_of.copy()
    bonds[T * N :, 0] = prev
    bonds[T * N :, 1] = sinks
    cuttable = np.ones(len(bonds), dtype=bool)
    cuttable[:N] = False
    return PercolationNetwork(
        N, T, n_gates, bonds, cuttable, model=schedule.params.model.value, k=schedule.params.k
    )


def network_for(model: str | Model, n_qubits: int, k: int = 1, n_layers: int | None = None,
                seed: int = 0) -> PercolationNetwork:
    """Network of a (model, N, k) circuit with T = N layers by default."""
    params = CircuitParams(n_qubits, k, Model(model), n_layers or n_qubits, 0.0, seed)
    return build_network(build_schedule(params))


# ------------------------------------------------------------------ weights


def binomial_window(M: int, q: float) -> tuple[int, np.ndarray]:
    """Normalized binomial weights B(m; M, q) as ``(m_first, weights)``.

    Built outward from m = floor(qM) with the ratio recurrence (no factorials)
    and truncated where the unnormalized weight falls below 1e-16.
    """
    if not 0.0 <= q <= 1.0:
        raise PercolationError(f"occupation {q} outside [0, 1]")
    if M == 0 or q == 0.0:
        return 0, np.ones(1)
    if q == 1.0:
        return M, np.ones(1)
    m0 = min(int(math.floor(q * M)), M)
    odds = q / (1.0 - q)
    up = [1.0]
    b, m = 1.0, m0
    while m < M:
        b *= (M - m) / (m + 1) * odds
        if b < TRUNCATION:
            break
        up.append(b)
        m += 1
    down = []
    b, m = 1.0, m0
    while m > 0:
        b *= m / (M - m + 1) / odds
        if b < TRUNCATION:
            break
        down.append(b)
        m -= 1
    w = np.array(down[::-1] + up)
    return m0 - len(down), w / w.sum()


def _grid_windows(M: int, p_grid: np.ndarray):
    starts = np.empty(len(p_grid), dtype=np.int64)
    offsets = np.zeros(len(p_grid) + 1, dtype=np.int64)
    chunks = []
    for g, p in enumerate(p_grid):
        s, w = binomial_window(M, 1.0 - float(p))
        starts[g] = s
        offsets[g + 1] = offsets[g] + len(w)
        chunks.append(w)
    return starts, offsets, np.concatenate(chunks)


def _check_grid(p_grid) -> np.ndarray:
    grid = np.asarray(p_grid, dtype=float).ravel()
    if grid.size == 0:
        raise PercolationError("empty p grid")
    if np.any((grid < 0) | (grid > 1)):
        raise PercolationError("p values must lie in [0, 1]")
    return grid


# ------------------------------------------------------------------ kernels


@njit(cache=True, inline="always")
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _sweep(u, v, n_fixed, n_vertices, n_gates, n_qubits, key, r_first, n_real, starts,
           offsets, wts, micro, samples):
    """Newman-Ziff over ``n_real`` realizations.

    micro[0..3, m] accumulates sums of C, C^2, C^4 and spanning; samples[r, j, g]
    holds realization r's convolved value of observable j at grid point g.
    """
    n_bonds = u.shape[0]
    M = n_bonds - n_fixed
    parent = np.empty(n_vertices, dtype=np.int32)
    count = np.empty(n_vertices, dtype=np.int32)
    weight = np.empty(n_vertices, dtype=np.int32)
    flags = np.empty(n_vertices, dtype=np.uint8)  # 1: holds a source, 2: holds a sink
    order = np.empty(M, dtype=np.int32)
    cm = np.empty(M + 1, dtype=np.float64)
    sp = np.empty(M + 1, dtype=np.float64)
    n_grid = starts.shape[0]
    for r in range(n_real):
        for x in range(n_vertices):
            parent[x] = x
            count[x] = 1
            weight[x] = 1 if x < n_gates else 0
            flags[x] = 0
        for q in range(n_qubits):
            flags[n_gates + q] = 1
            flags[n_gates + n_qubits + q] = 2
        cmax = 1 if n_gates > 0 else 0
        spanning = False
        for i in range(M):
            j = np.int64(_rng.uniform(key, r_first + r, i) * (i + 1))
            order[i] = order[j]
            order[j] = n_fixed + i
        for m in range(-n_fixed, M + 1):
            if m == 0:
                cm[0] = cmax
                sp[0] = 1.0 if spanning else 0.0
            if m == M:
                break
            b = m + n_fixed if m < 0 else order[m]
            a = _find(parent, u[b])
            c = _find(parent, v[b])
            if a != c:
                if count[a] < count[c]:
                    a, c = c, a
                parent[c] = a
                count[a] += count[c]
                weight[a] += weight[c]
                flags[a] |= flags[c]
                if weight[a] > cmax:
                    cmax = weight[a]
                if flags[a] == 3:
                    spanning = True
            if m >= 0:
                cm[m + 1] = cmax
                sp[m + 1] = 1.0 if spanning else 0.0
        for m in range(M + 1):
            c1 = cm[m]
            c2 = c1 * c1
            micro[0, m] += c1
            micro[1, m] += c2
            micro[2, m] += c2 * c2
            micro[3, m] += sp[m]
        for g in range(n_grid):
            s1 = 0.0
            s2 = 0.0
            s4 = 0.0
            ss = 0.0
            for o in range(offsets[g], offsets[g + 1]):
                m = starts[g] + o - offsets[g]
                w = wts[o]
                c1 = cm[m]
                c2 = c1 * c1
                s1 += w * c1
                s2 += w * c2
                s4 += w * c2 * c2
                ss += w * sp[m]
            samples[r, 0, g] = s1
            samples[r, 1, g] = s2
            samples[r, 2, g] = s4
            samples[r, 3, g] = ss


@njit(cache=True)
def _direct(u, v, cuttable, n_vertices, n_gates, n_qubits, key, n_real, p, out):
    n_bonds = u.shape[0]
    parent = np.empty(n_vertices, dtype=np.int32)
    count = np.empty(n_vertices, dtype=np.int32)
    weight = np.empty(n_vertices, dtype=np.int32)
    flags = np.empty(n_vertices, dtype=np.uint8)
    for r in range(n_real):
        for x in range(n_vertices):
            parent[x] = x
            count[x] = 1
            weight[x] = 1 if x < n_gates else 0
            flags[x] = 0
        for q in range(n_qubits):
            flags[n_gates + q] = 1
            flags[n_gates + n_qubits + q] = 2
        cmax = 1 if n_gates > 0 else 0
        spanning = False
        for b in range(n_bonds):
            if cuttable[b] and _rng.uniform(key, r, b) < p:
                continue
            a = _find(parent, u[b])
            c = _find(parent, v[b])
            if a != c:
                if count[a] < count[c]:
                    a, c = c, a
                parent[c] = a
                count[a] += count[c]
                weight[a] += weight[c]
                flags[a] |= flags[c]
                if weight[a] > cmax:
                    cmax = weight[a]
                if flags[a] == 3:
                    spanning = True
        c1 = np.float64(cmax)
        out[r, 0] = c1
        out[r, 1] = c1 * c1
        out[r, 2] = c1 ** 4
        out[r, 3] = 1.0 if spanning else 0.0


# ------------------------------------------------------------------ sweep


@dataclass
class SweepResult:
    """Microcanonical moments per bond count plus per-realization canonical samples."""

    n_cuttable: int
    n_realizations: int
    micro_sums: np.ndarray  # (4, M + 1): sums of C, C^2, C^4, spanning
    p_grid: np.ndarray
    samples: np.ndarray  # (R, 4, G)
    meta: dict = field(default_factory=dict)

    def micro_mean(self, observable: str = "c_max") -> np.ndarray:
        return self.micro_sums[OBSERVABLES.index(observable)] / self.n_realizations


def _sweep_key(seed: int, stream: int = 0x4E5A) -> np.uint64:
    return np.uint64(_rng.stream_key(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)))


def newman_ziff_sweep(network: PercolationNetwork, n_realizations: int, seed: int,
                      p_grid=None, first: int = 0) -> SweepResult:
    """Run ``n_realizations`` independent Newman-Ziff sweeps over the cuttable bonds.

    Realization ``r`` depends only on ``(seed, r)``; ``first`` shifts the
    realization indices so a long run can be split into chunks.  ``p_grid``
    fixes the measurement rates at which per-realization canonical samples
    are kept (default: 101 points on [0, 1]).
    """
    if n_realizations < 1:
        raise PercolationError("need at least one realization")
    grid = _check_grid(np.linspace(0, 1, 101) if p_grid is None else p_grid)
    fixed = ~network.cuttable
    order = np.concatenate([np.flatnonzero(fixed), np.flatnonzero(~fixed)])
    u = network.bonds[order, 0].astype(np.int32)
    v = network.bonds[order, 1].astype(np.int32)
    n_fixed = int(fixed.sum())
    M = network.n_bonds - n_fixed
    starts, offsets, wts = _grid_windows(M, grid)
    micro = np.zeros((4, M + 1))
    samples = np.zeros((n_realizations, 4, grid.size))
    _sweep(u, v, n_fixed, network.n_vertices, network.n_gates, network.n_qubits,
           _sweep_key(seed), first, n_realizations, starts, offsets, wts, micro, samples)
    meta = {"model": network.model, "N": network.n_qubits, "k": network.k,
            "T": network.n_layers, "seed": seed}
    return SweepResult(M, n_realizations, micro, grid, samples, meta)


def merge_sweeps(parts: list[SweepResult]) -> SweepResult:
    """Concatenate sweeps of disjoint realization chunks (in the given order)."""
    if not parts:
        raise PercolationError("nothing to merge")
    head = parts[0]
    for s in parts[1:]:
        if s.n_cuttable != head.n_cuttable or not _grid_matches(head, s.p_grid):
            raise PercolationError("sweeps differ in network or grid")
    micro = np.zeros_like(head.micro_sums)
    for s in parts:
        micro += s.micro_sums
    return SweepResult(head.n_cuttable, sum(s.n_realizations for s in parts), micro,
                       head.p_grid, np.concatenate([s.samples for s in parts]), dict(head.meta))


def direct_monte_carlo(network: PercolationNetwork, p: float, n_realizations: int,
                       seed: int) -> np.ndarray:
    """Fixed-p check: cut each cuttable bond independently with probability ``p``.

    Returns an (R, 4) array of C, C^2, C^4 and spanning per realization.
    """
    out = np.zeros((n_realizations, 4))
    _direct(network.bonds[:, 0].astype(np.int32), network.bonds[:, 1].astype(np.int32),
            network.cuttable,
            network.n_vertices, network.n_gates, network.n_qubits,
            _sweep_key(seed, 0x4443), n_realizations, float(p), out)
    return out


# ------------------------------------------------------------------ curves


@dataclass
class CanonicalCurve:
    p: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    observable: str = "c_max"
    n_real: int = 0
    meta: dict = field(default_factory=dict)

    def csv_rows(self):
        """Rows in the ``model,N,k,observable,p,value,stderr,n_real`` schema."""
        m = self.meta
        for p, v, e in zip(self.p, self.value, self.stderr):
            yield (m.get("model", ""), m.get("N", ""), m.get("k", ""), self.observable,
                   float(p), float(v), float(e), self.n_real)


def _sem(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1) / math.sqrt(n)


def _grid_matches(sweep: SweepResult, grid: np.ndarray) -> bool:
    return grid.shape == sweep.p_grid.shape and np.allclose(grid, sweep.p_grid, atol=0, rtol=0)


def convolve_canonical(source, p_grid, observable: str = "c_max") -> CanonicalCurve:
    """Canonical average Q(p) = sum_m B(m; M, 1-p) Q_m.

    ``source`` is either a SweepResult or a plain microcanonical array
    ``Q_0..Q_M``.  Standard errors come from the realization scatter when the
    sweep kept samples on this grid; they are NaN otherwise (zero for arrays).
    """
    grid = _check_grid(p_grid)
    if isinstance(source, SweepResult):
        j = OBSERVABLES.index(observable)
        if _grid_matches(source, grid):
            x = source.samples[:, j, :]
            return CanonicalCurve(grid, x.mean(axis=0), _sem(x), observable,
                                  source.n_realizations, dict(source.meta))
        micro = source.micro_mean(observable)
        err = np.full(grid.size, np.nan)
        n_real, meta = source.n_realizations, dict(source.meta)
    else:
        micro = np.asarray(source, dtype=float)
        err = np.zeros(grid.size)
        n_real, meta = 0, {}
    M = len(micro) - 1
    vals = np.empty(grid.size)
    for g, p in enumerate(grid):
        s, w = binomial_window(M, 1.0 - p)
        vals[g] = float(np.dot(w, micro[s : s + len(w)]))
    return CanonicalCurve(grid, vals, err, observable, n_real, meta)


def binder_from_moments(c2: np.ndarray, c4: np.ndarray) -> np.ndarray:
    c2 = np.asarray(c2, dtype=float)
    if np.any(c2 == 0):
        raise PercolationError("zero second moment")
    return 0.5 * (3.0 - np.asarray(c4, dtype=float) / c2**2)


def binder_cumulant(sweep: SweepResult, p_grid=None) -> CanonicalCurve:
    """b(p) = (3 - <C^4>/<C^2>^2)/2 with delta-method errors from realization scatter."""
    grid = sweep.p_grid if p_grid is None else _check_grid(p_grid)
    if not _grid_matches(sweep, grid):
        c2 = convolve_canonical(sweep, grid, "c_max2").value
        c4 = convolve_canonical(sweep, grid, "c_max4").value
        return CanonicalCurve(grid, binder_from_moments(c2, c4), np.full(grid.size, np.nan),
                              "binder", sweep.n_realizations, dict(sweep.meta))
    x2 = sweep.samples[:, 1, :]
    x4 = sweep.samples[:, 2, :]
    A, B = x4.mean(axis=0), x2.mean(axis=0)
    b = binder_from_moments(B, A)
    R = sweep.n_realizations
    if R > 1:
        gA = -0.5 / B**2
        gB = A / B**3
        dA, dB = x4 - A, x2 - B
        var = (gA**2 * (dA**2).sum(0) + gB**2 * (dB**2).sum(0)
               + 2 * gA * gB * (dA * dB).sum(0)) / (R - 1) / R
        err = np.sqrt(np.maximum(var, 0.0))
    else:
        err = np.zeros(grid.size)
    return CanonicalCurve(grid, b, err, "binder", R, dict(sweep.meta))


def susceptibility(sweep: SweepResult, p_grid=None) -> CanonicalCurve:
    """chi(p) = <C^2> - <C>^2 of the largest cluster, errors by the delta method."""
    grid = sweep.p_grid if p_grid is None else _check_grid(p_grid)
    if not _grid_matches(sweep, grid):
        c1 = convolve_canonical(sweep, grid, "c_max").value
        c2 = convolve_canonical(sweep, grid, "c_max2").value
        return CanonicalCurve(grid, np.maximum(c2 - c1**2, 0.0), np.full(grid.size, np.nan),
                              "chi", sweep.n_realizations, dict(sweep.meta))
    x1 = sweep.samples[:, 0, :]
    x2 = sweep.samples[:, 1, :]
    m1, m2 = x1.mean(0), x2.mean(0)
    chi = np.maximum(m2 - m1**2, 0.0)
    R = sweep.n_realizations
    if R > 1:
        d = (x2 - m2) - 2 * m1 * (x1 - m1)
        err = np.sqrt((d**2).sum(0) / (R - 1) / R)
    else:
        err = np.zeros(grid.size)
    return CanonicalCurve(grid, chi, err, "chi", R, dict(sweep.meta))


def spanning_probability(sweep: SweepResult, p_grid=None) -> CanonicalCurve:
    grid = sweep.p_grid if p_grid is None else _check_grid(p_grid)
    curve = convolve_canonical(sweep, grid, "spanning")
    curve.observable = "spanning"
    return curve


@dataclass(frozen=True)
class Peak:
    p: float
    value: float
    flat: bool


def curve_peak(curve: CanonicalCurve, half_width: int = 2) -> Peak:
    """Peak of a curve from a quadratic fit around its grid maximum.

    ``flat`` is set when the curve has no interior maximum with negative curvature.
    """
    y = np.asarray(curve.value, dtype=float)
    x = np.asarray(curve.p, dtype=float)
    i = int(np.argmax(y))
    if np.ptp(y) == 0 or i == 0 or i == len(y) - 1:
        return Peak(float(x[i]), float(y[i]), True)
    lo, hi = max(0, i - half_width), min(len(y), i + half_width + 1)
    a, b, c = np.polyfit(x[lo:hi] - x[i], y[lo:hi], 2)
    if a >= 0:
        return Peak(float(x[i]), float(y[i]), True)
    dx = float(np.clip(-b / (2 * a), x[lo] - x[i], x[hi - 1] - x[i]))
    return Peak(float(x[i] + dx), float(c + b * dx + a * dx * dx), False)


def value_at(curve: CanonicalCurve, p: float, half_width: int = 2) -> tuple[float, float]:
    """Quadratic interpolation of a curve at ``p`` with the nearest grid point's error."""
    x, y = curve.p, curve.value
    i = int(np.argmin(np.abs(x - p)))
    lo, hi = max(0, i - half_width), min(len(y), i + half_width + 1)
    coef = np.polyfit(x[lo:hi] - p, y[lo:hi], min(2, hi - lo - 1))
    return float(coef[-1]), float(curve.stderr[i])


CSV_HEADER = ("model", "N", "k", "observable", "p", "value", "stderr", "n_real")
