"""Finite-size scaling: curve crossings, scaling collapse and power-law fits.

Collapse ansatz tags:

* ``standard``        value = f((p - p_c) N^(1/nu))
* ``dynamic``         value = N^z f((p - p_c) N^(1/nu))
* ``log_normalized``  value / log2 N = N^z f((p - p_c) N^(1/nu))
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize

ANSATZE = ("standard", "dynamic", "log_normalized")
DEFAULT_BOOT = 5000


class AnalysisError(ValueError):
    pass


@dataclass
class ObservableCurve:
    N: int
    p: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    k: int = 1
    model: str = "PWR2"
    observable: str = ""

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.stderr = np.broadcast_to(np.asarray(self.stderr, dtype=float), self.p.shape).copy()
        if not (self.p.shape == self.value.shape == self.stderr.shape) or self.p.ndim != 1:
            raise AnalysisError("p, value and stderr must be 1-d arrays of equal length")
        if self.p.size < 2:
            raise AnalysisError("a curve needs at least two points")
        if np.any(np.diff(self.p) <= 0):
            raise AnalysisError("p must be strictly increasing")
        if np.any(~np.isfinite(self.value)) or np.any(~(self.stderr >= 0)):
            raise AnalysisError("values must be finite and stderr nonnegative")

    def window(self, lo: float, hi: float) -> "ObservableCurve":
        keep = (self.p >= lo) & (self.p <= hi)
        return ObservableCurve(self.N, self.p[keep], self.value[keep], self.stderr[keep],
                               self.k, self.model, self.observable)

    @classmethod
    def from_canonical(cls, curve, N: int | None = None, k: int | None = None,
                       model: str | None = None) -> "ObservableCurve":
        m = curve.meta
        return cls(N or m["N"], curve.p, curve.value, curve.stderr,
                   k or m.get("k", 1), model or m.get("model", "PWR2"), curve.observable)


def filter_sizes(curves: Iterable[ObservableCurve], k: int, strict: bool = False):
    """Keep N > 2^k (or N >= 2^(k+2) with ``strict``)."""
    out = []
    for c in curves:
        ok = c.N >= 2 ** (k + 2) if strict else c.N > 2**k
        if ok:
            out.append(c)
    return out


def _by_size(curves: Sequence[ObservableCurve]) -> list[ObservableCurve]:
    curves = sorted(curves, key=lambda c: c.N)
    sizes = [c.N for c in curves]
    if len(set(sizes)) != len(sizes):
        raise AnalysisError("curves must have distinct system sizes")
    return curves


# ------------------------------------------------------------------ crossings


@dataclass
class CrossingResult:
    p_c: float
    error: float
    pairs: dict = field(default_factory=dict)  # (N1, N2) -> (mean, std)
    n_boot: int = 0
    n_failed: int = 0


def _roots(fa, fb, lo, hi, xs):
    grid = np.unique(np.concatenate([[lo, hi], xs[(xs > lo) & (xs < hi)]]))
    fine = np.linspace(lo, hi, 8 * len(grid) + 1)
    grid = np.unique(np.concatenate([grid, fine]))
    d = fa(grid) - fb(grid)
    out = []
    for i in range(len(grid) - 1):
        if d[i] == 0.0:
            out.append(grid[i])
        elif d[i] * d[i + 1] < 0:
            out.append(brentq(lambda x: float(fa(x) - fb(x)), grid[i], grid[i + 1], xtol=1e-12))
    if d[-1] == 0.0:
        out.append(grid[-1])
    return out


def _pair_root(a, b, ya, yb, anchor=None, branch=None):
    lo, hi = max(a.p[0], b.p[0]), min(a.p[-1], b.p[-1])
    if lo >= hi:
        raise AnalysisError(f"curves N={a.N} and N={b.N} do not overlap in p")
    fa, fb = PchipInterpolator(a.p, ya), PchipInterpolator(b.p, yb)
    roots = _roots(fa, fb, lo, hi, np.concatenate([a.p, b.p]))
    if branch is not None:
        sign = -1.0 if branch == "decreasing" else 1.0
        da, db = fa.derivative(), fb.derivative()
        roots = [r for r in roots if sign * float(da(r) + db(r)) > 0]
    if not roots:
        return None
    if anchor is not None:
        return min(roots, key=lambda r: abs(r - anchor))
    if len(roots) == 1:
        return roots[0]
    # several crossings: keep the most transversal one
    da, db = fa.derivative(), fb.derivative()
    return max(roots, key=lambda r: abs(float(da(r) - db(r))))


def crossing_point(curves: Sequence[ObservableCurve], n_boot: int = DEFAULT_BOOT,
                   seed: int = 0, branch: str | None = None) -> CrossingResult:
    """Average crossing of consecutive-size curves with Gaussian-noise bootstrap.

    ``branch`` ("decreasing" or "increasing") keeps only crossings where the
    pair's mean slope has that sign, for observables that cross twice.
    """
    if branch not in (None, "decreasing", "increasing"):
        raise AnalysisError(f"unknown branch {branch!r}")
    curves = _by_size(curves)
    if len(curves) < 2:
        raise AnalysisError("need at least two curves of distinct N")
    pairs = list(zip(curves[:-1], curves[1:]))
    anchors = []
    for a, b in pairs:
        fa, fb = PchipInterpolator(a.p, a.value), PchipInterpolator(b.p, b.value)
        lo, hi = max(a.p[0], b.p[0]), min(a.p[-1], b.p[-1])
        if lo < hi:
            probe = np.linspace(lo, hi, 257)
            if np.allclose(fa(probe), fb(probe), rtol=0, atol=1e-12 * (1 + np.abs(fa(probe)).max())):
                raise AnalysisError(f"curves N={a.N} and N={b.N} coincide: no unique crossing")
        r = _pair_root(a, b, a.value, b.value, branch=branch)
        if r is None:
            raise AnalysisError(f"curves N={a.N} and N={b.N} do not cross")
        anchors.append(r)
    rng = np.random.default_rng(seed)
    est = np.full((max(n_boot, 1), len(pairs)), np.nan)
    failed = 0
    for rep in range(n_boot):
        noisy = {c.N: c.value + c.stderr * rng.standard_normal(c.p.size) for c in curves}
        row = []
        for (a, b), anchor in zip(pairs, anchors):
            r = _pair_root(a, b, noisy[a.N], noisy[b.N], anchor, branch)
            if r is None:
                break
            row.append(r)
        if len(row) < len(pairs):
            failed += 1
            continue
        est[rep] = row
    if n_boot == 0:
        est[0] = anchors
    good = est[~np.isnan(est).any(axis=1)]
    if len(good) < max(1, n_boot // 2):
        raise AnalysisError("crossing lost in most bootstrap replicates")
    means = good.mean(axis=1)
    pair_stats = {
        (a.N, b.N): (float(good[:, j].mean()), float(good[:, j].std()))
        for j, (a, b) in enumerate(pairs)
    }
    return CrossingResult(float(means.mean()), float(means.std()), pair_stats, n_boot, failed)


# ------------------------------------------------------------------ collapse


@dataclass
class ScalingFit:
    p_c: float
    p_c_err: float
    nu: float
    nu_err: float
    z: float | None
    z_err: float | None
    cost: float
    ansatz: str
    sizes_used: list = field(default_factory=list)
    observable: str = ""
    model: str = ""
    k: int | None = None
    at_bounds: list = field(default_factory=list)
    n_boot: int = 0

    def to_dict(self) -> dict:
        keys = ("observable", "model", "k", "ansatz", "p_c", "p_c_err", "nu", "nu_err",
                "z", "z_err", "cost", "sizes_used")
        d = asdict(self)
        return {key: d[key] for key in keys}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@njit(cache=True)
def _collapse_cost(x, y, s, offsets, min_other):
    """Houdayer-Hartmann style quality: mean of (y - Y)^2 / (s^2 + dY^2).

    For each point the master curve Y is a weighted straight line through the
    two points bracketing its x in every other size.  Returns (cost, n_used).
    """
    n_sizes = offsets.shape[0] - 1
    total = 0.0
    used = 0
    for a in range(n_sizes):
        for i in range(offsets[a], offsets[a + 1]):
            xi = x[i]
            sw = 0.0
            swx = 0.0
            swy = 0.0
            swxx = 0.0
            swxy = 0.0
            n_other = 0
            for b in range(n_sizes):
                if b == a:
                    continue
                lo, hi = offsets[b], offsets[b + 1]
                if xi < x[lo] or xi > x[hi - 1]:
                    continue
                # binary search: last index l with x[l] <= xi
                l, r = lo, hi - 1
                while r - l > 1:
                    mid = (l + r) // 2
                    if x[mid] <= xi:
                        l = mid
                    else:
                        r = mid
                for j in (l, l + 1):
                    if j >= hi:
                        continue
                    w = 1.0 / (s[j] * s[j])
                    dx = x[j] - xi
                    sw += w
                    swx += w * dx
                    swy += w * y[j]
                    swxx += w * dx * dx
                    swxy += w * dx * y[j]
                n_other += 1
            if n_other < min_other:
                continue
            det = sw * swxx - swx * swx
            if det <= 1e-300 * sw * sw:
                continue
            Y = (swxx * swy - swx * swxy) / det
            varY = swxx / det
            d = y[i] - Y
            total += d * d / (s[i] * s[i] + varY)
            used += 1
    if used == 0:
        return np.inf, 0
    return total / used, used


class _CollapseData:
    def __init__(self, curves: list[ObservableCurve], ansatz: str):
        self.curves = curves
        self.ansatz = ansatz
        self.N = np.concatenate([np.full(c.p.size, float(c.N)) for c in curves])
        self.p = np.concatenate([c.p for c in curves])
        self.offsets = np.cumsum([0] + [c.p.size for c in curves]).astype(np.int64)
        scale = np.log2(self.N) if ansatz == "log_normalized" else np.ones_like(self.N)
        self.scale = scale
        self.min_other = min(2, len(curves) - 1)

    def values(self, noisy=None):
        v = np.concatenate([c.value for c in self.curves]) if noisy is None else noisy
        return v / self.scale

    def stderr(self):
        e = np.concatenate([c.stderr for c in self.curves]) / self.scale
        floor = 1e-9 * max(np.abs(self.values()).max(), 1e-300)
        return np.maximum(e, floor)

    def cost(self, p_c, nu, z, v, e):
        x = (self.p - p_c) * self.N ** (1.0 / nu)
        f = self.N ** (-z)
        y, s = v * f, e * f
        # each size block is sorted in p, hence in x (nu > 0)
        c, used = _collapse_cost(x, y, s, self.offsets, self.min_other)
        if used < max(3, self.p.size // 4):
            return 1e12
        return float(c)


def _default_bounds(curves, ansatz, bounds):
    p_lo = min(c.p[0] for c in curves)
    p_hi = max(c.p[-1] for c in curves)
    b = {"p_c": (p_lo, p_hi), "nu": (0.3, 6.0), "z": (-1.0, 2.0)}
    b.update(bounds or {})
    return b


def collapse_fit(curves: Sequence[ObservableCurve], ansatz: str = "standard",
                 fixed: dict | None = None, n_boot: int = DEFAULT_BOOT, seed: int = 0,
                 bounds: dict | None = None, grid_points: int = 15) -> ScalingFit:
    """Fit (p_c, nu[, z]) by minimizing the collapse cost.

    ``fixed`` pins parameters, e.g. ``{"z": 1.0}``.  Under the standard ansatz
    z is always 0.  Errors come from refitting Gaussian-perturbed copies of
    the data ``n_boot`` times.
    """
    if ansatz not in ANSATZE:
        raise AnalysisError(f"unknown ansatz {ansatz!r}")
    curves = _by_size(curves)
    if len(curves) < 3:
        raise AnalysisError(
            f"collapse fit is underdetermined with {len(curves)} system size(s); need >= 3"
        )
    fixed = dict(fixed or {})
    if ansatz == "standard":
        fixed["z"] = 0.0
    data = _CollapseData(curves, ansatz)
    bnd = _default_bounds(curves, ansatz, bounds)
    names = [n for n in ("p_c", "nu", "z") if n not in fixed]
    box = [bnd[n] for n in names]

    def unpack(theta):
        d = dict(fixed)
        d.update(zip(names, theta))
        return d["p_c"], d["nu"], d["z"]

    e0 = data.stderr()

    def objective(theta, v):
        for t, (lo, hi) in zip(theta, box):
            if not lo <= t <= hi:
                return 1e12
        return data.cost(*unpack(theta), v, e0)

    v0 = data.values()
    # coarse grid
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(names))
    costs = np.array([objective(t, v0) for t in mesh])
    start = mesh[int(np.argmin(costs))]
    steps = np.array([(hi - lo) / (grid_points - 1) for lo, hi in box])

    def refine(theta0, v):
        simplex = [theta0] + [theta0 + np.eye(len(names))[i] * steps[i] for i in range(len(names))]
        res = minimize(objective, theta0, args=(v,), method="Nelder-Mead",
                       options={"initial_simplex": np.array(simplex), "xatol": 1e-7,
                                "fatol": 1e-10, "maxiter": 4000})
        return res.x, float(res.fun)

    best, best_cost = refine(start, v0)
    rng = np.random.default_rng(seed)
    raw = np.concatenate([c.value for c in curves])
    err_raw = np.concatenate([c.stderr for c in curves])
    boots = []
    for _ in range(n_boot):
        noisy = data.values(raw + err_raw * rng.standard_normal(raw.size))
        theta, _c = refine(best, noisy)
        boots.append(theta)
    boots = np.array(boots).reshape(-1, len(names))
    errs = boots.std(axis=0) if n_boot > 1 else np.zeros(len(names))
    p_c, nu, z = unpack(best)
    err = dict(zip(names, errs))
    at_bounds = [
        n for n, t, (lo, hi) in zip(names, best, box) if min(t - lo, hi - t) < 1e-3 * (hi - lo)
    ]
    c0 = curves[0]
    z_out = None if ansatz == "standard" else z
    z_err = None if ansatz == "standard" else float(err.get("z", 0.0))
    return ScalingFit(
        float(p_c), float(err.get("p_c", 0.0)), float(nu), float(err.get("nu", 0.0)),
        z_out, z_err, best_cost, ansatz, [c.N for c in curves], c0.observable, c0.model,
        c0.k, at_bounds, n_boot,
    )


def collapse_cost(curves: Sequence[ObservableCurve], p_c: float, nu: float, z: float = 0.0,
                  ansatz: str = "standard") -> float:
    """Collapse cost at fixed parameters (same objective as collapse_fit)."""
    curves = _by_size(curves)
    data = _CollapseData(curves, ansatz)
    if ansatz == "standard":
        z = 0.0
    return data.cost(p_c, nu, z, data.values(), data.stderr())


def collapsed_points(curves: Sequence[ObservableCurve], fit: ScalingFit):
    """(N, x, y) arrays of the rescaled data for plotting elsewhere."""
    out = []
    z = fit.z or 0.0
    for c in _by_size(curves):
        v = c.value / (math.log2(c.N) if fit.ansatz == "log_normalized" else 1.0)
        out.append((c.N, (c.p - fit.p_c) * c.N ** (1 / fit.nu), v * c.N ** (-z)))
    return out


# ------------------------------------------------------------------ misc fits


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    error: float
    prefactor: float


def power_law_fit(points) -> PowerLawFit:
    """Fit value = A N^beta by (weighted) least squares in log-log.

    ``points`` holds (N, value, stderr) triples; with all stderr zero the
    fit is unweighted and the error comes from the residuals.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise AnalysisError("power-law fit needs at least three sizes")
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    N, val, err = pts[:, 0], pts[:, 1], pts[:, 2]
    if np.any(val <= 0) or np.any(N <= 0):
        raise AnalysisError("power-law fit needs positive sizes and values")
    X = np.column_stack([np.ones_like(N), np.log(N)])
    Y = np.log(val)
    if np.all(err > 0):
        w = (val / err) ** 2
        A = X.T @ (w[:, None] * X)
        coef = np.linalg.solve(A, X.T @ (w * Y))
        cov = np.linalg.inv(A)
    else:
        coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
        resid = Y - X @ coef
        dof = max(len(Y) - 2, 1)
        cov = np.linalg.inv(X.T @ X) * float(resid @ resid) / dof
    return PowerLawFit(float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0))), float(math.exp(coef[0])))


@dataclass(frozen=True)
class Comparison:
    difference: float
    error: float
    significant: bool


def compare_critical_points(a, b) -> Comparison:
    """Difference of two critical-point estimates; significant iff |diff| > 2 sigma.

    Accepts ScalingFit, CrossingResult or (value, error) pairs.
    """
    def pe(f):
        if isinstance(f, ScalingFit):
            return f.p_c, f.p_c_err
        if isinstance(f, CrossingResult):
            return f.p_c, f.error
        return float(f[0]), float(f[1])

    (va, ea), (vb, eb) = pe(a), pe(b)
    diff = vb - va
    err = math.hypot(ea, eb)
    return Comparison(diff, err, abs(diff) > 2 * err)
