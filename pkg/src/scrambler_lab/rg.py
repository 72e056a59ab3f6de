"""Block-decimation recursion for the complete PWR2 percolation network."""

from __future__ import annotations

from dataclasses import asdict, dataclass

EPS = 1e-9


class RgError(ValueError):
    pass


def _check(q: float) -> float:
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise RgError(f"probability {q} outside [0, 1]")
    return q


def q_bond(q: float) -> float:
    q = _check(q)
    r = 1.0 - q
    return q**4 + 4 * q**3 * r + 4 * q**2 * r**2


def q_ribbon(qb: float) -> float:
    qb = _check(qb)
    r = 1.0 - qb
    return qb**4 + 4 * qb**3 * r + 2 * qb**2 * r**2


def rg_step(q: float) -> float:
    """One decimation step R(q): bond, then ribbon, then two ribbons in parallel."""
    Q = q_ribbon(q_bond(q))
    return Q * Q + 2 * Q * (1.0 - Q)


@dataclass(frozen=True)
class FixedPoint:
    q_star: float
    p_star: float
    stability: str  # "unstable" (repulsive) or "stable"
    slope: float

    def to_dict(self) -> dict:
        return asdict(self)


def fixed_point(tol: float = 1e-12, lo: float = EPS, hi: float = 1.0 - EPS) -> FixedPoint:
    """Nontrivial root of R(q) - q by bisection; p* = 1 - q*."""
    g = lambda q: rg_step(q) - q  # noqa: E731
    a, b = lo, hi
    ga, gb = g(a), g(b)
    if ga == 0.0:
        b = a
    elif gb == 0.0:
        a = b
    elif ga * gb > 0:
        raise RgError("R(q) - q has no sign change on the search interval")
    while b - a > tol:
        m = 0.5 * (a + b)
        gm = g(m)
        if gm == 0.0:
            a = b = m
            break
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    q = 0.5 * (a + b)
    h = 1e-3
    below, above = g(q - h), g(q + h)
    # flow away from q* on both sides means the critical point is repulsive
    stability = "unstable" if below < 0 < above else "stable"
    slope = (rg_step(q + 1e-6) - rg_step(q - 1e-6)) / 2e-6
    return FixedPoint(q, 1.0 - q, stability, slope)
