"""Shared test helpers: replay of stabilizer trajectories through the dense oracle."""

import math

import numpy as np

from scrambler_lab.circuit import CircuitParams, build_schedule
from scrambler_lab.oracle import (
    DenseState,
    all_regions,
    apply_schedule_layer,
    oracle_entropy,
    oracle_measure_z,
    probability_zero,
)
from scrambler_lab.stabilizer import entropy_of, init_z_polarized, run_trajectory

LN2 = math.log(2.0)


def random_params(rng, sizes=(2, 4, 8), max_layers=7):
    n = int(rng.choice(sizes))
    model = str(rng.choice(["PWR2", "NN", "AA"]))
    k = int(rng.integers(1, int(math.log2(n)) + 1))
    return CircuitParams(n, k, model, int(rng.integers(1, max_layers + 1)),
                         float(rng.random()), int(rng.integers(0, 2**63)))


def replay(params, tol=1e-8):
    """Run one recorded trajectory and replay it on a statevector.

    Returns a dict of mismatch counts; all zeros means full agreement.
    """
    n, T = params.n_qubits, params.n_layers
    sched = build_schedule(params)
    regions = list(all_regions(n))
    obs = {repr(r): entropy_of(r) for r in regions}
    res = run_trajectory(sched, init_z_polarized(n), obs, times=range(T + 1),
                         record=True, debug=True)
    stab = {(t, name): v for t, name, v in res.rows}
    by_layer = {}
    for t, q, o, r in res.record.entries:
        by_layer.setdefault(t, []).append((q, o, r))
    bad = dict(deterministic=0, coin=0, entropy=0, integer=0)
    st = DenseState.zeros(n)

    def compare(t):
        for r in regions:
            want = oracle_entropy(st, r)
            got = stab[(t, repr(r))]
            if abs(got - want) > tol:
                bad["entropy"] += 1
            if abs(got / LN2 - round(got / LN2)) > 1e-12:
                bad["integer"] += 1

    compare(0)
    for t in range(1, T + 1):
        st = apply_schedule_layer(st, sched, t)
        for q, o, was_random in by_layer.get(t, []):
            p0 = probability_zero(st, q)
            p = p0 if o == 1 else 1.0 - p0
            if was_random and abs(p0 - 0.5) > 1e-9:
                bad["coin"] += 1
            if not was_random and abs(p - 1.0) > 1e-9:
                bad["deterministic"] += 1
            _, st = oracle_measure_z(st, q, forced=o)
        compare(t)
    return bad


def random_clifford_tableau(n, rng, depth=None):
    """Z-polarized start scrambled by random two-qubit Cliffords; also returns the gate list."""
    tab = init_z_polarized(n)
    gates = []
    for _ in range(depth or 3 * n):
        a, b = rng.choice(n, 2, replace=False)
        gates.append((int(a), int(b), tab.random_clifford2(int(a), int(b), rng)))
    return tab, gates


def synthetic_curves(rng, p_c, nu, z, sizes, grid, ansatz="standard", noise=0.01):
    """Curves drawn from value = N^z f((p - p_c) N^(1/nu)) with f a smooth step."""
    from scrambler_lab.analysis import ObservableCurve

    grid = np.asarray(grid, dtype=float)
    out = []
    for N in sizes:
        x = (grid - p_c) * N ** (1.0 / nu)
        v = (0.5 - 0.4 * np.tanh(x)) * N**z
        if ansatz == "log_normalized":
            v = v * math.log2(N)
        e = noise * np.abs(v)
        out.append(ObservableCurve(N, grid, v + e * rng.standard_normal(grid.size), e))
    return out


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: list[str] = []


def report(tag, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok
