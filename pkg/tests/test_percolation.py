import math

import numpy as np
import pytest

from scrambler_lab.circuit import CircuitParams, Model, build_schedule
from scrambler_lab.percolation import (
    CanonicalCurve, PercolationError, PercolationNetwork, SweepResult, binder_cumulant, binder_from_moments,
    binomial_window, build_network, convolve_canonical, curve_peak, direct_monte_carlo,
    merge_sweeps, network_for, newman_ziff_sweep, spanning_probability, susceptibility,
)


def test_network_counts():
    net = network_for("PWR2", 4, 1, n_layers=2)
    assert (net.n_gates, net.n_bonds, net.n_cuttable) == (4, 12, 8)
    assert np.all(net.degrees()[: net.n_gates] == 4)
    net = network_for("PWR2", 2, 1, n_layers=1)
    assert (net.n_gates, net.n_bonds, net.n_cuttable) == (1, 4, 2)


@pytest.mark.parametrize("model,k", [("PWR2", 1), ("PWR2", 3), ("NN", 1), ("AA", 1), ("PWR2", 5)])
def test_interior_degree_four(model, k):
    net = network_for(model, 32, k, n_layers=12, seed=4)
    deg = net.degrees()
    assert np.all(deg[: net.n_gates] == 4)
    assert np.all(deg[net.n_gates :] == 1)
    assert np.all(net.weights()[net.n_gates :] == 0)


def test_network_matches_schedule():
    sched = build_schedule(CircuitParams(8, 2, Model.PWR2, 3))
    net = build_network(sched)
    # the two gates touched by qubit 0's first segment
    assert tuple(net.bonds[0]) == (net.source(0), 0)
    g = net.bonds[8:16, 1]  # layer-2 gates, by qubit
    pairs = sched.pairs_at(2)
    for i, j in pairs:
        assert g[i] == g[j]


def _two_bonds():
    bonds = np.array([[0, 1], [2, 3]])
    return PercolationNetwork(0, 0, 4, bonds, np.ones(2, dtype=bool))


def test_isolated_bonds():
    sw = newman_ziff_sweep(_two_bonds(), 20, 1, p_grid=[0.0, 1.0])
    c = sw.micro_mean("c_max")
    assert c[0] == 1 and c[2] == 2
    assert np.all(sw.samples[:, 0, 0] == 2) and np.all(sw.samples[:, 0, 1] == 1)


def test_cmax_monotone_and_bounded():
    net = network_for("PWR2", 32, 1)
    sw = newman_ziff_sweep(net, 50, 3)
    c = sw.micro_mean()
    assert np.all(np.diff(c) >= -1e-12)
    assert c[-1] == net.n_gates
    assert c[0] >= 1
    span = sw.micro_mean("spanning")
    assert span[-1] == 1.0 and span[0] == 0.0


def test_sweep_reproducible_and_chunkable():
    net = network_for("PWR2", 16, 1)
    a = newman_ziff_sweep(net, 10, 9)
    b = merge_sweeps([newman_ziff_sweep(net, 4, 9), newman_ziff_sweep(net, 6, 9, first=4)])
    assert np.array_equal(a.micro_sums, b.micro_sums)
    assert np.array_equal(a.samples, b.samples)
    with pytest.raises(PercolationError):
        newman_ziff_sweep(net, 0, 1)


def test_binomial_window():
    s, w = binomial_window(2, 0.5)
    assert s == 0 and np.allclose(w, [0.25, 0.5, 0.25])
    s, w = binomial_window(10_000_000, 0.3)
    assert abs(w.sum() - 1) < 1e-12 and np.all(np.isfinite(w))
    m = np.arange(s, s + len(w))
    assert abs(np.dot(w, m) / 1e7 - 0.3) < 1e-9
    with pytest.raises(PercolationError):
        binomial_window(5, 1.5)


def test_convolution_examples():
    Q = np.array([1.0, 1.5, 2.0])
    assert convolve_canonical(Q, [0.5]).value[0] == pytest.approx(1.5)
    assert convolve_canonical(Q, [0.0]).value[0] == 2.0  # q = 1
    assert convolve_canonical(Q, [1.0]).value[0] == 1.0  # q = 0
    with pytest.raises(PercolationError):
        convolve_canonical(Q, [])


def test_convolution_off_grid_matches_samples():
    net = network_for("PWR2", 16, 1)
    sw = newman_ziff_sweep(net, 40, 2, p_grid=np.linspace(0, 1, 11))
    on = convolve_canonical(sw, sw.p_grid)
    off = convolve_canonical(sw, sw.p_grid.copy() + 0.0)
    assert np.allclose(on.value, off.value)
    shifted = convolve_canonical(sw, [0.33])
    assert np.isnan(shifted.stderr[0])


def test_binder_examples():
    assert binder_from_moments(4.0, 16.0) == 1.0
    assert binder_from_moments(2.0, 12.0) == 0.0
    with pytest.raises(PercolationError):
        binder_from_moments(0.0, 1.0)
    sw = newman_ziff_sweep(_two_bonds(), 5, 1, p_grid=[0.0, 1.0])
    assert np.allclose(binder_cumulant(sw).value, 1.0)
    assert np.allclose(susceptibility(sw).value, 0.0)


def test_binder_shape_k1():
    net = network_for("PWR2", 64, 1)
    sw = newman_ziff_sweep(net, 200, 5, p_grid=np.linspace(0.3, 0.5, 21))
    b = binder_cumulant(sw).value
    assert b[0] > 0.99 and b[-1] < b[0] - 0.1
    assert np.all(np.diff(b) < 0.01)


def test_susceptibility_nonnegative_and_peak():
    net = network_for("PWR2", 64, 1)
    sw = newman_ziff_sweep(net, 100, 5)
    chi = susceptibility(sw)
    assert np.all(chi.value >= 0)
    peak = curve_peak(chi)
    assert not peak.flat and 0.3 < peak.p < 0.7
    flat = CanonicalCurve(np.linspace(0, 1, 5), np.zeros(5), np.zeros(5), "chi")
    assert curve_peak(flat).flat
    edge = CanonicalCurve(np.linspace(0, 1, 5), np.arange(5.0), np.zeros(5), "chi")
    assert curve_peak(edge).flat


def test_spanning_limits():
    net = network_for("PWR2", 32, 1)
    sw = newman_ziff_sweep(net, 30, 5, p_grid=[0.0, 1.0])
    assert list(spanning_probability(sw).value) == [1.0, 0.0]


def test_spanning_size_independent_at_half():
    vals = []
    for N in (32, 64, 128):
        sw = newman_ziff_sweep(network_for("PWR2", N, 1), 400, 6, p_grid=[0.5])
        vals.append(spanning_probability(sw))
    for c in vals:
        assert 0.5 < c.value[0] < 0.75
    assert abs(vals[0].value[0] - vals[-1].value[0]) < 4 * math.hypot(vals[0].stderr[0], vals[-1].stderr[0])


def test_direct_mc_limits():
    net = network_for("PWR2", 16, 1)
    full = direct_monte_carlo(net, 0.0, 3, 1)
    assert np.all(full[:, 0] == net.n_gates) and np.all(full[:, 3] == 1)
    empty = direct_monte_carlo(net, 1.0, 3, 1)
    assert np.all(empty[:, 0] == 1) and np.all(empty[:, 3] == 0)


def test_sweep_result_merge_checks():
    net = network_for("PWR2", 8, 1)
    a = newman_ziff_sweep(net, 2, 1, p_grid=[0.5])
    b = newman_ziff_sweep(net, 2, 1, p_grid=[0.4])
    with pytest.raises(PercolationError):
        merge_sweeps([a, b])
    with pytest.raises(PercolationError):
        merge_sweeps([])
    assert isinstance(merge_sweeps([a]), SweepResult)
