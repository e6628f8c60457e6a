import numpy as np
import pytest

import delaydense as dd
from delaydense.asymptotics import (Histogram2D, TimeSeries, TransitionMatrix,
                                    generate_series, histogram_of, scpf_build,
                                    scpf_iterate, scpf_tabulate,
                                    _scpf_apply_points, solution_histogram,
                                    stationary_vector, trace2d_of,
                                    trace_pairs, ulam_matrix)
from delaydense.density import Density1D
from delaydense.errors import (DomainError, EmptyBin, EquilibriumTrap,
                               UnsupportedModel)


@pytest.fixture(scope="module")
def tent():
    return dd.make_system("tent", {"epsilon": 0.3})


@pytest.fixture(scope="module")
def mg():
    return dd.make_system("mg", {"alpha": 2, "beta": 4, "n": 10})


@pytest.fixture(scope="module")
def mg_series(mg):
    return generate_series(mg, dd.constant(0.9), n_samples=60_000,
                           burn_in=5_000, n_mesh=128)


# --------------------------------------------------------------- histograms

def test_equilibrium_trap_warning(mg):
    with pytest.warns(EquilibriumTrap):
        solution_histogram(mg, dd.constant(0.0), n_samples=2_000,
                           burn_in=100, n_mesh=64)


def test_solution_histogram_initial_value_independence(tent):
    hists = []
    edges = np.linspace(-1.1, 1.1, 56)
    for x0 in (0.7, -0.2):
        hists.append(solution_histogram(tent, dd.constant(x0),
                                        n_samples=400_000, burn_in=10_000,
                                        bins=edges, n_mesh=128))
    assert hists[0].l1_distance(hists[1]) < 0.05


def test_trace2d_single_cell_for_constant_solution(mg):
    with pytest.warns(EquilibriumTrap):
        series = generate_series(mg, dd.constant(0.0), n_samples=3_000,
                                 burn_in=500, n_mesh=64)
    hist = trace2d_of(series, grid=(np.linspace(-1, 1, 11),
                                    np.linspace(-1, 1, 11)))
    assert (hist.counts > 0).sum() == 1
    iy, ix = np.argwhere(hist.counts > 0)[0]
    # on the diagonal: x(t-1) = x(t) = 0 falls in the same bin
    assert ix == iy


def test_trace2d_marginal_equals_1d_histogram(mg_series):
    edges = np.linspace(0.2, 1.5, 44)
    hist2 = trace2d_of(mg_series, grid=(edges, edges))
    lag = int(round(1.0 / mg_series.h_sample))
    start = max(mg_series.burn_in, lag)
    current = mg_series.values[start:]
    counts1, _ = np.histogram(current, bins=edges)
    assert np.array_equal(hist2.marginal_current(), counts1)
    delayed = mg_series.values[start - lag:mg_series.values.shape[0] - lag]
    countsd, _ = np.histogram(delayed, bins=edges)
    assert np.array_equal(hist2.marginal_delayed(), countsd)


def test_trace2d_attractor_portrait_occupies_many_cells(mg_series):
    hist = trace2d_of(mg_series, grid=80)
    occupied = (hist.counts > 0).mean()
    # chaotic attractor projection: neither a point nor space-filling
    assert 0.02 < occupied < 0.6


# ------------------------------------------------------------- Ulam matrix

def test_ulam_periodic_two_bins():
    series = TimeSeries(values=np.array([1.0, 2.0] * 50), h_sample=1.0)
    P = ulam_matrix(series, np.array([0.5, 1.5, 2.5]))
    assert np.allclose(P.matrix, [[0.0, 1.0], [1.0, 0.0]])


def test_ulam_constant_series_identity():
    series = TimeSeries(values=np.full(100, 1.0), h_sample=1.0)
    P = ulam_matrix(series, np.array([0.5, 1.5]))
    assert np.allclose(P.matrix, [[1.0]])


def test_ulam_columns_sum_to_one(mg_series):
    edges = np.linspace(mg_series.tail.min(), mg_series.tail.max(), 61)
    P = ulam_matrix(mg_series, edges)
    assert np.allclose(P.matrix.sum(axis=0), 1.0, atol=1e-12)


def test_ulam_empty_bin_raises():
    series = TimeSeries(values=np.array([0.1, 0.9] * 20), h_sample=1.0)
    with pytest.raises(EmptyBin):
        ulam_matrix(series, np.array([0.0, 0.25, 0.5, 1.0]))


def test_ulam_circularity_occupation_is_near_fixed_point(mg_series):
    # the paper's own derivation: ||P hist - hist||_1 <= r / M
    edges = np.linspace(mg_series.tail.min(), mg_series.tail.max(), 101)
    P, occ = ulam_matrix(mg_series, edges, return_occupation=True)
    resid = np.abs(P.matrix @ occ - occ).sum()
    assert resid <= 100 / mg_series.tail.shape[0]


def test_stationary_vector_two_cycle():
    P = TransitionMatrix(matrix=np.array([[0.0, 1.0], [1.0, 0.0]]),
                         partition_edges=np.array([0.0, 0.5, 1.0]))
    p, info = stationary_vector(P)
    assert np.allclose(p, [0.5, 0.5])
    assert not info["multiple_fixed_points"]


def test_stationary_vector_identity_flags_reducible():
    P = TransitionMatrix(matrix=np.eye(2),
                         partition_edges=np.array([0.0, 0.5, 1.0]))
    p, info = stationary_vector(P)
    assert np.allclose(p, [0.5, 0.5])  # the initial guess is returned
    assert info["multiple_fixed_points"]


def test_stationary_vector_matches_occupation(mg_series):
    # the occupation histogram is (almost) a fixed point; the power-iterated
    # fixed point agrees with it up to finite-sample noise in P's columns
    edges = np.linspace(mg_series.tail.min(), mg_series.tail.max(), 101)
    P, occ = ulam_matrix(mg_series, edges, return_occupation=True)
    p, info = stationary_vector(P, tol=1e-12)
    assert np.abs(P.matrix @ p - p).sum() < 1e-10
    assert np.abs(p - occ).sum() < 0.1


# ---------------------------------------------------- self-consistent PF

@pytest.fixture(scope="module")
def tent_state(tent):
    return scpf_build(tent, 1.0 / 32, np.linspace(-1.2, 1.2, 513))


def test_scpf_rejects_unsupported_model():
    pwc = dd.make_system("pwc", {"alpha": 6, "c": 24, "x1": 1, "x2": 2})
    with pytest.raises(UnsupportedModel):
        scpf_build(pwc, 1.0 / 32, np.linspace(-1, 1, 129))


def test_scpf_tent_branch_inverses_match_algebra(tent_state):
    # f(s) = (1 - 1.9|s|)/eps has branches s = +-(1 - eps q)/1.9
    h, eps = tent_state.h, 0.3
    for j, s in zip(tent_state.pre_j, tent_state.pre_s):
        q = tent_state.grid[j] / h
        expected = (1.0 - eps * q) / 1.9
        assert abs(abs(s) - expected) < 1e-9


def test_scpf_v_equals_u_when_alpha_zero(tent_state):
    # with alpha = 0 the change of variables is the identity on v
    state = tent_state
    from dataclasses import replace
    state0 = replace(state, alpha=0.0)
    u = np.exp(-state.grid ** 2 / 0.1)
    u /= u.sum() * state.dx
    v, _ = scpf_tabulate(state0, u)
    M = state.grid.shape[0] - 1
    # offset lattice center section equals u up to the unit-mass rescale
    center = v[M // 2 + 128:M // 2 + 256]
    ref = np.interp((np.arange(2 * M + 1) - M) * state.dx,
                    state.grid, u)[M // 2 + 128:M // 2 + 256]
    assert np.allclose(center, ref, rtol=1e-3, atol=1e-6)


def test_scpf_w_mass_matches_u_mass(tent_state):
    u = np.exp(-(tent_state.grid - 0.2) ** 2 / 0.05)
    u /= u.sum() * tent_state.dx
    _, w = scpf_tabulate(tent_state, u)
    assert float(w @ tent_state.simpson) == pytest.approx(1.0, abs=1e-6)


def test_scpf_direct_vs_fft(tent):
    state = scpf_build(tent, 1.0 / 32, np.linspace(-1.2, 1.2, 257))
    u = np.exp(-(state.grid - 0.3) ** 2 / 0.02)
    u /= u.sum() * state.dx
    d = _scpf_apply_points(state, u, "direct")
    f = _scpf_apply_points(state, u, "fft")
    assert np.abs(d - f).max() < 1e-10


def test_scpf_mass_after_renormalization(tent_state):
    u = Density1D.uniform(-0.9, 0.9, 120)
    from delaydense.asymptotics import scpf_apply
    out = scpf_apply(tent_state, u)
    assert out.total_mass() == pytest.approx(1.0, abs=1e-9)


def test_scpf_point_mass_is_stationary(tent_state):
    u_star = Density1D.point_mass(1.0 / 2.9, tent_state.grid)
    _, diag = scpf_iterate(tent_state, u_star, 50)
    assert abs(diag["center_of_mass"][-1] - 1.0 / 2.9) < 0.01
    assert diag["std"][-1] < 0.02


def test_scpf_tent_collapse(tent_state):
    u0 = Density1D.uniform(-1.0, 1.0, 100)
    _, diag = scpf_iterate(tent_state, u0, 300)
    assert abs(diag["center_of_mass"][-1] - 1.0 / 2.9) < 0.01
    assert diag["std"][-1] < 0.02
    # width contraction after the transient
    assert np.all(np.diff(diag["std"][50:]) <= 1e-12)


def test_scpf_mackey_glass_collapse(mg):
    # T(x,x) fixed point: 2x = 4x/(1+x^10)  =>  x = 1
    state = scpf_build(mg, 1.0 / 32, np.linspace(-0.2, 1.8, 513))
    _, diag = scpf_iterate(state, Density1D.uniform(0.3, 1.3, 100), 400)
    assert abs(diag["center_of_mass"][-1] - 1.0) < 0.01
    assert diag["std"][-1] < 0.02


def test_scpf_requires_even_interval_grid(tent):
    with pytest.raises(DomainError):
        scpf_build(tent, 1.0 / 32, np.linspace(-1, 1, 128))
