import numpy as np
import pytest

import delaydense as dd
from delaydense.density import (Density1D, apply_pl_pf, build_pl_map,
                                explicit_pf_linear, explicit_pf_quadratic,
                                quadratic_map_invariant, quadratic_map_pf,
                                sample_ensemble, sampling_requirement,
                                track_support_curve)
from delaydense.errors import (DomainError, NotImplementedWindow, Overflow,
                               SingularTime)
from delaydense.models import FamilyId


@pytest.fixture
def uniform01():
    return Density1D.uniform(0.0, 1.0, 100)


# ---------------------------------------------------------------- Density1D

def test_density_mass_and_normalization():
    d = Density1D(np.array([0.0, 1.0, 3.0]), np.array([0.25, 0.25]))
    assert d.total_mass() == pytest.approx(0.75)
    n = d.normalized()
    assert n.total_mass() == pytest.approx(1.0)
    assert n.is_normalized


def test_density_eval_and_mass_in(uniform01):
    assert uniform01.eval_at(0.5) == pytest.approx(1.0)
    assert uniform01.eval_at(-0.1) == 0.0
    assert uniform01.mass_in(0.25, 0.75) == pytest.approx(0.5)
    assert uniform01.mass_in(-5.0, 5.0) == pytest.approx(1.0)


def test_density_ppf_roundtrip(uniform01):
    q = np.linspace(0.001, 0.999, 57)
    x = uniform01.ppf(q)
    assert np.allclose(x, q, atol=1e-12)


def test_density_rejects_bad_grid():
    with pytest.raises(DomainError):
        Density1D(np.array([0.0, 0.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(DomainError):
        Density1D(np.array([0.0, 1.0]), np.array([-1.0]))


# ------------------------------------------------- quadratic interval map PF

def test_quadratic_map_pf_flat_input_value_near_zero(uniform01):
    # P(1)(x) = 1/(2 sqrt(1-x)): at x ~ 0 the value is 1/2
    out = quadratic_map_pf(uniform01)
    assert out.mass_per_bin[0] == pytest.approx(0.5, abs=0.02)


def test_quadratic_map_pf_invariant_density():
    edges = np.linspace(0.0, 1.0, 801)
    fstar = quadratic_map_invariant(edges).normalized()
    out = quadratic_map_pf(fstar)
    mids = 0.5 * (edges[:-1] + edges[1:])
    mask = (mids > 0.02) & (mids < 0.98)
    l1 = np.sum((np.abs(out.mass_per_bin - fstar.mass_per_bin)
                 * np.diff(edges))[mask])
    assert l1 < 0.02


def test_quadratic_map_pf_l1_decreases_over_first_iterates():
    rho = Density1D.uniform(0.0, 1.0, 800)
    fstar = quadratic_map_invariant(rho.grid_edges)
    mids = rho.midpoints
    mask = (mids >= 0.01) & (mids <= 0.99)
    dists = []
    cur = rho
    for _ in range(4):
        cur = quadratic_map_pf(cur)
        dists.append(float(np.sum((np.abs(cur.mass_per_bin
                                          - fstar.mass_per_bin)
                                   * cur.widths)[mask])))
    assert all(a > b for a, b in zip(dists, dists[1:]))


def test_quadratic_map_pf_rejects_wrong_support():
    with pytest.raises(DomainError):
        quadratic_map_pf(Density1D.uniform(-1.0, 1.0, 10))


# ------------------------------------------------------- explicit transport

def test_explicit_linear_identity_window(uniform01):
    out = explicit_pf_linear(uniform01, alpha=5.0, t=0.5,
                             out_edges=uniform01.grid_edges)
    assert np.allclose(out.mass_per_bin, uniform01.mass_per_bin)


def test_explicit_linear_singular_time(uniform01):
    # t* = 1 - 1/alpha: alpha = -1 gives t* = 2
    with pytest.raises(SingularTime):
        explicit_pf_linear(uniform01, alpha=-1.0, t=2.0)


def test_explicit_linear_stretch(uniform01):
    out = explicit_pf_linear(uniform01, alpha=1.0, t=2.0)
    assert out.support == (0.0, 2.0)
    assert out.eval_at(1.0) == pytest.approx(0.5, rel=1e-12)


def test_explicit_linear_window_limit(uniform01):
    with pytest.raises(NotImplementedWindow):
        explicit_pf_linear(uniform01, alpha=1.0, t=2.5)


def test_explicit_quadratic_identity(uniform01):
    out = explicit_pf_quadratic(uniform01, 1.0)
    assert np.allclose(out.mass_per_bin, uniform01.mass_per_bin)


def test_explicit_quadratic_cutoff(uniform01):
    out = explicit_pf_quadratic(uniform01, 1.5,
                                out_edges=np.linspace(-0.1, 0.8, 90))
    assert float(out.eval_at(0.6)) == 0.0
    assert float(out.eval_at(0.75)) == 0.0


def test_explicit_quadratic_conserves_mass(uniform01):
    out = explicit_pf_quadratic(uniform01, 1.5,
                                out_edges=np.linspace(-0.2, 0.55, 200))
    # output is exactly renormalized; the raw masses already sum to 1
    assert out.total_mass() == pytest.approx(1.0, abs=1e-6)


# ------------------------------------------------------- ensemble sampling

def test_sampling_requirement_paper_value():
    assert sampling_requirement(0.01, 0.01) == 3_960_000


def test_sampling_requirement_small_cases():
    assert sampling_requirement(0.5, 1.0) == 4
    assert sampling_requirement(0.99, 0.1) == 5
    with pytest.raises(DomainError):
        sampling_requirement(0.0, 0.1)
    with pytest.raises(DomainError):
        sampling_requirement(0.5, 0.0)


def test_sample_ensemble_identity_at_t0():
    mg = dd.make_system("mg", {"alpha": 2, "beta": 4, "n": 10})
    rho0 = Density1D.uniform(0.3, 1.3, 50)
    out = sample_ensemble(mg, rho0, FamilyId.Constant, 0.0, 40_000, seed=1,
                          bins=rho0.grid_edges, n_mesh=64)
    assert out.l1_distance(rho0) < 0.05


def test_sample_ensemble_matches_explicit_linear():
    lin = dd.make_system("linear-toy", {"alpha": 1})
    rho0 = Density1D.uniform(0.0, 1.0, 100)
    edges = np.linspace(0.0, 2.0, 101)
    got = sample_ensemble(lin, rho0, FamilyId.Constant, 2.0, 100_000, seed=7,
                          bins=edges, n_mesh=256)
    want = explicit_pf_linear(rho0, 1.0, 2.0, out_edges=edges)
    assert got.l1_distance(want) <= 0.05


def test_sample_ensemble_multimodal_peaks_long_time():
    # three delay-times of DDE evolution: solutions cluster near
    # 0.45, 0.6, 0.9, 1.2 for the chaotic Mackey-Glass parameters
    mg = dd.make_system("mg", {"alpha": 2, "beta": 4, "n": 10})
    rho0 = Density1D.uniform(0.3, 1.3, 100)
    d = sample_ensemble(mg, rho0, FamilyId.Constant, 4.0, 50_000, seed=3,
                        bins=np.linspace(0.2, 1.45, 126), n_mesh=256)
    mids, v = d.midpoints, d.mass_per_bin
    for peak in (0.45, 0.6, 0.9, 1.2):
        sel = np.abs(mids - peak) < 0.08
        assert v[sel].max() > 1.5, f"no density peak near {peak}"


def test_sample_ensemble_counts_dropped_samples():
    blow = dd.make_system("linear-toy", {"alpha": 40.0})
    rho0 = Density1D.uniform(0.5, 1.0, 10)
    with pytest.raises(Overflow):
        sample_ensemble(blow, rho0, FamilyId.Constant, 12.0, 500, seed=5,
                        n_mesh=64)


def test_sample_ensemble_deterministic_across_workers(monkeypatch):
    mg = dd.make_system("mg", {"alpha": 2, "beta": 4, "n": 10})
    rho0 = Density1D.uniform(0.3, 1.3, 20)
    outs = []
    for workers in ("1", "4"):
        monkeypatch.setenv("DELAYDENSE_THREADS", workers)
        d = sample_ensemble(mg, rho0, FamilyId.Constant, 2.0, 20_000, seed=11,
                            bins=np.linspace(0.0, 1.6, 81), n_mesh=128)
        outs.append(d.mass_per_bin)
    assert np.array_equal(outs[0], outs[1])


# ---------------------------------------------- piecewise-linear PF operator

def test_build_pl_map_identity_at_t0():
    lin = dd.make_system("linear-toy", {"alpha": 1})
    mesh = np.linspace(0.0, 1.0, 11)
    pl = build_pl_map(lin, FamilyId.Constant, mesh, 0.0, 64)
    assert np.array_equal(pl.mesh_y, mesh)


def test_build_pl_map_linear_endpoints():
    lin = dd.make_system("linear-toy", {"alpha": 1})
    pl = build_pl_map(lin, FamilyId.Constant, np.array([0.0, 1.0]), 2.0, 2000)
    assert pl.mesh_y[0] == pytest.approx(0.0, abs=1e-12)
    assert pl.mesh_y[1] == pytest.approx(2.0, abs=2e-3)


def test_build_pl_map_quadratic_three_nodes():
    quad = dd.make_system("quadratic-toy")
    pl = build_pl_map(quad, FamilyId.Constant, np.array([0.0, 1.0, 2.0]),
                      2.0, 2000)
    assert np.allclose(pl.mesh_y, [0.0, 0.0, -2.0], atol=5e-3)


def test_apply_pl_pf_identity(uniform01):
    ident = build_pl_map(dd.make_system("linear-toy", {"alpha": 1}),
                         FamilyId.Constant, np.linspace(-0.1, 1.1, 400),
                         0.0, 64)
    out = apply_pl_pf(ident, uniform01, uniform01.grid_edges)
    assert out.l1_distance(uniform01) < 1e-9


@pytest.mark.parametrize("mode", ["exact", "midpoint"])
def test_apply_pl_pf_matches_explicit_linear(uniform01, mode):
    lin = dd.make_system("linear-toy", {"alpha": 1})
    pl = build_pl_map(lin, FamilyId.Constant, np.linspace(-0.05, 1.05, 1000),
                      2.0, 1000)
    grid = np.linspace(-0.1, 2.1, 1001)
    got = apply_pl_pf(pl, uniform01, grid, mode=mode)
    want = explicit_pf_linear(uniform01, 1.0, 2.0, out_edges=grid)
    assert got.l1_distance(want) < 1e-2


def test_apply_pl_pf_matches_explicit_quadratic(uniform01):
    quad = dd.make_system("quadratic-toy")
    pl = build_pl_map(quad, FamilyId.Constant, np.linspace(-0.05, 1.05, 1000),
                      1.5, 1000)
    grid = np.linspace(-0.05, 0.55, 101)
    got = apply_pl_pf(pl, uniform01, grid)
    want = explicit_pf_quadratic(uniform01, 1.5, out_edges=grid)
    singular = [int(np.searchsorted(grid, 0.5, "right") - 1)]
    assert got.l1_distance(want, skip_bins=singular) < 1e-2


def test_apply_pl_pf_mass_conservation_before_renormalization(uniform01):
    lin = dd.make_system("linear-toy", {"alpha": 1})
    pl = build_pl_map(lin, FamilyId.Constant, np.linspace(-0.05, 1.05, 500),
                      2.0, 500)
    raw = apply_pl_pf(pl, uniform01, np.linspace(-0.31, 2.17, 537),
                      renormalize=False)
    assert raw.total_mass() == pytest.approx(1.0, abs=1e-6)


def test_apply_pl_pf_degenerate_segment_deposits_delta(uniform01):
    # a flat map sends all mass to a point: one bin holds everything
    flat = build_pl_map(dd.make_system("custom", custom_rhs=lambda x, xl: 0.0),
                        FamilyId.Constant, np.linspace(0.0, 1.0, 5), 0.0, 16)
    flat = type(flat)(mesh_x=flat.mesh_x, mesh_y=np.full(5, 0.42), t=1.0)
    out = apply_pl_pf(flat, uniform01, np.linspace(0.0, 1.0, 11))
    assert out.meta["n_degenerate_segments"] == 4
    j = np.argmax(out.mass_per_bin)
    assert out.grid_edges[j] <= 0.42 < out.grid_edges[j + 1]
    assert out.mass_per_bin[j] * out.widths[j] == pytest.approx(1.0)


# ------------------------------------------------------------ support curve

def test_support_curve_initially_diagonal():
    lin = dd.make_system("linear-toy", {"alpha": 1})
    sc = track_support_curve(lin, np.linspace(0.0, 1.0, 7), 0.0, 64)
    assert np.allclose(sc.points[:, 0], sc.points[:, 1])


def test_support_curve_linear_is_straight_line():
    lin = dd.make_system("linear-toy", {"alpha": 1})
    s = np.linspace(0.2, 1.0, 9)
    sc = track_support_curve(lin, s, 1.5, 400)
    pr = sc.projection()
    assert np.allclose(pr[:, 0], s * 1.5, atol=1e-10)
    assert np.allclose(pr[:, 1], s, atol=1e-12)


def test_support_curve_quadratic_parabola():
    quad = dd.make_system("quadratic-toy")
    s = np.linspace(0.2, 1.0, 9)
    sc = track_support_curve(quad, s, 1.5, 400)
    pr = sc.projection()
    assert np.allclose(pr[:, 0], s - 0.5 * s * s, atol=1e-10)


def test_support_curve_histogram_matches_ensemble():
    mg = dd.make_system("mg", {"alpha": 2, "beta": 4, "n": 10})
    rho0 = Density1D.uniform(0.3, 1.3, 50)
    s = np.linspace(0.3, 1.3, 4001)
    sc = track_support_curve(mg, s, 2.0, 128, rho0=rho0)
    edges = np.linspace(0.0, 1.6, 65)
    counts, _ = np.histogram(sc.projection()[:, 0], bins=edges,
                             weights=sc.weights)
    curve_density = Density1D(edges, counts / np.diff(edges)).normalized()
    ens = sample_ensemble(mg, rho0, FamilyId.Constant, 2.0, 100_000, seed=13,
                          bins=edges, n_mesh=128)
    assert curve_density.l1_distance(ens) < 0.05


def test_support_curve_requires_sorted_params():
    lin = dd.make_system("linear-toy", {"alpha": 1})
    with pytest.raises(DomainError):
        track_support_curve(lin, np.array([1.0, 0.5]), 1.0, 64)
