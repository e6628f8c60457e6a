"""Pure backend vs compiled backend agreement.

The two backends share expression-level arithmetic, so results are
bit-identical for every model whose update avoids pow().  Mackey-Glass uses
pow, where numpy's vectorized implementation may differ from libm by 1 ulp;
there the batch paths are compared statistically and the scalar paths
exactly.
"""

import numpy as np
import pytest

from delaydense.kernels import _pure

ck = pytest.importorskip("delaydense._kernels")

MG = 0
CASES = [
    (MG, np.array([2.0, 4.0, 10.0, 0.0])),
    (1, np.array([3.25, 20.5, 1.0, 2.0])),
    (2, np.array([0.3, 0.0, 0.0, 0.0])),
    (3, np.array([-1.0, 0.0, 0.0, 0.0])),
    (4, np.array([0.0, 0.0, 0.0, 0.0])),
]


@pytest.mark.parametrize("mid,p", CASES)
def test_euler_run_bitwise(mid, p):
    u = np.linspace(0.31, 1.17, 129)
    a1, xs1, b1 = _pure.euler_run(mid, p, u, 640, True)
    a2, xs2, b2 = ck.euler_run(mid, p, u, 640, True)
    assert b1 == b2
    assert np.array_equal(a1, a2)
    assert np.array_equal(xs1, xs2)


@pytest.mark.parametrize("mid,p", [c for c in CASES if c[0] != MG])
def test_batch_paths_bitwise_for_pow_free_models(mid, p):
    rng = np.random.default_rng(3)
    x0s = rng.uniform(0.2, 1.4, 500)
    e1 = _pure.ensemble_constant_final(mid, p, x0s, 512, 128)
    e2 = ck.ensemble_constant_final(mid, p, x0s, 512, 128)
    assert np.array_equal(e1, e2, equal_nan=True)

    U = rng.uniform(0.2, 1.4, (40, 129))
    B1, ok1 = _pure.batch_advance(mid, p, U, 384)
    B2, ok2 = ck.batch_advance(mid, p, U, 384)
    assert np.array_equal(ok1, ok2)
    assert np.array_equal(B1[ok1], B2[ok2])


def test_mackey_glass_batch_statistical_agreement():
    p = np.array([2.0, 4.0, 10.0, 0.0])
    x0s = np.linspace(0.3001, 1.2999, 20000)
    e1 = _pure.ensemble_constant_final(MG, p, x0s, 768, 128)
    e2 = ck.ensemble_constant_final(MG, p, x0s, 768, 128)
    h1, edges = np.histogram(e1, bins=60, range=(0.0, 1.6))
    h2, _ = np.histogram(e2, bins=60, range=(0.0, 1.6))
    # L1 between normalized histograms
    assert np.abs(h1 / h1.sum() - h2 / h2.sum()).sum() < 0.02


def test_cyclic_distance_parity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        w = rng.normal(size=rng.integers(3, 80))
        t = rng.normal(size=rng.integers(1, 120))
        kind = 0 if t.shape[0] == 1 else 1
        d1 = _pure.cyclic_sup_distance(w, t, kind)
        d2 = ck.cyclic_sup_distance(w, t, kind)
        assert d1 == d2


def test_escape_time_parity():
    p = np.array([3.25, 20.5, 1.0, 2.0])
    tf = np.concatenate([np.zeros(1), 1.5 + 0.5 * np.sin(np.linspace(0, 2 * np.pi, 300))])
    toff = np.array([0, 1, 301], dtype=np.int64)
    tk = np.array([0, 1], dtype=np.int64)
    dl = np.array([0.05, 0.05])
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = rng.uniform(0.5, 2.5, 65)
        t1 = _pure.escape_time(1, p, u, tf, toff, tk, dl, -10.0, 10.0, 40)
        t2 = ck.escape_time(1, p, u, tf, toff, tk, dl, -10.0, 10.0, 40)
        assert t1 == t2


def test_count_pairs_parity():
    rng = np.random.default_rng(17)
    pts = rng.normal(size=(400, 3))
    r2 = np.sort(rng.uniform(0.01, 20.0, 24))
    c1 = _pure.count_pairs(pts, r2, 7)
    c2 = ck.count_pairs(pts, r2, 7)
    assert np.array_equal(c1, c2)


def test_basin_classify_parity():
    p = np.array([3.25, 20.5, 1.0, 2.0])
    tf = np.zeros(1)
    toff = np.array([0, 1], dtype=np.int64)
    tk = np.array([0], dtype=np.int64)
    tols = np.array([0.05])
    wins = np.array([65], dtype=np.int64)
    u0 = np.full(65, 0.2)
    r1 = _pure.basin_classify(1, p, u0, 30, tf, toff, tk, tols, wins)
    r2 = ck.basin_classify(1, p, u0, 30, tf, toff, tk, tols, wins)
    assert r1 == r2
