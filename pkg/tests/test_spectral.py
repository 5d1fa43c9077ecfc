import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigh

from conftest import small_graphs, small_trees
from heavytail.graph_core import Involution, MarkedGraph, from_matrix, to_operator
from heavytail.limits import DegreeLaw, sample_ugw
from heavytail.models import EnsembleConfig, sample_sparse_wigner
from heavytail.spectral import (
    SpectralMeasure,
    eigenvalues,
    esd,
    kolmogorov_distance,
    limit_esd_estimate,
    measure_to_json,
    mixture,
    moments,
    rank_inequality_check,
    root_spectral_measure,
    surrogate_bl,
    trace_moment,
    w1_distance,
)


def atoms(L, digits=9):
    """Merge numerically equal atoms: {value: weight}."""
    out: dict = {}
    for v, w in zip(np.round(L.values, digits), L.weights):
        if w > 1e-12:
            out[float(v) + 0.0] = out.get(float(v) + 0.0, 0.0) + w
    return out


def dense_root_measure(g, root):
    lam, V = eigh(to_operator(g))
    return SpectralMeasure(lam, np.abs(V[root]) ** 2)


# -------------------------------------------------------------------- ESD


def test_esd_examples():
    assert atoms(esd(np.array([[0.0, 1.0], [1.0, 0.0]]))) == pytest.approx({-1.0: 0.5, 1.0: 0.5})
    assert atoms(esd(np.zeros((4, 4)))) == {0.0: 1.0}
    k3 = esd(np.ones((3, 3)) - np.eye(3))
    assert np.allclose(k3.values, [-1, -1, 2])


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        eigenvalues(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_eigenvalue_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("HEAVYTAIL_CACHE", str(tmp_path))
    A = np.array([[0.0, 2.0], [2.0, 1.0]])
    a = eigenvalues(A)
    assert len(list(tmp_path.iterdir())) == 1
    assert np.array_equal(a, eigenvalues(A))


def test_bipartite_spectrum_is_symmetric():
    g = sample_ugw({"gaussian": [0, 1]}, DegreeLaw.poisson(2.0), 4, seed=3).graph
    lam = esd(to_operator(g)).values
    assert np.allclose(np.sort(lam), np.sort(-lam), atol=1e-9)


# ----------------------------------------------------------- root measure


def test_root_measure_examples():
    assert atoms(root_spectral_measure(MarkedGraph.empty(1), 0)) == {0.0: 1.0}
    t = 1.7
    edge = MarkedGraph.from_edges(2, [(0, 1)], [[t]])
    assert atoms(root_spectral_measure(edge, 0)) == pytest.approx({-t: 0.5, t: 0.5})
    d = 5
    star = MarkedGraph.from_edges(d + 1, [(0, i) for i in range(1, d + 1)])
    m = atoms(root_spectral_measure(star, 0))
    assert m == pytest.approx({round(-np.sqrt(d), 9): 0.5, round(np.sqrt(d), 9): 0.5})


@given(small_trees(max_n=10, marks=(1.0, -2.0, 0.5)), st.integers(0, 9))
def test_compressed_tree_matches_dense(g, r):
    root = r % g.n
    a, b = root_spectral_measure(g, root), dense_root_measure(g, root)
    for k in range(0, 9):
        assert moments(a, k) == pytest.approx(moments(b, k), rel=1e-9, abs=1e-9)


@given(small_graphs(max_n=7))
def test_root_measure_is_probability_with_walk_moments(g):
    L = root_spectral_measure(g, 0)
    assert abs(L.mass - 1) < 1e-12
    A = to_operator(g)
    for k in range(5):
        assert moments(L, k) == pytest.approx(np.linalg.matrix_power(A, k)[0, 0], abs=1e-9)


def test_root_measure_complex_marks():
    inv = Involution.conjugation(1)
    g = MarkedGraph.from_edges(3, [(0, 1), (1, 2)], [[1.0, 2.0], [0.0, -1.0]], involution=inv)
    a, b = root_spectral_measure(g, 1), dense_root_measure(g, 1)
    for k in range(6):
        assert moments(a, k) == pytest.approx(moments(b, k), abs=1e-10)


def test_regular_tree_walk_counts():
    # closed walks at the root of the 3-regular tree: 1, 3, 15, 87, 543
    L = root_spectral_measure(sample_ugw(1.0, DegreeLaw.point(3), 5, seed=0))
    assert [round(moments(L, k), 8) for k in (0, 2, 4, 6, 8)] == [1, 3, 15, 87, 543]
    assert abs(moments(L, 3)) < 1e-9


# ------------------------------------------------------- limit estimate


def test_deterministic_limit_estimate():
    params = {"gamma": 1.0, "pi": DegreeLaw.point(3)}
    a = limit_esd_estimate("ugw", params, 4, None, 3, seed=1)
    b = root_spectral_measure(sample_ugw(1.0, DegreeLaw.point(3), 4))
    assert atoms(a) == pytest.approx(atoms(b))


def test_single_sample_estimate_is_the_root_measure():
    from heavytail.models import task_rng

    params = {"gamma": {"gaussian": [0, 1]}, "pi": DegreeLaw.poisson(2.0)}
    a = limit_esd_estimate("ugw", params, 3, None, 1, seed=5)
    t = sample_ugw(params["gamma"], params["pi"], 3, rng=task_rng(5, 0))
    assert atoms(a) == pytest.approx(atoms(root_spectral_measure(t)))


def test_limit_estimate_independent_of_jobs():
    params = {"gamma": 1.0, "pi": DegreeLaw.poisson(2.0)}
    a = limit_esd_estimate("ugw", params, 3, None, 8, seed=2, jobs=1)
    b = limit_esd_estimate("ugw", params, 3, None, 8, seed=2, jobs=2)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.weights, b.weights)


# ----------------------------------------------------------------- moments


def test_moment_examples():
    L = esd(np.ones((3, 3)) - np.eye(3))
    assert moments(L, 0) == pytest.approx(1)
    assert moments(L, 3) == pytest.approx(2)
    Y = sample_sparse_wigner(EnsembleConfig("sparse_wigner", 300, d=3.0, seed=1))
    assert trace_moment(Y, 2) == pytest.approx(Y.nnz / 300)


@pytest.mark.parametrize("k", range(0, 9))
def test_trace_moment_matches_eigenvalues(k):
    Y = sample_sparse_wigner(EnsembleConfig("sparse_wigner", 150, d=4.0, gamma={"gaussian": [0, 1]}, seed=k))
    assert trace_moment(Y, k) == pytest.approx(moments(esd(Y), k), rel=1e-9, abs=1e-9)


def test_moment_order_cap():
    with pytest.raises(ValueError):
        moments(SpectralMeasure.dirac(), 13)


# ----------------------------------------------------------------- metrics


def test_metric_examples():
    L = esd(np.ones((3, 3)) - np.eye(3))
    assert w1_distance(L, L) == kolmogorov_distance(L, L) == surrogate_bl(L, L) == 0
    t = 0.4
    a, b = SpectralMeasure.dirac(0), SpectralMeasure.dirac(t)
    assert w1_distance(a, b) == pytest.approx(t)
    assert kolmogorov_distance(a, b) == 1
    assert surrogate_bl(a, b) == pytest.approx(min(t, 1))
    half = mixture([SpectralMeasure.dirac(0), SpectralMeasure.dirac(1)])
    assert kolmogorov_distance(a, half) == pytest.approx(0.5)
    assert w1_distance(a, half) == pytest.approx(0.5)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_w1_matches_scipy(x, y):
    from scipy.stats import wasserstein_distance

    a, b = SpectralMeasure.uniform(x), SpectralMeasure.uniform(y)
    assert w1_distance(a, b) == pytest.approx(wasserstein_distance(x, y), abs=1e-9)
    assert w1_distance(a, b) == pytest.approx(w1_distance(b, a), abs=1e-12)


def test_clip_reports_moved_mass():
    L, moved = SpectralMeasure.uniform([-20.0, 0.0, 1.0, 30.0]).clip(-10, 10)
    assert moved == 0.5 and L.values.min() == -10 and L.values.max() == 10


# ------------------------------------------------------------ rank bound


def test_rank_inequality_examples():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(40, 40))
    A = A + A.T
    ks, bound, ok = rank_inequality_check(A, A)
    assert ks == 0 and bound == 0 and ok
    B = A.copy()
    B[3, :] = 0
    B[:, 3] = 0
    ks, bound, ok = rank_inequality_check(A, B)
    assert ok and bound <= 2 / 40


def test_rank_one_perturbations():
    rng = np.random.default_rng(1)
    for _ in range(100):
        A = rng.normal(size=(30, 30))
        A = (A + A.T) / 2
        v = rng.normal(size=30)
        _, bound, ok = rank_inequality_check(A, A + rng.normal() * np.outer(v, v))
        assert ok and bound == 1 / 30


def test_rank_dimension_mismatch():
    with pytest.raises(ValueError):
        rank_inequality_check(np.zeros((2, 2)), np.zeros((3, 3)))


def test_measure_json():
    import json

    d = json.loads(measure_to_json(SpectralMeasure.uniform([0.0, 1.0]), bins=2, extra={"n": 2}))
    assert d["masses"] == [0.5, 0.5] and d["n"] == 2


def test_from_matrix_esd_agrees():
    Y = sample_sparse_wigner(EnsembleConfig("sparse_wigner", 60, d=3.0, gamma={"gaussian": [0, 1]}, seed=4))
    a, b = esd(Y), esd(to_operator(from_matrix(Y.toarray())))
    assert np.allclose(a.values, b.values)
