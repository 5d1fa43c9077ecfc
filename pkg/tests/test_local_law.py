from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_graphs
from heavytail.graph_core import MarkedGraph, canonical_form
from heavytail.local_law import (
    EdgeRootedLaw,
    EmpiricalCounts,
    NeighborhoodLaw,
    edge_neighborhood_distribution,
    edge_root,
    hat_and_dot,
    mean_degree,
    neighborhood_distribution,
    restrict_law,
    root_degree_law,
    root_mark_law,
    size_bias,
    strip_marks,
    unimodularity_defect,
)
from heavytail.models import EnsembleConfig, sample_er_marked


def nx_graph(G, marks=None):
    e = list(G.edges())
    vals = np.ones((len(e), 1)) if marks is None else np.asarray(marks, float).reshape(-1, 1)
    return MarkedGraph.from_edges(G.number_of_nodes(), e, vals)


def same_law(a, b, tol=0.0):
    return set(a.atoms) == set(b.atoms) and a.max_weight_gap(b) <= tol


# -------------------------------------------------- neighborhood laws


def test_cycle_is_a_single_atom():
    mu = neighborhood_distribution(nx_graph(nx.cycle_graph(7)), 1)
    assert len(mu) == 1 and mu.total() == 1
    assert next(iter(mu))[0].root_degree == 2


def test_path_three_vertices():
    mu = neighborhood_distribution(nx_graph(nx.path_graph(3)), 1)
    assert root_degree_law(mu) == {1: Fraction(2, 3), 2: Fraction(1, 3)}


def test_edgeless_graph():
    mu = neighborhood_distribution(MarkedGraph.empty(5), 2)
    assert len(mu) == 1 and root_degree_law(mu) == {0: 1}
    with pytest.raises(ValueError):
        edge_neighborhood_distribution(MarkedGraph.empty(5), 1)


def test_edge_law_examples():
    single = edge_neighborhood_distribution(nx_graph(nx.path_graph(2)), 1)
    assert len(single) == 1 and single.total() == 1
    path = edge_neighborhood_distribution(nx_graph(nx.path_graph(3)), 2)
    assert all(w.denominator in (2, 4) for _, w in path)
    reg = edge_neighborhood_distribution(nx_graph(nx.petersen_graph()), 1)
    assert len(reg) == 1


# -------------------------------------------------------- edge rooting


def test_star_edge_rooting():
    # the root degree of an edge-rooted atom is visible from depth 2 on
    vec = edge_root(neighborhood_distribution(nx_graph(nx.star_graph(3)), 2))
    assert root_degree_law(vec) == {1: Fraction(1, 2), 3: Fraction(1, 2)}


def test_regular_edge_rooting():
    vec = edge_root(neighborhood_distribution(nx_graph(nx.cycle_graph(5)), 2))
    assert root_degree_law(vec) == {2: 1}


def test_zero_degree_errors():
    mu = neighborhood_distribution(MarkedGraph.empty(3), 1)
    with pytest.raises(ValueError):
        edge_root(mu)
    with pytest.raises(ValueError):
        size_bias(mu)


@given(small_graphs(), st.integers(1, 3))
def test_edge_law_equals_edge_rooted_uniform_law(g, h):
    if g.m == 0:
        return
    assert same_law(edge_neighborhood_distribution(g, h), edge_root(neighborhood_distribution(g, h)))


@given(small_graphs(), st.integers(2, 3))
def test_root_degree_size_bias_identity(g, h):
    if g.m == 0:
        return
    mu = neighborhood_distribution(g, h)
    dbar = mean_degree(mu)
    vec = root_degree_law(edge_root(mu))
    base = root_degree_law(mu)
    for k in set(vec) | set(base):
        assert vec.get(k, 0) == k * base.get(k, 0) / dbar


@given(small_graphs(), st.integers(1, 2))
def test_root_mark_law_is_normalized_edge_counting(g, h):
    if g.m == 0:
        return
    marks = root_mark_law(edge_root(neighborhood_distribution(g, h)))
    counts = {}
    for u, v in g.edges.tolist():
        for a, b in ((u, v), (v, u)):
            e = next(e for w, e, _ in g.adjacency[a] if w == b)
            out = next(o for w, _, o in g.adjacency[a] if w == b)
            key = g.mark_key(e, out)
            counts[key] = counts.get(key, 0) + 1
    assert marks == {k: Fraction(c, 2 * g.m) for k, c in counts.items()}


# ----------------------------------------------------------- hat / dot


def test_dot_inverts_edge_rooting_on_er_sample():
    g = sample_er_marked(EnsembleConfig("er_marked", 300, d=2.0, gamma={"point_masses": [[1.0, 0.5], [2.0, 0.5]]}, seed=4))
    mu = neighborhood_distribution(g, 2)
    dot = hat_and_dot(edge_root(mu), mean_degree(mu))
    assert same_law(dot, restrict_law(mu, 1))


@given(small_graphs(), st.integers(2, 3))
def test_dot_inverts_edge_rooting(g, h):
    if g.m == 0:
        return
    mu = neighborhood_distribution(g, h)
    assert same_law(hat_and_dot(edge_root(mu), mean_degree(mu)), restrict_law(mu, h - 1))


def test_regular_size_bias_is_identity():
    mu = neighborhood_distribution(nx_graph(nx.cycle_graph(6)), 2)
    assert same_law(size_bias(mu), mu)


def test_degree_one_dot_is_hat():
    mu = neighborhood_distribution(nx_graph(nx.path_graph(2)), 2)
    dot = hat_and_dot(edge_root(mu), 1)
    assert root_degree_law(dot) == {1: 1}  # p = 1: no isolated-root mass
    assert len(dot) == 1


def test_dot_needs_dbar_at_most_d_nu():
    vec = edge_root(neighborhood_distribution(nx_graph(nx.path_graph(2)), 2))
    with pytest.raises(ValueError):
        hat_and_dot(vec, 2)


# ------------------------------------------------------- unimodularity


@given(small_graphs(), st.integers(1, 3))
def test_finite_graphs_are_unimodular(g, h):
    assert unimodularity_defect(neighborhood_distribution(g, h)) <= 1e-12


def test_unimodularity_counterexample():
    # root always a leaf hanging off a degree-2 vertex: reversed edges never occur
    path = nx_graph(nx.path_graph(3))
    mu = NeighborhoodLaw.from_atoms(2, [(canonical_form(path, 0, 2), Fraction(1))])
    assert unimodularity_defect(mu) == 1.0


def test_isolated_vertex_defect_is_zero():
    assert unimodularity_defect(neighborhood_distribution(MarkedGraph.empty(1), 1)) == 0.0


# ---------------------------------------------------------------- misc


@given(small_graphs(max_n=6), small_graphs(max_n=6))
def test_empirical_counts_merge(a, b):
    ca, cb = EmpiricalCounts(1), EmpiricalCounts(1)
    for g, c in ((a, ca), (b, cb)):
        for v in range(g.n):
            c.add(canonical_form(g, v, 1))
    ab, ba = ca.merge(cb).law(), cb.merge(ca).law()
    assert same_law(ab, ba, 1e-15)
    assert abs(ab.total() - 1) < 1e-12


def test_strip_marks_merges_mark_variants():
    g = MarkedGraph.from_edges(3, [(0, 1), (1, 2)], [[1.0], [2.0]])
    mu = neighborhood_distribution(g, 1)
    assert len(mu) == 3 and len(strip_marks(mu)) == 2


def test_law_json_roundtrip():
    mu = neighborhood_distribution(nx_graph(nx.path_graph(4), [1.0, 2.0, 1.0]), 2)
    back = NeighborhoodLaw.from_dict(mu.to_dict())
    assert same_law(mu, back)
    assert isinstance(edge_root(mu), EdgeRootedLaw)
