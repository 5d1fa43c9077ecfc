import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from networkx.algorithms.isomorphism import GraphMatcher

from heavytail.acceptance import single_edge_law
from heavytail.graph_core import Involution, MarkedGraph, RootedNeighborhood
from heavytail.models import EnsembleConfig, sample_sparse_wigner
from heavytail.spectral import trace_moment
from heavytail.traffics import (
    TestGraph,
    brute_force_rooted,
    chromatic_skeleton,
    colored_components,
    free_product_sample,
    mobius_forward,
    mobius_inverse,
    quotient,
    quotient_table,
    rooted_traffic_eval,
    set_partitions,
    traffic_eval,
    traffic_freeness_check,
)

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140]


def hermitian(rng, n, density=0.6):
    A = (rng.random((n, n)) < density) * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    A = np.triu(A, 1)
    return A + A.conj().T


@st.composite
def traffic_graphs(draw, max_vertices=4, labels=(0,)):
    n = draw(st.integers(1, max_vertices))
    tree = [(draw(st.integers(0, i - 1)), i) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3))
    edges = []
    for v, w in tree + extra:
        if draw(st.booleans()):
            v, w = w, v
        edges.append((v, w, draw(st.sampled_from(labels)), draw(st.booleans())))
    return TestGraph(n, tuple(edges), draw(st.integers(0, n - 1)))


# ------------------------------------------------------------ test graphs


def test_test_graph_validation():
    with pytest.raises(ValueError):
        TestGraph(2, ())
    with pytest.raises(ValueError):
        TestGraph(2, ((0, 2, 0, False),))
    with pytest.raises(ValueError):
        TestGraph(0)


def test_test_graph_json_roundtrip():
    H = TestGraph(3, ((0, 1, 0, False), (1, 2, 1, True), (2, 2, 0, False)), 1)
    assert TestGraph.from_dict(H.to_dict()) == H
    assert TestGraph.from_dict(__import__("json").loads(H.to_json())) == H


# ------------------------------------------------------------- evaluation


def test_traffic_examples():
    rng = np.random.default_rng(0)
    Y = hermitian(rng, 7)
    assert traffic_eval(Y, TestGraph(1)) == pytest.approx(1)
    double = TestGraph(2, ((0, 1, 0, False), (1, 0, 0, True)))
    assert traffic_eval(Y, double) == pytest.approx((np.abs(Y) ** 2).sum() / 7)


@pytest.mark.parametrize("k", range(1, 7))
def test_cycles_are_trace_moments(k):
    Y = sample_sparse_wigner(EnsembleConfig("sparse_wigner", 200, d=3.0, gamma={"gaussian": [0, 1]}, seed=k))
    assert traffic_eval(Y, TestGraph.cycle(k)).real == pytest.approx(trace_moment(Y, k), abs=1e-10)


@given(traffic_graphs(labels=(0, 1)), st.integers(0, 2 ** 31 - 1))
def test_traffic_eval_matches_enumeration(H, seed):
    rng = np.random.default_rng(seed)
    Ys = {0: hermitian(rng, 4), 1: hermitian(rng, 4)}
    ref = 0j
    for phi in itertools.product(range(4), repeat=H.n_vertices):
        p = 1 + 0j
        for v, w, l, s in H.edges:
            p *= np.conj(Ys[l][phi[v], phi[w]]) if s else Ys[l][phi[w], phi[v]]
        ref += p
    assert traffic_eval(Ys, H) == pytest.approx(ref / 4, abs=1e-10)


@given(traffic_graphs(), st.integers(0, 2 ** 31 - 1))
def test_traffic_eval_is_relabeling_invariant(H, seed):
    rng = np.random.default_rng(seed)
    Y = hermitian(rng, 5)
    perm = rng.permutation(H.n_vertices).tolist()
    assert traffic_eval(Y, H.relabel(perm)) == pytest.approx(traffic_eval(Y, H), abs=1e-10)


def test_rooted_examples():
    g = MarkedGraph.from_edges(2, [(0, 1)], [[2.0]])
    H = TestGraph(2, ((0, 1, 0, False),), 0)
    assert rooted_traffic_eval(g, H) == pytest.approx(2)
    assert rooted_traffic_eval(g, H, injective=True) == pytest.approx(2)
    assert rooted_traffic_eval(g, TestGraph(1), root=1) == pytest.approx(1)
    iso = MarkedGraph.empty(1)
    assert rooted_traffic_eval(iso, H) == 0
    assert rooted_traffic_eval(iso, H, injective=True) == 0


def test_rooted_average_is_traffic():
    rng = np.random.default_rng(1)
    Y = hermitian(rng, 6)
    from heavytail.graph_core import from_matrix

    g = from_matrix(Y)
    H = TestGraph(3, ((0, 1, 0, False), (1, 2, 0, True), (2, 0, 0, False)), 0)
    avg = np.mean([rooted_traffic_eval(g, H, root=o) for o in range(6)])
    assert avg == pytest.approx(traffic_eval(Y, H), abs=1e-10)


# ---------------------------------------------------------------- Moebius


def test_set_partitions_count():
    for n, b in enumerate(BELL):
        parts = list(set_partitions(n))
        assert len(parts) == b and len(set(parts)) == b


def test_mobius_single_vertex():
    t0 = {(0,): 3.5 + 0j}
    assert mobius_forward(t0) == t0 and mobius_inverse(t0) == t0


def test_mobius_single_edge():
    t0 = {(0, 1): 2.0 + 0j, (0, 0): 5.0 + 0j}
    assert mobius_forward(t0)[(0, 1)] == 7.0
    assert mobius_inverse(mobius_forward(t0)) == t0


@given(traffic_graphs(max_vertices=4, labels=(0, 1)), st.integers(0, 2 ** 31 - 1))
def test_mobius_matches_brute_force(H, seed):
    rng = np.random.default_rng(seed)
    n = 6
    inv = Involution.conjugation(2)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.6] or [(0, 1)]
    vals = rng.normal(size=(len(edges), 4)) * (rng.random((len(edges), 4)) < 0.8)
    g = MarkedGraph.from_edges(n, edges, vals, involution=inv)
    o = int(rng.integers(n))
    t0 = quotient_table(H, lambda Q: brute_force_rooted(g, o, Q, True))
    t = quotient_table(H, lambda Q: brute_force_rooted(g, o, Q, False))
    fwd = mobius_forward(t0)
    back = mobius_inverse(t)
    for pi in t:
        assert abs(fwd[pi] - t[pi]) <= 1e-12 * max(1, abs(t[pi]))
        assert abs(back[pi] - t0[pi]) <= 1e-12 * max(1, abs(t[pi]))
        Q = quotient(H, pi)
        assert rooted_traffic_eval(g, Q, injective=True, root=o) == pytest.approx(t0[pi], abs=1e-10)


def test_mobius_missing_entry():
    with pytest.raises(ValueError):
        mobius_forward({(0, 1): 1.0})


def test_quotient_examples():
    H = TestGraph(3, ((0, 1, 0, False), (1, 2, 0, False)), 0)
    assert quotient(H, (0, 1, 2)) == H
    assert quotient(TestGraph(2, ((0, 1, 0, False),)), (0, 0)).edges == ((0, 0, 0, False),)
    Q = quotient(H, (0, 1, 0))
    assert Q.n_vertices == 2 and Q.edges == ((0, 1, 0, False), (1, 0, 0, False))


# --------------------------------------------------------------- skeleton


def test_skeleton_examples():
    two = Involution.identity(2)
    g = MarkedGraph.from_edges(2, [(0, 1)], [[2.0, 0.0]], involution=two)
    assert chromatic_skeleton(g).edges == ((0, 1, 0, False),)
    g = MarkedGraph.from_edges(2, [(0, 1)], [[2.0, 3.0]], involution=two)
    assert sorted(chromatic_skeleton(g).edges) == [(0, 1, 0, False), (0, 1, 1, False)]
    assert chromatic_skeleton(MarkedGraph.empty(3)).edges == ()


def rooted_automorphisms(skel: TestGraph, root: int) -> int:
    G = nx.MultiGraph()
    G.add_nodes_from(range(skel.n_vertices))
    for v in G.nodes:
        G.nodes[v]["root"] = v == root
    for u, v, j, _ in skel.edges:
        G.add_edge(u, v, label=j)
    gm = GraphMatcher(G, G, node_match=lambda a, b: a["root"] == b["root"],
                      edge_match=lambda a, b: sorted(d["label"] for d in a.values())
                      == sorted(d["label"] for d in b.values()))
    return sum(1 for _ in gm.isomorphisms_iter())


@pytest.mark.parametrize("n", range(2, 8))
def test_skeleton_automorphism_identity(n):
    rng = np.random.default_rng(n)
    marks = np.array([[1.5, 0.0], [0.0, -2.0], [0.7, 1.1]])
    for trial in range(6):
        tree = nx.random_labeled_tree(n, seed=int(rng.integers(2 ** 31)))
        e = list(tree.edges())
        vals = marks[rng.integers(0, 3, size=len(e))] if trial % 2 else np.tile(marks[0], (len(e), 1))
        g = MarkedGraph.from_edges(n, e, vals, involution=Involution.identity(2))
        o = int(rng.integers(n))
        skel = chromatic_skeleton(g, o)
        H0 = TestGraph(n, tuple(x for u, v, j, _ in skel.edges for x in ((u, v, j, False), (v, u, j, True))), o)
        weight = float(np.prod(vals[vals != 0] ** 2))
        expected = rooted_automorphisms(skel, o) * weight
        assert brute_force_rooted(g, o, H0, True) == pytest.approx(expected)
        assert rooted_traffic_eval(g, H0, injective=True, root=o) == pytest.approx(expected)


# ----------------------------------------------------- colored components


def test_colored_components_examples():
    mono = TestGraph(3, ((0, 1, 0, False), (1, 2, 0, False)))
    comps, _, tree = colored_components(mono, {0})
    assert len(comps) == 1 and tree
    path = TestGraph(3, ((0, 1, 0, False), (1, 2, 1, False)))
    comps, gcc, tree = colored_components(path, {0})
    assert len(comps) == 2 and len(gcc) == 1 and gcc[0][2] == 1 and tree
    square = TestGraph(4, ((0, 1, 0, False), (1, 2, 1, False), (2, 3, 0, False), (3, 0, 1, False)))
    comps, gcc, tree = colored_components(square, {0})
    assert len(comps) == 4 and not tree


# ------------------------------------------------------------ free product


def isolated(rng):
    return RootedNeighborhood(MarkedGraph.empty(1), 0, 4, None, None)


def test_free_product_of_isolated_roots():
    out = free_product_sample(isolated, isolated, 4)
    assert out.graph.n == 1 and out.graph.m == 0


def test_free_product_alternating_path():
    a, b = 2.0 + 0j, 3.0 - 0.5j
    h = 5
    out = free_product_sample(lambda r: single_edge_law(a, h), lambda r: single_edge_law(b, h), h)
    g = out.graph
    assert g.n == 1 + 2 * h
    assert sorted(g.degrees.tolist()) == [1, 1] + [2] * (2 * h - 1)
    dist = g.bfs_distances([0])
    assert max(dist.values()) == h
    # along each branch from the root the side of the nonzero coordinate alternates
    for first, _, _ in g.adjacency[0]:
        prev, v, sides = 0, first, []
        while True:
            e = next(e for w, e, _ in g.adjacency[v] if w == prev)
            sides.append(int(np.flatnonzero(g.fwd[e])[0] >= 2))
            nxt = [w for w, _, _ in g.adjacency[v] if w != prev]
            if not nxt:
                break
            prev, v = v, nxt[0]
        assert len(sides) == h and all(x != y for x, y in zip(sides, sides[1:]))


def test_free_product_components_are_monochromatic_trees():
    h = 4
    rng = np.random.default_rng(2)

    def triangle(r):
        g = MarkedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)], [[1.0], [2.0], [3.0]])
        return RootedNeighborhood(g, 0, h, None, None)

    out = free_product_sample(triangle, lambda r: single_edge_law(1j, h), h, rng=rng)
    skel = chromatic_skeleton(out.graph, 0)
    H = TestGraph(skel.n_vertices, skel.edges, 0)
    comps, _, tree = colored_components(H, {0})
    assert tree
    assert all(len({H.edges[i][2] in (0,) for i in c.edges}) == 1 for c in comps)


def test_freeness_examples():
    a, b, h = 2.0 + 0j, 3.0 - 0.5j, 6
    mu1, mu2 = single_edge_law(a, h), single_edge_law(b, h)
    g = free_product_sample(lambda r: mu1, lambda r: mu2, h)
    # edges point toward the root so that each contributes xi(parent, child)
    path = TestGraph(3, ((1, 0, 0, False), (2, 1, 1, False)), 0)
    lhs, rhs, ok = traffic_freeness_check(g, path, mu1, mu2, 1)
    assert ok and lhs == pytest.approx(a * b)
    square = TestGraph(4, ((0, 1, 0, False), (1, 2, 1, False), (2, 3, 0, False), (3, 0, 1, False)), 0)
    lhs, rhs, ok = traffic_freeness_check(g, square, mu1, mu2, 1)
    assert ok and lhs == 0 and rhs == 0
    mono = TestGraph(2, ((0, 1, 0, True),), 0)
    lhs, rhs, ok = traffic_freeness_check(g, mono, mu1, mu2, 1)
    assert ok and lhs == pytest.approx(rooted_traffic_eval(mu1, mono, injective=True))
