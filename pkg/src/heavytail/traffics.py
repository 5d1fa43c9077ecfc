"""Test graphs, traffic and rooted-traffic evaluation, the injective transform
via Moebius inversion on the partition lattice, chromatic skeletons, free
products and the traffic-freeness factorization.

Convention: an edge e = (v -> w) with label l and star s contributes the
matrix entry Y_l^s(phi(w), phi(v)), where Y^* is the conjugate transpose.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import issparse

from .graph_core import Involution, MarkedGraph, RootedNeighborhood, label_values, to_operator
from .models import task_rng

BRUTE_FORCE_CAP = 8


@dataclass(frozen=True)
class TestGraph:
    """Directed multigraph with labeled, starred edges (v, w, label, star);
    star is True for *.  Self-loops and parallel edges are allowed."""

    __test__ = False  # keep pytest from collecting this class

    n_vertices: int
    edges: tuple[tuple[int, int, int, bool], ...] = ()
    root: int | None = 0
    check: bool = True

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(v), int(w), int(l), bool(s)) for v, w, l, s in self.edges))
        if self.n_vertices < 1:
            raise ValueError("a test graph has at least one vertex")
        for v, w, _, _ in self.edges:
            if not (0 <= v < self.n_vertices and 0 <= w < self.n_vertices):
                raise ValueError("edge endpoint out of range")
        if self.root is not None and not 0 <= self.root < self.n_vertices:
            raise ValueError("root out of range")
        if self.check and not self.is_connected:
            raise ValueError("test graph must be connected")

    @property
    def is_connected(self) -> bool:
        adj = self.undirected_adjacency()
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == self.n_vertices

    def undirected_adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n_vertices)]
        for v, w, _, _ in self.edges:
            adj[v].add(w)
            adj[w].add(v)
        return adj

    @property
    def labels(self) -> set[int]:
        return {l for _, _, l, _ in self.edges}

    def distances(self, source: int | None = None) -> dict[int, int]:
        src = self.root if source is None else source
        adj = self.undirected_adjacency()
        dist = {src: 0}
        q = deque([src])
        while q:
            v = q.popleft()
            for u in adj[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    q.append(u)
        return dist

    def is_cycle_or_path(self) -> bool:
        adj = self.undirected_adjacency()
        simple = all(v != w for v, w, _, _ in self.edges)
        degs = [len(a) for a in adj]
        m = len(self.edges)
        if not simple:
            return False
        if m == self.n_vertices and all(d == 2 for d in degs):
            return True
        return m == self.n_vertices - 1 and max(degs, default=0) <= 2

    def to_dict(self) -> dict:
        return {"vertices": self.n_vertices, "root": self.root,
                "edges": [{"from": v, "to": w, "label": l, "star": "*" if s else "1"}
                          for v, w, l, s in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "TestGraph":
        return cls(int(d["vertices"]),
                   tuple((e["from"], e["to"], e.get("label", 0), e.get("star", "1") == "*")
                         for e in d.get("edges", [])),
                   d.get("root", 0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def relabel(self, perm: Sequence[int]) -> "TestGraph":
        """Vertex v becomes perm[v]."""
        return TestGraph(self.n_vertices, tuple((perm[v], perm[w], l, s) for v, w, l, s in self.edges),
                         None if self.root is None else perm[self.root], self.check)

    @classmethod
    def cycle(cls, k: int, label: int = 0) -> "TestGraph":
        return cls(k, tuple((i, (i + 1) % k, label, False) for i in range(k)), 0)


# ----------------------------------------------------------------- evaluation

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _matrices(Ys) -> dict[int, np.ndarray]:
    if isinstance(Ys, dict):
        items = Ys.items()
    elif isinstance(Ys, (list, tuple)):
        items = enumerate(Ys)
    else:
        items = [(0, Ys)]
    return {int(l): (Y.toarray() if issparse(Y) else np.asarray(Y)) for l, Y in items}


def _operand(mats, label, star):
    M = mats[label]
    return M.conj().T if star else M


def _einsum_value(mats, H: TestGraph, fixed: dict[int, int] | None = None) -> complex:
    n = next(iter(mats.values())).shape[0] if mats else 1
    if H.n_vertices > len(_LETTERS):
        raise ValueError("too many vertices")
    ops: list = []
    for v, w, l, s in H.edges:
        ops += [_operand(mats, l, s), [w, v]]
    for v, u in (fixed or {}).items():
        e = np.zeros(n)
        e[u] = 1.0
        ops += [e, [v]]
    covered = {x for v, w, _, _ in H.edges for x in (v, w)} | set(fixed or {})
    free = H.n_vertices - len(covered)
    if not ops:
        return complex(n ** free)
    # path search costs more than the plain loop on small index spaces
    optimize = "greedy" if float(n) ** H.n_vertices > 1e5 else False
    val = np.einsum(*ops, [], optimize=optimize)
    return complex(val) * n ** free


def traffic_eval(Ys, H: TestGraph) -> complex:
    """tau_Y[H] = (1/n) sum over all maps phi: V_H -> [n] of the edge products."""
    if H.n_vertices > BRUTE_FORCE_CAP and not H.is_cycle_or_path():
        raise ValueError(f"test graph above the {BRUTE_FORCE_CAP}-vertex cap")
    mats = _matrices(Ys)
    n = next(iter(mats.values())).shape[0]
    return _einsum_value(mats, H) / n


def label_matrices(graph: MarkedGraph) -> dict[int, np.ndarray]:
    nl = graph.k // 2 if graph.involution.is_conjugation else graph.k
    return {j: to_operator(graph, j) for j in range(nl)}


def _graph_matrices(graph: MarkedGraph, H: TestGraph) -> dict[int, np.ndarray]:
    # cached on the (immutable) graph instance
    mats = graph.__dict__.get("_label_matrices")
    if mats is None:
        mats = label_matrices(graph) if graph.m else {}
        object.__setattr__(graph, "_label_matrices", mats)
    if graph.m:
        return mats
    return {l: np.zeros((graph.n, graph.n)) for l in H.labels or {0}}


def _rooted_args(g, root):
    if isinstance(g, RootedNeighborhood):
        return g.graph, g.root
    return g, (0 if root is None else root)


def _injective_sum(graph: MarkedGraph, root: int, H: TestGraph) -> complex:
    """Backtracking over injective root-preserving maps, BFS order of H from
    its root, candidates restricted to neighbors of the image of the BFS
    parent (other images give a zero entry)."""
    nl = graph.k // 2 if graph.involution.is_conjugation else graph.k
    f = label_values(graph, "fwd")
    b = label_values(graph, "bwd")
    entry: dict[tuple[int, int], np.ndarray] = {}
    for e, (u, v) in enumerate(graph.edges.tolist()):
        entry[(u, v)] = f[e]  # Y(u, v) = xi(u, v)
        entry[(v, u)] = b[e]
    zero = np.zeros(nl, dtype=f.dtype)
    adj = [[u for u, _, _ in a] for a in graph.adjacency]
    hr = H.root if H.root is not None else 0
    dist = H.distances(hr)
    order = sorted(range(H.n_vertices), key=lambda v: (dist[v], v))
    hadj = H.undirected_adjacency()
    parent = {}
    for v in order[1:]:
        parent[v] = min((u for u in hadj[v] if dist[u] == dist[v] - 1))
    # edges checked as soon as both endpoints are placed
    pos = {v: i for i, v in enumerate(order)}
    checks: list[list] = [[] for _ in order]
    for v, w, l, s in H.edges:
        checks[max(pos[v], pos[w])].append((v, w, l, s))
    phi: dict[int, int] = {}
    used: set[int] = set()
    total = [0j]

    def value(v, w, l, s) -> complex:
        a, c = phi[w], phi[v]
        if s:
            x = entry.get((c, a), zero)[l]
            return np.conj(x)
        return entry.get((a, c), zero)[l]

    def rec(i, acc):
        if i == len(order):
            total[0] += acc
            return
        v = order[i]
        cands = [root] if i == 0 else adj[phi[parent[v]]]
        for u in cands:
            if u in used:
                continue
            phi[v] = u
            used.add(u)
            a = acc
            for e in checks[i]:
                a = a * value(*e)
                if a == 0:
                    break
            if a != 0:
                rec(i + 1, a)
            used.discard(u)
            del phi[v]

    rec(0, 1 + 0j)
    return total[0]


def rooted_traffic_eval(g, H: TestGraph, injective: bool = False, root: int | None = None) -> complex:
    """tau_{G,o}[H] (all root-preserving maps) or tau^0_{G,o}[H] (injective)."""
    graph, o = _rooted_args(g, root)
    hr = H.root if H.root is not None else 0
    if injective:
        return _injective_sum(graph, o, H)
    if graph.m == 0 and H.edges:
        return 0j
    return _einsum_value(_graph_matrices(graph, H), H, {hr: o})


def brute_force_rooted(graph: MarkedGraph, root: int, H: TestGraph, injective: bool) -> complex:
    """Vectorized enumeration of all (or all injective) root-preserving maps."""
    mats = _graph_matrices(graph, H)
    hr = H.root if H.root is not None else 0
    others = [v for v in range(H.n_vertices) if v != hr]
    k = len(others)
    if injective:
        pool = [u for u in range(graph.n) if u != root]
        tuples = list(itertools.permutations(pool, k))
    else:
        tuples = list(itertools.product(range(graph.n), repeat=k))
    rows = np.array(tuples, dtype=np.int64).reshape(len(tuples), k)
    maps = np.empty((len(rows), H.n_vertices), dtype=np.int64)
    maps[:, hr] = root
    maps[:, others] = rows
    prod = np.ones(len(maps), dtype=complex)
    for v, w, l, s in H.edges:
        M = _operand(mats, l, s)
        prod *= M[maps[:, w], maps[:, v]]
    return complex(prod.sum())


# --------------------------------------------------------- partition lattice


def set_partitions(n: int) -> Iterable[tuple[int, ...]]:
    """Set partitions of range(n) as restricted-growth strings."""
    if n == 0:
        yield ()
        return
    a = [0] * n

    def rec(i, m):
        if i == n:
            yield tuple(a)
            return
        for b in range(m + 2):
            a[i] = b
            yield from rec(i + 1, max(m, b))

    a[0] = 0
    yield from rec(1, 0)


def _canonical_rgs(labels: Sequence[int]) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def n_blocks(pi: Sequence[int]) -> int:
    return max(pi) + 1 if len(pi) else 0


def quotient(H: TestGraph, pi: Sequence[int]) -> TestGraph:
    """Identify vertices lying in a same block; edges are kept (loops and
    parallel edges may appear).  Blocks are numbered by first occurrence."""
    if len(pi) != H.n_vertices:
        raise ValueError("partition size does not match the test graph")
    pi = _canonical_rgs(pi)
    return TestGraph(n_blocks(pi), tuple((pi[v], pi[w], l, s) for v, w, l, s in H.edges),
                     None if H.root is None else pi[H.root], H.check)


def _coarsenings(pi: tuple[int, ...]):
    """(sigma, block sizes of the coarsening) for every sigma >= pi."""
    k = n_blocks(pi)
    for rho in set_partitions(k):
        sizes = np.bincount(rho, minlength=n_blocks(rho)) if k else np.zeros(0, int)
        yield _canonical_rgs([rho[b] for b in pi]), sizes


def mobius_forward(table0: dict) -> dict:
    """tau[H^pi] = sum_{sigma >= pi} tau^0[H^sigma] for every partition pi."""
    if not table0:
        raise ValueError("empty table")
    n = len(next(iter(table0)))
    out = {}
    for pi in set_partitions(n):
        s = 0j
        for sigma, _ in _coarsenings(pi):
            if sigma not in table0:
                raise ValueError(f"quotient {sigma} missing from table")
            s += table0[sigma]
        out[pi] = s
    return out


def _mobius_coef(sizes) -> int:
    c = 1
    for b in sizes:
        c *= (-1) ** (int(b) - 1) * math.factorial(int(b) - 1)
    return c


def mobius_inverse(table: dict) -> dict:
    """tau^0[H^pi] = sum_{sigma >= pi} prod_B (-1)^{|B|-1} (|B|-1)! tau[H^sigma]."""
    if not table:
        raise ValueError("empty table")
    n = len(next(iter(table)))
    out = {}
    for pi in set_partitions(n):
        s = 0j
        for sigma, sizes in _coarsenings(pi):
            if sigma not in table:
                raise ValueError(f"quotient {sigma} missing from table")
            s += _mobius_coef(sizes) * table[sigma]
        out[pi] = s
    return out


def quotient_table(H: TestGraph, evaluate: Callable[[TestGraph], complex]) -> dict:
    """evaluate(H^pi) for every set partition pi of V_H."""
    return {pi: evaluate(quotient(H, pi)) for pi in set_partitions(H.n_vertices)}


# ----------------------------------------------------------- skeleton, GCC


def chromatic_skeleton(graph: MarkedGraph, root: int | None = 0) -> TestGraph:
    """One undirected j-edge (stored u -> v, u < v) per nonzero coordinate j of
    each mark."""
    vals = label_values(graph, "fwd") if graph.m else np.zeros((0, 1))
    edges = []
    for e, (u, v) in enumerate(graph.edges.tolist()):
        for j in np.nonzero(vals[e])[0].tolist():
            edges.append((u, v, j, False))
    return TestGraph(max(graph.n, 1), tuple(edges), root, check=False)


@dataclass(frozen=True)
class ColoredComponent:
    side: int  # 1 or 2
    vertices: tuple[int, ...]
    edges: tuple[int, ...]  # indices into H.edges


def colored_components(H: TestGraph, labels1: set[int]):
    """Maximal connected subgraphs labeled in J1 or in J2, the graph of colored
    components (one edge per shared vertex) and whether it is a tree."""
    comps: list[ColoredComponent] = []
    for side in (1, 2):
        idx = [i for i, (_, _, l, _) in enumerate(H.edges) if (l in labels1) == (side == 1)]
        parent = list(range(H.n_vertices))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        touched = set()
        for i in idx:
            v, w = H.edges[i][:2]
            touched |= {v, w}
            parent[find(v)] = find(w)
        groups: dict[int, list] = {}
        for v in sorted(touched):
            groups.setdefault(find(v), []).append(v)
        for rep, verts in groups.items():
            es = tuple(i for i in idx if find(H.edges[i][0]) == rep)
            comps.append(ColoredComponent(side, tuple(verts), es))
    gcc_edges = []
    for v in range(H.n_vertices):
        inside = [c for c, comp in enumerate(comps) if v in comp.vertices]
        for a, b in itertools.combinations(inside, 2):
            gcc_edges.append((a, b, v))
    # connected because H is; a tree iff edges = nodes - 1
    is_tree = len(gcc_edges) == max(len(comps) - 1, 0)
    return comps, gcc_edges, is_tree


# -------------------------------------------------------------- free product


def _embed(graph: MarkedGraph, offset: int, total_k: int) -> np.ndarray:
    out = np.zeros((graph.m, total_k))
    if graph.m:
        out[:, offset:offset + graph.k] = graph.fwd
    return out


def _joint_involution(i1: Involution, i2: Involution) -> Involution:
    k1 = i1.k
    return Involution(tuple(i1.signs) + tuple(i2.signs), tuple(i1.perm) + tuple(p + k1 for p in i2.perm))


def free_product_sample(sampler1: Callable, sampler2: Callable, h: int, seed=0,
                        max_vertices: int = 200_000, rng=None) -> RootedNeighborhood:
    """Depth-h sample of the free product of two rooted graph laws.

    sampler_i(rng) returns a RootedNeighborhood.  Copies of mu_1 and mu_2 are
    fused at the root; every non-root vertex of a mu_1 copy at distance < h
    from the root receives a fused mu_2 copy and vice versa.  Vertices farther
    than h are dropped.  Marks are padded with zeros into R^{k1 + k2}.
    """
    rng = rng if rng is not None else task_rng(seed)
    samplers = {1: sampler1, 2: sampler2}
    first = {1: sampler1(rng), 2: sampler2(rng)}
    k1, k2 = first[1].graph.k, first[2].graph.k
    inv = _joint_involution(first[1].graph.involution, first[2].graph.involution)
    total_k = k1 + k2
    offsets = {1: 0, 2: k1}
    us, vs, vals = [], [], []
    dist = [0]
    queue = deque()  # (global vertex, side of the copy it must receive)

    def attach(sample: RootedNeighborhood, side: int, at: int):
        g = sample.graph
        d = g.bfs_distances([sample.root])
        keep = {sample.root: at}
        for w, dw in sorted(d.items(), key=lambda kv: kv[1]):
            if w == sample.root or dist[at] + dw > h:
                continue
            keep[w] = len(dist)
            dist.append(dist[at] + dw)
            if len(dist) > max_vertices:
                raise ValueError("free product population exceeds the cap")
            queue.append((keep[w], 3 - side))
        emb = _embed(g, offsets[side], total_k)
        for e, (a, b) in enumerate(g.edges.tolist()):
            if a in keep and b in keep:
                us.append(keep[a])
                vs.append(keep[b])
                vals.append(emb[e])

    attach(first[1], 1, 0)
    attach(first[2], 2, 0)
    while queue:
        v, side = queue.popleft()
        if dist[v] < h:
            attach(samplers[side](rng), side, v)
    n = len(dist)
    if us:
        graph = MarkedGraph.from_edges(n, np.stack([us, vs], 1), np.array(vals), involution=inv)
    else:
        graph = MarkedGraph.empty(n, inv)
    return RootedNeighborhood(graph, 0, h, None, None)


def _component_graph(H: TestGraph, comp: ColoredComponent, root: int, shift: int) -> TestGraph:
    index = {v: i for i, v in enumerate(comp.vertices)}
    es = tuple((index[H.edges[i][0]], index[H.edges[i][1]], H.edges[i][2] - shift, H.edges[i][3])
               for i in comp.edges)
    return TestGraph(len(comp.vertices), es, index[root])


def traffic_freeness_check(g, H: TestGraph, mu1, mu2, labels1: set[int] | int,
                           rtol: float = 1e-12) -> tuple[complex, complex, bool]:
    """lhs = tau^0_g[H]; rhs = 1(GCC(H) is a tree) prod_S tau^0_{mu_i(S)}[S]
    with each colored component S rooted at its vertex closest to the root.

    mu1 and mu2 are rooted marginal samples (deterministic laws); labels of
    J1 are range(|J1|) when labels1 is an int, J2 labels follow.
    """
    if H.n_vertices > BRUTE_FORCE_CAP:
        raise ValueError(f"test graph above the {BRUTE_FORCE_CAP}-vertex cap")
    if isinstance(labels1, int):
        shift = labels1
        labels1 = set(range(labels1))
    else:
        shift = len(labels1)
    lhs = rooted_traffic_eval(g, H, injective=True)
    comps, _, is_tree = colored_components(H, labels1)
    if not is_tree:
        rhs = 0j
    else:
        dist = H.distances()
        rhs = 1 + 0j
        for comp in comps:
            cut = min(comp.vertices, key=lambda v: (dist[v], v))
            S = _component_graph(H, comp, cut, 0 if comp.side == 1 else shift)
            rhs *= rooted_traffic_eval(mu1 if comp.side == 1 else mu2, S, injective=True)
    equal = abs(lhs - rhs) <= rtol * max(1.0, abs(lhs), abs(rhs))
    return lhs, rhs, bool(equal)
