"""Symmetric marked graphs, mark involutions, quantization, truncations and
canonical forms of rooted neighborhoods.

A marked graph stores every edge once, as the pair (u, v) with u < v, together
with the two marks xi(u, v) and xi(v, u).  Marks are a color (small int) and a
real vector; the reverse mark of a symmetric graph is the involution of the
forward one.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix, issparse
from scipy.sparse.csgraph import maximum_bipartite_matching

DEFAULT_CAP = 64


class CapExceeded(RuntimeError):
    """A neighborhood is larger than the configured vertex cap."""


# ---------------------------------------------------------------- involution


@dataclass(frozen=True)
class Involution:
    """Signed coordinate involution x* = (eps_i x_{tau(i)})_i on R^k."""

    signs: tuple[int, ...]
    perm: tuple[int, ...]

    def __post_init__(self):
        k = len(self.signs)
        if k < 1 or len(self.perm) != k:
            raise ValueError("signs and perm must have the same positive length")
        if sorted(self.perm) != list(range(k)):
            raise ValueError("perm is not a permutation")
        for i in range(k):
            if self.signs[i] not in (1, -1):
                raise ValueError("signs must be +1 or -1")
            if self.perm[self.perm[i]] != i:
                raise ValueError("perm is not self-inverse")
            if self.signs[i] * self.signs[self.perm[i]] != 1:
                raise ValueError("eps_i eps_tau(i) must equal 1")

    @property
    def k(self) -> int:
        return len(self.signs)

    @classmethod
    def identity(cls, k: int = 1) -> "Involution":
        return cls((1,) * k, tuple(range(k)))

    @classmethod
    def conjugation(cls, m: int = 1) -> "Involution":
        """Complex conjugation on C^m, stored as (re, im) pairs in R^{2m}."""
        return cls((1, -1) * m, tuple(range(2 * m)))

    @classmethod
    def swap(cls) -> "Involution":
        return cls((1, 1), (1, 0))

    @property
    def is_conjugation(self) -> bool:
        return (self.k % 2 == 0 and self.perm == tuple(range(self.k))
                and self.signs == (1, -1) * (self.k // 2))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[..., list(self.perm)] * np.asarray(self.signs, dtype=float)

    def to_dict(self) -> dict:
        return {"signs": list(self.signs), "perm": list(self.perm)}


# ----------------------------------------------------------------- quantizer


@dataclass(frozen=True)
class Quantizer:
    """Mark quantization {x} = floor(x/delta) delta on [0, kappa'), odd in x.

    kappa' = delta * ceil(kappa / delta).  A mark with some coordinate of
    absolute value >= kappa' becomes the default symbol omega (a single
    self-conjugate point, so the whole mark collapses).
    """

    delta: float = 2.0 ** -20
    kappa: float = 2.0 ** 20

    def __post_init__(self):
        if not (self.delta > 0 and self.kappa > 0):
            raise ValueError("delta and kappa must be positive")

    @property
    def kappa_prime(self) -> float:
        return self.delta * math.ceil(self.kappa / self.delta - 1e-12)

    def lattice(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Integer lattice indices l (value l*delta) and an omega flag per row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        a = np.abs(x)
        idx = np.floor(a / self.delta)
        # repair floating undershoot/overshoot so that l*delta <= |x| < (l+1)*delta
        idx = np.where((idx + 1) * self.delta <= a, idx + 1, idx)
        idx = np.where(idx * self.delta > a, idx - 1, idx)
        lat = (np.sign(x) * idx).astype(np.int64)
        omega = np.any(a >= self.kappa_prime, axis=-1)
        lat[omega] = 0
        return lat, omega

    def quantize(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lat, omega = self.lattice(x)
        return lat * self.delta, omega


# -------------------------------------------------------------- marked graph


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkedGraph:
    """Finite edge-marked graph on {0..n-1}.

    edges[i] = (u, v) with u < v; fwd[i] is the value of xi(u, v), bwd[i] the
    value of xi(v, u); cfwd/cbwd are the colors; omega flags quantized marks
    that fell outside the window (omega* = omega, so one flag per edge).
    """

    n: int
    edges: np.ndarray
    fwd: np.ndarray
    bwd: np.ndarray
    cfwd: np.ndarray
    cbwd: np.ndarray
    omega: np.ndarray
    involution: Involution = field(default_factory=Involution.identity)
    color_star: tuple[int, ...] | None = None

    def __post_init__(self):
        m = len(self.edges)
        for name in ("edges", "fwd", "bwd", "cfwd", "cbwd", "omega"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.edges.shape != (m, 2) or self.fwd.shape != (m, self.involution.k):
            raise ValueError("inconsistent edge/mark array shapes")
        if m and (np.any(self.edges[:, 0] >= self.edges[:, 1]) or self.edges.max() >= self.n
                  or self.edges.min() < 0):
            raise ValueError("edges must be pairs u < v inside range(n)")

    # construction ---------------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], values=None, colors=None,
                   involution: Involution | None = None, color_star=None,
                   reverse_values=None, reverse_colors=None) -> "MarkedGraph":
        """Build a graph; values[i] is the mark of edge i in the given orientation.

        The reverse mark is the involution unless reverse_values is supplied
        (useful only to build deliberately asymmetric inputs for validate).
        """
        inv = involution or Involution.identity()
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        m = len(e)
        if values is None:
            vals = np.ones((m, inv.k))
        else:
            vals = np.asarray(values, dtype=float).reshape(m, inv.k)
        cols = np.zeros(m, dtype=np.int64) if colors is None else np.asarray(colors, dtype=np.int64)
        star = np.arange(max(int(cols.max()) + 1 if m else 1, 1)) if color_star is None else np.asarray(color_star)
        rvals = inv.apply(vals) if reverse_values is None else np.asarray(reverse_values, float).reshape(m, inv.k)
        rcols = star[cols] if reverse_colors is None else np.asarray(reverse_colors, dtype=np.int64)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed in a MarkedGraph")
        flip = e[:, 0] > e[:, 1]
        e = np.where(flip[:, None], e[:, ::-1], e)
        fwd = np.where(flip[:, None], rvals, vals)
        bwd = np.where(flip[:, None], vals, rvals)
        cf = np.where(flip, rcols, cols)
        cb = np.where(flip, cols, rcols)
        order = np.lexsort((e[:, 1], e[:, 0])) if m else np.arange(0)
        return cls(n, e[order], fwd[order], bwd[order], cf[order], cb[order],
                   np.zeros(m, dtype=bool), inv,
                   None if color_star is None else tuple(int(c) for c in color_star))

    @classmethod
    def empty(cls, n: int, involution: Involution | None = None) -> "MarkedGraph":
        return cls.from_edges(n, [], involution=involution)

    # basic properties -----------------------------------------------------

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def k(self) -> int:
        return self.involution.k

    def star_color(self, c):
        if self.color_star is None:
            return c
        return np.asarray(self.color_star)[c]

    @cached_property
    def _csr(self):
        """Adjacency in CSR form: for slot s, nbr[s], edge[s], out[s] (True when
        the slot owner is edges[edge[s], 0])."""
        m = self.m
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        out = np.concatenate([np.ones(m, bool), np.zeros(m, bool)])
        order = np.lexsort((dst, src))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        return indptr, dst[order], eid[order], out[order]

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int, bool]]]:
        """adjacency[v] = [(u, edge index, v is the first endpoint), ...]."""
        indptr, nbr, eid, out = self._csr
        nl, el, ol = nbr.tolist(), eid.tolist(), out.tolist()
        return [list(zip(nl[indptr[v]:indptr[v + 1]], el[indptr[v]:indptr[v + 1]],
                         ol[indptr[v]:indptr[v + 1]])) for v in range(self.n)]

    @cached_property
    def degrees(self) -> np.ndarray:
        indptr = self._csr[0]
        return np.diff(indptr)

    def mark_value(self, e: int, out: bool) -> np.ndarray:
        return self.fwd[e] if out else self.bwd[e]

    def mark_key(self, e: int, out: bool) -> tuple:
        """Hashable key of the mark seen from the slot owner."""
        if self.omega[e]:
            return (int(self.cfwd[e] if out else self.cbwd[e]), "omega")
        v = self.fwd[e] if out else self.bwd[e]
        return (int(self.cfwd[e] if out else self.cbwd[e]), tuple(float(x) for x in v))

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.fwd, axis=1)

    def keep_edges(self, mask: np.ndarray) -> "MarkedGraph":
        mask = np.asarray(mask, dtype=bool)
        return MarkedGraph(self.n, self.edges[mask], self.fwd[mask], self.bwd[mask],
                           self.cfwd[mask], self.cbwd[mask], self.omega[mask],
                           self.involution, self.color_star)

    def induced(self, vertices: Sequence[int]) -> "MarkedGraph":
        """Induced subgraph, vertex vertices[i] becoming i."""
        vertices = np.asarray(vertices, dtype=np.int64)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[vertices] = np.arange(len(vertices))
        a, b = pos[self.edges[:, 0]], pos[self.edges[:, 1]]
        keep = (a >= 0) & (b >= 0)
        a, b = a[keep], b[keep]
        flip = a > b
        e = np.stack([np.where(flip, b, a), np.where(flip, a, b)], axis=1)
        fwd = np.where(flip[:, None], self.bwd[keep], self.fwd[keep])
        bwd = np.where(flip[:, None], self.fwd[keep], self.bwd[keep])
        cf = np.where(flip, self.cbwd[keep], self.cfwd[keep])
        cb = np.where(flip, self.cfwd[keep], self.cbwd[keep])
        order = np.lexsort((e[:, 1], e[:, 0])) if len(e) else np.arange(0)
        return MarkedGraph(len(vertices), e[order].reshape(-1, 2), fwd[order], bwd[order],
                           cf[order], cb[order], self.omega[keep][order], self.involution,
                           self.color_star)

    def bfs_distances(self, sources: Sequence[int], limit: int | None = None) -> dict[int, int]:
        dist = {int(s): 0 for s in sources}
        queue = deque(dist)
        adj = self.adjacency
        while queue:
            v = queue.popleft()
            dv = dist[v]
            if limit is not None and dv >= limit:
                continue
            for u, _, _ in adj[v]:
                if u not in dist:
                    dist[u] = dv + 1
                    queue.append(u)
        return dist

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        edges = []
        for i, (u, v) in enumerate(self.edges.tolist()):
            mark = {"color": int(self.cfwd[i]), "value": [float(x) for x in self.fwd[i]]}
            if self.omega[i]:
                mark["omega"] = True
            edges.append({"u": u, "v": v, "mark": mark})
        d = {"n": int(self.n), "edges": edges, "involution": self.involution.to_dict()}
        if self.color_star is not None:
            d["color_star"] = list(self.color_star)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MarkedGraph":
        inv = d.get("involution")
        inv = Involution(tuple(inv["signs"]), tuple(inv["perm"])) if inv else None
        es = d.get("edges", [])
        k = inv.k if inv else (len(es[0]["mark"]["value"]) if es else 1)
        inv = inv or Involution.identity(k)
        g = cls.from_edges(int(d["n"]), [(e["u"], e["v"]) for e in es],
                           [e["mark"]["value"] for e in es] if es else None,
                           [e["mark"].get("color", 0) for e in es] if es else None,
                           inv, d.get("color_star"))
        om = np.array([bool(e["mark"].get("omega", False)) for e in es], dtype=bool)
        if om.any():
            # from_edges sorted by (u, v); input edges are stored with u < v already
            key = {(min(e["u"], e["v"]), max(e["u"], e["v"])): bool(e["mark"].get("omega", False))
                   for e in es}
            om = np.array([key[(u, v)] for u, v in g.edges.tolist()], dtype=bool)
            g = MarkedGraph(g.n, g.edges, g.fwd, g.bwd, g.cfwd, g.cbwd, om, g.involution,
                            g.color_star)
        return g

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "MarkedGraph":
        return cls.from_dict(json.loads(s))


# --------------------------------------------------------------- diagnostics


def validate(graph: MarkedGraph, tol: float = 0.0) -> list[str]:
    """List violations of xi(u,v) = xi(v,u)* and of the hand-shaking lemma."""
    out = []
    inv = graph.involution
    expected = inv.apply(graph.fwd) if graph.m else graph.fwd
    for i in range(graph.m):
        u, v = graph.edges[i]
        if not np.all(np.abs(expected[i] - graph.bwd[i]) <= tol):
            out.append(f"asymmetric mark on edge ({u},{v}): xi(v,u) != xi(u,v)*")
        if graph.cbwd[i] != graph.star_color(graph.cfwd[i]):
            out.append(f"asymmetric color on edge ({u},{v})")
        if not (np.all(np.isfinite(graph.fwd[i])) and np.all(np.isfinite(graph.bwd[i]))):
            out.append(f"non-finite mark on edge ({u},{v})")
    # edge counting measure on colors: m(b) counts oriented edges with color b
    count = Counter(graph.cfwd.tolist()) + Counter(graph.cbwd.tolist())
    for b, c in sorted(count.items()):
        bs = int(graph.star_color(b))
        if count.get(bs, 0) != c:
            out.append(f"edge count of color {b} differs from its conjugate {bs}")
        if bs == b and c % 2:
            out.append(f"edge count of self-conjugate color {b} is odd")
    return out


def marked_degree(graph: MarkedGraph, v: int) -> Counter:
    """Counting measure of the marks xi(v, u) over neighbors u; keys are
    (color, value tuple)."""
    if not 0 <= v < graph.n:
        raise IndexError(f"vertex {v} out of range")
    return Counter(graph.mark_key(e, out) for _, e, out in graph.adjacency[v])


# ------------------------------------------------------------- transforms


def quantize_graph(graph: MarkedGraph, q: Quantizer) -> MarkedGraph:
    """Replace every mark value by its quantized value (omega flagged)."""
    if graph.m == 0:
        return graph
    f, of = q.quantize(graph.fwd)
    b, ob = q.quantize(graph.bwd)
    om = of | ob | graph.omega
    f[om] = 0.0
    b[om] = 0.0
    return MarkedGraph(graph.n, graph.edges, f + 0.0, b + 0.0, graph.cfwd, graph.cbwd, om,
                       graph.involution, graph.color_star)


def epsilon_truncate(graph: MarkedGraph, eps: float) -> MarkedGraph:
    """Keep exactly the edges with mark norm >= eps (closed threshold)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return graph.keep_edges(graph.norms >= eps)


def degree_truncate(graph: MarkedGraph, k: int) -> MarkedGraph:
    """Remove edges at a vertex of degree > k or at a vertex carrying a mark of
    norm > k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    bad = graph.degrees > k
    heavy = graph.norms > k
    touched = np.zeros(graph.n, dtype=bool)
    touched[graph.edges[heavy, 0]] = True
    touched[graph.edges[heavy, 1]] = True
    bad = bad | touched
    keep = ~(bad[graph.edges[:, 0]] | bad[graph.edges[:, 1]]) if graph.m else np.zeros(0, bool)
    return graph.keep_edges(keep)


def vertex_energy(graph: MarkedGraph) -> np.ndarray:
    """E_G(u) = sum over neighbors of |xi(u, v)|^2."""
    w = graph.norms ** 2
    energy = np.zeros(graph.n)
    np.add.at(energy, graph.edges[:, 0], w)
    np.add.at(energy, graph.edges[:, 1], w)
    return energy


def theta_truncate_network(graph: MarkedGraph, theta: float) -> MarkedGraph:
    """Drop edges with 0 < |xi| <= theta, then every edge touching a vertex of
    the input graph with energy >= theta^-2.

    Every vertex of the output has degree < theta^-4 and all marks lie in
    (theta, theta^-1), so the operator norm is at most theta^-2.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    small = (graph.norms > 0) & (graph.norms <= theta)
    hot = vertex_energy(graph) >= theta ** -2
    keep = ~small
    if graph.m:
        keep &= ~(hot[graph.edges[:, 0]] | hot[graph.edges[:, 1]])
    return graph.keep_edges(keep)


# ---------------------------------------------------------- matrix interface


def from_matrix(Y, tol: float = 1e-12) -> MarkedGraph:
    """Marked graph of a Hermitian matrix (diagonal ignored).

    Real input gives R marks with the identity involution; complex input gives
    C = R^2 marks with conjugation.
    """
    if issparse(Y):
        A = Y.tocsr()
        D = (A - A.conj().T)
        scale = max(abs(A).max() if A.nnz else 0.0, 1.0)
        if D.nnz and abs(D).max() > tol * scale:
            raise ValueError("matrix is not Hermitian")
        T = A.tocoo()
        mask = T.row < T.col
        rows, cols, vals = T.row[mask], T.col[mask], T.data[mask]
        n = A.shape[0]
        is_complex = np.iscomplexobj(vals)
    else:
        A = np.asarray(Y)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        scale = max(np.abs(A).max() if A.size else 0.0, 1.0)
        if np.abs(A - A.conj().T).max(initial=0.0) > tol * scale:
            raise ValueError("matrix is not Hermitian")
        n = A.shape[0]
        rows, cols = np.nonzero(np.triu(A, 1))
        vals = A[rows, cols]
        is_complex = np.iscomplexobj(A)
    nz = vals != 0
    rows, cols, vals = rows[nz], cols[nz], vals[nz]
    if is_complex:
        return MarkedGraph.from_edges(n, np.stack([rows, cols], 1),
                                      np.stack([vals.real, vals.imag], 1),
                                      involution=Involution.conjugation(1))
    return MarkedGraph.from_edges(n, np.stack([rows, cols], 1), vals.real.reshape(-1, 1))


def label_values(graph: MarkedGraph, which: str = "fwd") -> np.ndarray:
    """Matrix entries per label: (m, J) complex (conjugation marks) or real."""
    x = graph.fwd if which == "fwd" else graph.bwd
    if graph.involution.is_conjugation:
        return x[:, 0::2] + 1j * x[:, 1::2]
    return x.copy()


def to_operator(graph: MarkedGraph, label: int = 0, sparse: bool = False):
    """Hermitian matrix with entry (u, v) = coordinate `label` of xi(u, v)."""
    f = label_values(graph, "fwd")[:, label] if graph.m else np.zeros(0)
    b = label_values(graph, "bwd")[:, label] if graph.m else np.zeros(0)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    dtype = complex if graph.involution.is_conjugation else float
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    data = np.concatenate([f, b]).astype(dtype)
    M = csr_matrix((data, (rows, cols)), shape=(graph.n, graph.n), dtype=dtype)
    return M if sparse else M.toarray()


# ----------------------------------------------------------- canonical forms


def _mark_token(graph: MarkedGraph, e: int, out: bool, q: Quantizer | None) -> str:
    c = int(graph.cfwd[e] if out else graph.cbwd[e])
    if graph.omega[e]:
        return f"{c}:w"
    v = graph.fwd[e] if out else graph.bwd[e]
    if q is None:
        return f"{c}:" + ",".join(repr(float(x) + 0.0) for x in v)
    lat, om = q.lattice(v)
    if om[0]:
        return f"{c}:w"
    return f"{c}:" + ",".join(str(int(x)) for x in lat[0])


def _edge_tokens(graph: MarkedGraph, q: Quantizer | None) -> tuple[list[str], list[str]]:
    """Quantized mark tokens for both orientations of every edge."""
    if graph.m == 0:
        return [], []
    if q is None:
        lf = [_mark_token(graph, e, True, None) for e in range(graph.m)]
        lb = [_mark_token(graph, e, False, None) for e in range(graph.m)]
        return lf, lb
    latf, omf = q.lattice(graph.fwd)
    latb, omb = q.lattice(graph.bwd)
    om = omf | omb | graph.omega
    cf, cb = graph.cfwd.tolist(), graph.cbwd.tolist()
    lf, lb = [], []
    for e in range(graph.m):
        if om[e]:
            lf.append(f"{cf[e]}:w")
            lb.append(f"{cb[e]}:w")
        else:
            lf.append(f"{cf[e]}:" + ",".join(map(str, latf[e].tolist())))
            lb.append(f"{cb[e]}:" + ",".join(map(str, latb[e].tolist())))
    return lf, lb


class _Local:
    """Small relabeled graph with per-orientation mark tokens."""

    def __init__(self, graph: MarkedGraph, q: Quantizer | None):
        self.graph = graph
        self.n = graph.n
        lf, lb = _edge_tokens(graph, q)
        self.adj: list[list[tuple[int, str, str]]] = [[] for _ in range(graph.n)]
        for e, (u, v) in enumerate(graph.edges.tolist()):
            self.adj[u].append((v, lf[e], lb[e]))
            self.adj[v].append((u, lb[e], lf[e]))

    def is_tree(self) -> bool:
        return sum(len(a) for a in self.adj) // 2 == self.n - 1

    def tree_codes(self, root: int, parent: int = -1) -> dict[int, str]:
        """AHU codes of every vertex, children sorted by (edge tokens, code)."""
        order, par = [], {root: parent}
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            for u, _, _ in self.adj[v]:
                if u != par[v] and u not in par:
                    par[u] = v
                    stack.append(u)
        code: dict[int, str] = {}
        for v in reversed(order):
            parts = sorted(f"[{a}|{b}]{code[u]}" for u, a, b in self.adj[v] if par.get(u) == v and u != par[v])
            code[v] = "(" + "".join(parts) + ")"
        return code

    def tree_order(self, root: int, code: dict[int, str], parent: int = -1) -> list[int]:
        """BFS order with children sorted by their labeled code."""
        par = {root: parent}
        order = [root]
        i = 0
        while i < len(order):
            v = order[i]
            i += 1
            kids = [(f"[{a}|{b}]{code[u]}", u) for u, a, b in self.adj[v] if u != par[v]]
            for _, u in sorted(kids):
                par[u] = v
                order.append(u)
        return order

    # individualization-refinement for graphs with cycles

    def _refine(self, colors: list) -> list[int]:
        cur = colors
        ncls = len(set(cur))
        while True:
            sig = [(cur[v], tuple(sorted((a, b, cur[u]) for u, a, b in self.adj[v])))
                   for v in range(self.n)]
            ranks = {s: i for i, s in enumerate(sorted(set(sig)))}
            new = [ranks[s] for s in sig]
            if len(ranks) == ncls:
                return new
            cur, ncls = new, len(ranks)

    def _certificate(self, colors: list[int]) -> tuple:
        return tuple(sorted((colors[u], colors[v], a, b) for u in range(self.n)
                            for v, a, b in self.adj[u]))

    def canonical(self, initial: list, budget: int = 200000):
        """Lexicographically least certificate over the search tree, and the
        matching vertex order."""
        best: list = [None, None]
        nodes = [0]

        def search(colors):
            nodes[0] += 1
            if nodes[0] > budget:
                raise CapExceeded("canonical labeling search budget exceeded")
            colors = self._refine(colors)
            cells = Counter(colors)
            target = min((c for c, s in cells.items() if s > 1), default=None)
            if target is None:
                cert = self._certificate(colors)
                if best[0] is None or cert < best[0]:
                    best[0], best[1] = cert, colors
                return
            for v in [v for v in range(self.n) if colors[v] == target]:
                new = [2 * c + 1 for c in colors]
                new[v] = 2 * target
                search(new)

        search(list(initial))
        order = sorted(range(self.n), key=lambda v: best[1][v])
        return best[0], order


def _ball_vertices(graph: MarkedGraph, sources: Sequence[int], radius: int) -> list[int]:
    dist = graph.bfs_distances(sources, radius)
    return list(dist)


def _check_cap(size: int, cap: int | None):
    if cap is not None and size > cap:
        raise CapExceeded(f"neighborhood has {size} vertices, cap is {cap}")


def _rooted_encoding(local: _Local, root: int) -> tuple[bytes, list[int], bool]:
    if local.is_tree():
        code = local.tree_codes(root)
        return ("T" + code[root]).encode(), local.tree_order(root, code), True
    dist = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u, _, _ in local.adj[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    init = [(0 if v == root else 1, dist[v]) for v in range(local.n)]
    ranks = {s: i for i, s in enumerate(sorted(set(init)))}
    cert, order = local.canonical([ranks[s] for s in init])
    return ("G" + repr(cert)).encode(), order, False


@dataclass(frozen=True, eq=False)
class RootedNeighborhood:
    """Rooted marked graph truncated at depth h.

    `graph` is a representative; `encoding` identifies the isomorphism class
    (quantized marks) and is computed on demand.
    """

    graph: MarkedGraph
    root: int = 0
    depth: int = 0
    quantizer: Quantizer | None = None
    cap: int | None = DEFAULT_CAP

    @cached_property
    def _canon(self):
        _check_cap(self.graph.n, self.cap)
        local = _Local(self.graph, self.quantizer)
        return _rooted_encoding(local, self.root)

    @property
    def encoding(self) -> bytes:
        return self._canon[0]

    @property
    def is_tree(self) -> bool:
        return self.graph.m == self.graph.n - 1

    @property
    def hex(self) -> str:
        return self.encoding.hex()

    def canonical(self) -> "RootedNeighborhood":
        """Representative relabeled in canonical order, root 0."""
        order = self._canon[1]
        g = self.graph.induced(order)
        out = RootedNeighborhood(g, 0, self.depth, self.quantizer, self.cap)
        out.__dict__["_canon"] = (self.encoding, list(range(g.n)), self._canon[2])
        return out

    def __eq__(self, other):
        return isinstance(other, RootedNeighborhood) and self.encoding == other.encoding

    def __hash__(self):
        return hash(self.encoding)

    @property
    def root_degree(self) -> int:
        return int(self.graph.degrees[self.root])

    def to_dict(self) -> dict:
        return {"encoding": self.hex, "depth": self.depth, "root": int(self.root),
                "graph": self.graph.to_dict()}


def canonical_form(graph: MarkedGraph, root: int, h: int, q: Quantizer | None = None,
                   cap: int | None = DEFAULT_CAP) -> RootedNeighborhood:
    """Canonical depth-h neighborhood of root: the induced subgraph on the
    radius-h ball, marks quantized by q, relabeled canonically with root 0."""
    if h < 0:
        raise ValueError("depth must be nonnegative")
    q = q or Quantizer()
    verts = _ball_vertices(graph, [root], h)
    _check_cap(len(verts), cap)
    ball = quantize_graph(graph.induced(verts), q)
    return RootedNeighborhood(ball, 0, h, q, cap).canonical()


@dataclass(frozen=True, eq=False)
class EdgeRootedNeighborhood:
    """Edge-rooted marked graph (root edge (o, o') = (0, 1) in the canonical
    representative), restricted to the (h-1)-neighborhood of {o, o'}."""

    graph: MarkedGraph
    o: int
    o2: int
    depth: int
    quantizer: Quantizer | None = None
    cap: int | None = DEFAULT_CAP

    @cached_property
    def _canon(self):
        _check_cap(self.graph.n, self.cap)
        local = _Local(self.graph, self.quantizer)
        o, o2 = self.o, self.o2
        tok = next(((a, b) for u, a, b in local.adj[o] if u == o2), None)
        if tok is None:
            raise ValueError("root edge is not an edge of the graph")
        if local.is_tree():
            c1 = local.tree_codes(o, o2)
            c2 = local.tree_codes(o2, o)
            enc = f"E[{tok[0]}|{tok[1]}]{c1[o]}{c2[o2]}".encode()
            side1 = local.tree_order(o, c1, o2)
            side2 = local.tree_order(o2, c2, o)
            return enc, [o, o2] + side1[1:] + side2[1:], True
        d1 = self.graph.bfs_distances([o])
        d2 = self.graph.bfs_distances([o2])
        init = [(0 if v == o else 1 if v == o2 else 2, d1.get(v, -1), d2.get(v, -1))
                for v in range(local.n)]
        ranks = {s: i for i, s in enumerate(sorted(set(init)))}
        cert, order = local.canonical([ranks[s] for s in init])
        return ("F" + repr(cert)).encode(), order, False

    @property
    def encoding(self) -> bytes:
        return self._canon[0]

    @property
    def hex(self) -> str:
        return self.encoding.hex()

    @property
    def is_tree(self) -> bool:
        return self.graph.m == self.graph.n - 1

    def canonical(self) -> "EdgeRootedNeighborhood":
        order = self._canon[1]
        g = self.graph.induced(order)
        out = EdgeRootedNeighborhood(g, 0, 1, self.depth, self.quantizer, self.cap)
        out.__dict__["_canon"] = (self.encoding, list(range(g.n)), self._canon[2])
        return out

    def reversed(self) -> "EdgeRootedNeighborhood":
        return EdgeRootedNeighborhood(self.graph, self.o2, self.o, self.depth, self.quantizer,
                                      self.cap).canonical()

    def __eq__(self, other):
        return isinstance(other, EdgeRootedNeighborhood) and self.encoding == other.encoding

    def __hash__(self):
        return hash(self.encoding)

    def to_dict(self) -> dict:
        return {"encoding": self.hex, "depth": self.depth, "root_edge": [int(self.o), int(self.o2)],
                "graph": self.graph.to_dict()}


def edge_canonical_form(graph: MarkedGraph, o: int, o2: int, h: int, q: Quantizer | None = None,
                        cap: int | None = DEFAULT_CAP) -> EdgeRootedNeighborhood:
    """Canonical edge-rooted depth-h neighborhood of the oriented edge (o, o2)."""
    if h < 1:
        raise ValueError("edge-rooted depth must be >= 1")
    q = q or Quantizer()
    verts = _ball_vertices(graph, [o, o2], h - 1)
    verts = [o, o2] + [v for v in verts if v not in (o, o2)]
    _check_cap(len(verts), cap)
    sub = quantize_graph(graph.induced(verts), q)
    return EdgeRootedNeighborhood(sub, 0, 1, h, q, cap).canonical()


def restrict(g: RootedNeighborhood, h: int) -> RootedNeighborhood:
    """Depth-h restriction, recanonicalized."""
    return canonical_form(g.graph, g.root, h, g.quantizer or Quantizer(), g.cap)


# ------------------------------------------------------------ local distance


def _mark_distance(ga: MarkedGraph, ea: int, oa: bool, gb: MarkedGraph, eb: int, ob: bool) -> float:
    ca = ga.cfwd[ea] if oa else ga.cbwd[ea]
    cb = gb.cfwd[eb] if ob else gb.cbwd[eb]
    if ga.omega[ea] or gb.omega[eb]:
        return 0.0 if (ga.omega[ea] and gb.omega[eb] and ca == cb) else math.inf
    d = float(np.linalg.norm(ga.mark_value(ea, oa) - gb.mark_value(eb, ob)))
    return d + (1.0 if ca != cb else 0.0)


def _edge_cost(ga, ea, oa, gb, eb, ob) -> float:
    return max(_mark_distance(ga, ea, oa, gb, eb, ob), _mark_distance(ga, ea, not oa, gb, eb, not ob))


def _bottleneck(C: np.ndarray) -> float:
    """Smallest t such that {C <= t} contains a perfect matching."""
    k = C.shape[0]
    if k == 0:
        return 0.0
    vals = np.unique(C[np.isfinite(C)])
    lo, hi = 0, len(vals) - 1
    if len(vals) == 0:
        return math.inf

    def ok(t):
        M = csr_matrix((C <= t).astype(np.int8))
        return np.all(maximum_bipartite_matching(M, perm_type="column") >= 0)

    if not ok(vals[hi]):
        return math.inf
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(vals[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(vals[lo])


def _tree_cost(ga, a, pa, gb, b, pb, r) -> float:
    ka = [(u, e, o) for u, e, o in ga.adjacency[a] if u != pa]
    kb = [(u, e, o) for u, e, o in gb.adjacency[b] if u != pb]
    if r == 0:
        return 0.0
    if len(ka) != len(kb):
        return math.inf
    C = np.empty((len(ka), len(kb)))
    for i, (u, e, o) in enumerate(ka):
        for j, (w, f, p) in enumerate(kb):
            c = _edge_cost(ga, e, o, gb, f, p)
            C[i, j] = c if math.isinf(c) else max(c, _tree_cost(ga, u, a, gb, w, b, r - 1))
    return _bottleneck(C)


def _graph_cost(ga: MarkedGraph, gb: MarkedGraph) -> float:
    """Min over rooted isomorphisms (root 0 -> 0) of the max mark deviation."""
    if ga.n != gb.n or ga.m != gb.m:
        return math.inf
    da, db = ga.bfs_distances([0]), gb.bfs_distances([0])
    order = sorted(range(ga.n), key=lambda v: da[v])
    eab = {}
    for e, (u, v) in enumerate(ga.edges.tolist()):
        eab[(u, v)] = (e, True)
        eab[(v, u)] = (e, False)
    ebb = {}
    for e, (u, v) in enumerate(gb.edges.tolist()):
        ebb[(u, v)] = (e, True)
        ebb[(v, u)] = (e, False)
    best = [math.inf]
    psi: dict[int, int] = {}
    used: set[int] = set()

    def rec(i, cur):
        if cur >= best[0]:
            return
        if i == len(order):
            best[0] = cur
            return
        u = order[i]
        for v in range(gb.n):
            if v in used or db[v] != da[u] or gb.degrees[v] != ga.degrees[u]:
                continue
            c = cur
            okay = True
            for w, x in psi.items():
                ea = eab.get((u, w))
                eb = ebb.get((v, x))
                if (ea is None) != (eb is None):
                    okay = False
                    break
                if ea is not None:
                    c = max(c, _edge_cost(ga, ea[0], ea[1], gb, eb[0], eb[1]))
                    if c >= best[0]:
                        okay = False
                        break
            if okay:
                psi[u] = v
                used.add(v)
                rec(i + 1, c)
                del psi[u]
                used.discard(v)

    rec(0, 0.0)
    return best[0]


def _raw_ball(g: RootedNeighborhood, r: int) -> MarkedGraph:
    verts = _ball_vertices(g.graph, [g.root], r)
    verts = [g.root] + [v for v in verts if v != g.root]
    return g.graph.induced(verts)


def local_distance(g1: RootedNeighborhood, g2: RootedNeighborhood,
                   cap: int | None = DEFAULT_CAP) -> float:
    """inf over radii r <= min depth of 1/(1+r) + delta_r, where delta_r is the
    least max mark deviation over rooted isomorphisms of the r-balls."""
    _check_cap(g1.graph.n, cap)
    _check_cap(g2.graph.n, cap)
    best = 1.0
    for r in range(1, min(g1.depth, g2.depth) + 1):
        b1, b2 = _raw_ball(g1, r), _raw_ball(g2, r)
        if b1.n != b2.n or b1.m != b2.m:
            break
        if b1.m == b1.n - 1:
            cost = _tree_cost(b1, 0, -1, b2, 0, -1, r)
        else:
            cost = _graph_cost(b1, b2)
        if math.isinf(cost):
            break
        best = min(best, 1.0 / (1 + r) + cost)
    return best
